#include "otzsl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace otzsl::eval {

using nlohmann::json;

ClassifierParams train_softmax(const Matrix& features, const std::vector<std::size_t>& labels,
                               const std::vector<std::size_t>& classes,
                               const ClassifierConfig& config) {
  if (features.rows() != labels.size())
    throw std::invalid_argument("train_softmax: features and labels differ in length");
  if (classes.empty()) throw std::invalid_argument("train_softmax: no classes");
  if (std::set<std::size_t>(classes.begin(), classes.end()).size() != classes.size())
    throw std::invalid_argument("train_softmax: duplicate class in class list");
  if (config.batch_size < 1 || config.epochs < 1)
    throw std::invalid_argument("train_softmax: batch_size and epochs must be positive");

  std::map<std::size_t, std::size_t> row_of;
  for (std::size_t i = 0; i < classes.size(); ++i) row_of[classes[i]] = i;
  std::vector<std::size_t> target(labels.size());
  std::vector<std::size_t> count(classes.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = row_of.find(labels[i]);
    if (it == row_of.end())
      throw std::invalid_argument("train_softmax: sample " + std::to_string(i) +
                                  " has a label outside the class list");
    target[i] = it->second;
    ++count[it->second];
  }
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (count[c] == 0)
      throw std::invalid_argument("train_softmax: class index " + std::to_string(classes[c]) +
                                  " has no training samples");

  const std::size_t k = classes.size();
  const std::size_t dim = features.cols();
  ClassifierParams clf{Matrix(k, dim), Vector(k, 0.0), classes};
  model::AdamState adam(k * dim + k, config.learning_rate);
  SeededRng rng(config.seed);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);

  Matrix grad_w(k, dim);
  Vector grad_b(k), logits(k);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      std::fill(grad_w.values().begin(), grad_w.values().end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (std::size_t s = start; s < end; ++s) {
        const auto x = features.row(order[s]);
        for (std::size_t c = 0; c < k; ++c) logits[c] = dot(clf.weights.row(c), x) + clf.bias[c];
        const double lse = log_sum_exp(logits);
        for (std::size_t c = 0; c < k; ++c) {
          const double d = (std::exp(logits[c] - lse) - (c == target[order[s]] ? 1.0 : 0.0)) * inv;
          grad_b[c] += d;
          auto gw = grad_w.row(c);
          for (std::size_t j = 0; j < dim; ++j) gw[j] += d * x[j];
        }
      }
      const std::span<double> params[] = {clf.weights.values(), std::span<double>(clf.bias)};
      const std::span<const double> grads[] = {grad_w.values(), std::span<const double>(grad_b)};
      model::adam_step(params, grads, adam);
    }
  }
  return clf;
}

Matrix classifier_logits(const ClassifierParams& clf, const Matrix& features) {
  if (features.rows() > 0 && features.cols() != clf.weights.cols())
    throw std::invalid_argument("classifier_logits: feature dimension mismatch");
  Matrix out(features.rows(), clf.weights.rows());
  for (std::size_t r = 0; r < features.rows(); ++r)
    for (std::size_t c = 0; c < clf.weights.rows(); ++c)
      out(r, c) = dot(clf.weights.row(c), features.row(r)) + clf.bias[c];
  return out;
}

std::vector<std::size_t> predict(const ClassifierParams& clf, const Matrix& features) {
  const Matrix logits = classifier_logits(clf, features);
  std::vector<std::size_t> out(features.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out[r] = clf.class_id_map[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())];
  }
  return out;
}

std::vector<std::vector<std::size_t>> predict_top_k(const ClassifierParams& clf,
                                                    const Matrix& features, std::size_t k) {
  const Matrix logits = classifier_logits(clf, features);
  const std::size_t take = std::min(k, clf.class_id_map.size());
  std::vector<std::vector<std::size_t>> out(features.rows());
  std::vector<std::size_t> idx(clf.class_id_map.size());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    std::iota(idx.begin(), idx.end(), 0);
    // Stable so equal scores keep class-list order.
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t i = 0; i < take; ++i) out[r].push_back(clf.class_id_map[idx[i]]);
  }
  return out;
}

PerClassAccuracy per_class_top_k(const std::vector<std::vector<std::size_t>>& candidates,
                                 const std::vector<std::size_t>& labels,
                                 const std::vector<std::size_t>& classes) {
  if (candidates.size() != labels.size())
    throw std::invalid_argument("per_class accuracy: predictions and labels differ in length");
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> tally;  // class -> (hits, total)
  for (auto c : classes) tally[c] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = tally.find(labels[i]);
    if (it == tally.end()) continue;
    ++it->second.second;
    const auto& cand = candidates[i];
    if (std::find(cand.begin(), cand.end(), labels[i]) != cand.end()) ++it->second.first;
  }
  PerClassAccuracy out;
  double sum = 0.0;
  for (auto c : classes) {
    const auto [hits, total] = tally[c];
    if (total == 0) {
      out.excluded.push_back(c);
      continue;
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(total);
    out.per_class[c] = acc;
    sum += acc;
  }
  out.mean = out.per_class.empty() ? 0.0 : sum / static_cast<double>(out.per_class.size());
  return out;
}

PerClassAccuracy per_class_top1(const std::vector<std::size_t>& predictions,
                                const std::vector<std::size_t>& labels,
                                const std::vector<std::size_t>& classes) {
  std::vector<std::vector<std::size_t>> candidates(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) candidates[i] = {predictions[i]};
  return per_class_top_k(candidates, labels, classes);
}

double harmonic_mean(double seen_accuracy, double unseen_accuracy) {
  const double lo = std::min(seen_accuracy, unseen_accuracy);
  const double hi = std::max(seen_accuracy, unseen_accuracy);
  const double sum = lo + hi;
  if (sum == 0.0) return 0.0;
  // lo * (2 hi / sum) rather than 2 lo hi / sum: the ratio is exactly 1 when
  // lo == hi, so H(x, x) == x bit for bit, and argument order cannot matter.
  return lo * (2.0 * hi / sum);
}

namespace {

void normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double n = norm(row);
    if (n > 0.0)
      for (double& v : row) v /= n;
  }
}

void tally_confusion(EvalReport& report, const std::vector<std::size_t>& classes,
                     const std::vector<std::size_t>& labels,
                     const std::vector<std::size_t>& predictions) {
  std::map<std::size_t, std::size_t> pos;
  for (std::size_t i = 0; i < classes.size(); ++i) pos[classes[i]] = i;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto t = pos.find(labels[i]);
    const auto p = pos.find(predictions[i]);
    if (t != pos.end() && p != pos.end()) ++report.confusion[t->second][p->second];
  }
}

}  // namespace

EvalReport evaluate(training::Mode mode, const model::GeneratorParams& g,
                    const AttributeMatrix& attributes, const FeatureDataset& data,
                    const EvalConfig& config) {
  if (config.synth_per_class < 1) throw std::invalid_argument("evaluate: synth_per_class must be >= 1");
  if (data.unseen_test.size() == 0) throw std::invalid_argument("evaluate: unseen test split is empty");
  const bool generalized = mode == training::Mode::generalized;
  if (generalized && data.seen_test.size() == 0)
    throw std::invalid_argument("evaluate: generalized protocol needs a seen test split");
  if (attributes.unseen().empty()) throw std::invalid_argument("evaluate: no unseen classes");

  SeededRng rng(config.seed);
  ClassifierConfig clf_cfg = config.classifier;
  clf_cfg.seed = rng.split(1).seed();

  std::vector<std::size_t> classes;
  if (generalized) {
    classes.resize(attributes.class_count());
    std::iota(classes.begin(), classes.end(), 0);
  } else {
    classes = attributes.unseen();
  }

  LabeledFeatures train_set =
      training::synthesize_class_features(g, attributes, classes, config.synth_per_class, rng);
  if (generalized && config.include_real_seen && data.seen_train.size() > 0) {
    const Matrix& real = data.seen_train.features;
    std::vector<double> merged(train_set.features.values().begin(), train_set.features.values().end());
    merged.insert(merged.end(), real.values().begin(), real.values().end());
    train_set.features = Matrix(train_set.size() + data.seen_train.size(), data.feature_dim, std::move(merged));
    train_set.labels.insert(train_set.labels.end(), data.seen_train.labels.begin(),
                            data.seen_train.labels.end());
  }
  Matrix seen_test = data.seen_test.features;
  Matrix unseen_test = data.unseen_test.features;
  if (config.normalize_features) {
    normalize_rows(train_set.features);
    normalize_rows(seen_test);
    normalize_rows(unseen_test);
  }

  const ClassifierParams clf = train_softmax(train_set.features, train_set.labels, classes, clf_cfg);

  EvalReport report;
  report.mode = mode;
  report.synth_per_class = config.synth_per_class;
  report.seed = config.seed;
  report.top_k = config.top_k;
  for (auto c : classes) report.confusion_classes.push_back(attributes.id(c));
  report.confusion.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));

  const auto unseen_pred = predict(clf, unseen_test);
  const auto unseen_acc = per_class_top1(unseen_pred, data.unseen_test.labels, attributes.unseen());
  report.unseen_accuracy = unseen_acc.mean;
  for (const auto& [c, acc] : unseen_acc.per_class) report.per_class[attributes.id(c)] = acc;
  tally_confusion(report, classes, data.unseen_test.labels, unseen_pred);

  if (generalized) {
    const auto seen_pred = predict(clf, seen_test);
    const auto seen_acc = per_class_top1(seen_pred, data.seen_test.labels, attributes.seen());
    report.seen_accuracy = seen_acc.mean;
    report.harmonic = harmonic_mean(seen_acc.mean, unseen_acc.mean);
    for (const auto& [c, acc] : seen_acc.per_class) report.per_class[attributes.id(c)] = acc;
    tally_confusion(report, classes, data.seen_test.labels, seen_pred);
  }
  if (config.top_k > 0) {
    const auto cand = predict_top_k(clf, unseen_test, config.top_k);
    report.top_k_accuracy = per_class_top_k(cand, data.unseen_test.labels, attributes.unseen()).mean;
  }
  return report;
}

json report_to_json(const EvalReport& r) {
  json j;
  j["mode"] = std::string(training::to_string(r.mode));
  json per_class = json::object();
  for (const auto& [id, acc] : r.per_class) per_class[std::to_string(id)] = acc;
  j["per_class"] = per_class;
  if (r.seen_accuracy) j["A_s"] = *r.seen_accuracy;
  j["A_u"] = r.unseen_accuracy;
  if (r.harmonic) j["H"] = *r.harmonic;
  if (r.top_k_accuracy) {
    j["top_k"] = {{"k", r.top_k}, {"accuracy", *r.top_k_accuracy}};
  } else {
    j["top_k"] = nullptr;
  }
  j["n_synth_per_class"] = r.synth_per_class;
  j["seed"] = r.seed;
  j["confusion"] = {{"classes", r.confusion_classes}, {"counts", r.confusion}};
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.mode = training::parse_mode(j.at("mode").get<std::string>());
  for (const auto& [key, value] : j.at("per_class").items())
    r.per_class[std::stoll(key)] = value.get<double>();
  if (j.contains("A_s")) r.seen_accuracy = j["A_s"].get<double>();
  r.unseen_accuracy = j.at("A_u").get<double>();
  if (j.contains("H")) r.harmonic = j["H"].get<double>();
  if (!j.at("top_k").is_null()) {
    r.top_k = j["top_k"].at("k").get<std::size_t>();
    r.top_k_accuracy = j["top_k"].at("accuracy").get<double>();
  }
  r.synth_per_class = j.at("n_synth_per_class").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.confusion_classes = j.at("confusion").at("classes").get<std::vector<std::int64_t>>();
  r.confusion = j.at("confusion").at("counts").get<std::vector<std::vector<std::size_t>>>();
  return r;
}

}  // namespace otzsl::eval
