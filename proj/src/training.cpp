#include "otzsl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace otzsl::training {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::standard: return "standard";
    case Mode::generalized: return "generalized";
    case Mode::transductive: return "transductive";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  if (name == "standard") return Mode::standard;
  if (name == "generalized") return Mode::generalized;
  if (name == "transductive") return Mode::transductive;
  throw std::invalid_argument("unknown mode '" + std::string(name) +
                              "' (expected standard, generalized or transductive)");
}

std::string_view to_string(Branch branch) {
  return branch == Branch::optimal_transport ? "ot" : "transition";
}

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.hidden_dim = 128;
  c.batch_size = 16;
  c.learning_rate = 3e-3;
  // A training step only needs a near-optimal, feasible plan; 500 outer
  // steps stay within ~0.05% of the optimal cost at b = 128.
  c.ipot.max_outer_iterations = 500;
  return c;
}

void TrainConfig::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("train config: p must lie in [0, 1]");
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("train config: beta must be non-negative");
  if (!(gamma_sq > 0.0) || !std::isfinite(gamma_sq))
    throw std::invalid_argument("train config: gamma_sq must be positive");
  ipot.validate();
  if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be at least 2");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("train config: learning_rate must be non-negative");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be at least 1");
  if (hidden_dim < 1) throw std::invalid_argument("train config: hidden_dim must be positive");
}

double TrainTrace::epoch_mean_loss(std::size_t epoch) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : iterations) {
    if (r.epoch != epoch) continue;
    sum += r.total_loss;
    ++n;
  }
  if (n == 0) throw std::out_of_range("epoch_mean_loss: no iterations in epoch " + std::to_string(epoch));
  return sum / static_cast<double>(n);
}

std::size_t TrainTrace::transition_count() const {
  return static_cast<std::size_t>(std::count_if(iterations.begin(), iterations.end(), [](const auto& r) {
    return r.branch == Branch::transition;
  }));
}

LabeledFeatures sample_real_batch(const FeatureDataset& data, std::size_t batch_size,
                                  SeededRng& rng, bool with_unlabeled) {
  const std::size_t labeled = data.seen_train.size();
  const std::size_t pool = labeled + (with_unlabeled ? data.unseen_unlabeled.rows() : 0);
  if (pool == 0) throw std::invalid_argument("sample_real_batch: empty dataset");
  LabeledFeatures batch{Matrix(batch_size, data.feature_dim), std::vector<std::size_t>(batch_size)};
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t pick = rng.uniform_index(pool);
    std::span<const double> src;
    if (pick < labeled) {
      src = data.seen_train.features.row(pick);
      batch.labels[i] = data.seen_train.labels[pick];
    } else {
      src = data.unseen_unlabeled.row(pick - labeled);
      batch.labels[i] = kUnlabeled;
    }
    std::copy(src.begin(), src.end(), batch.features.row(i).begin());
  }
  return batch;
}

SynthBatch sample_synth_batch(const model::GeneratorParams& g, const AttributeMatrix& attributes,
                              std::span<const std::size_t> class_pool, std::size_t batch_size,
                              SeededRng& rng, const std::vector<std::size_t>* mirror) {
  SynthBatch batch;
  auto& classes = batch.inputs.classes;
  if (mirror) {
    classes = *mirror;
  } else {
    if (class_pool.empty()) throw std::invalid_argument("sample_synth_batch: empty class pool");
    classes.resize(batch_size);
    for (auto& c : classes) c = class_pool[rng.uniform_index(class_pool.size())];
  }
  for (auto c : classes)
    if (c >= attributes.class_count())
      throw std::invalid_argument("sample_synth_batch: class index " + std::to_string(c) +
                                  " outside the attribute table");
  const std::size_t d = attributes.dim();
  batch.inputs.noise = Matrix(classes.size(), d);
  for (double& v : batch.inputs.noise.values()) v = rng.gaussian();
  batch.features = model::generate(g, attributes, batch.inputs);
  return batch;
}

namespace {

model::SynthInputs concat(const model::SynthInputs& a, const model::SynthInputs& b, std::size_t d) {
  model::SynthInputs out;
  out.classes = a.classes;
  out.classes.insert(out.classes.end(), b.classes.begin(), b.classes.end());
  std::vector<double> noise(a.noise.values().begin(), a.noise.values().end());
  noise.insert(noise.end(), b.noise.values().begin(), b.noise.values().end());
  out.noise = Matrix(out.classes.size(), d, std::move(noise));
  return out;
}

}  // namespace

TrainResult train(const FeatureDataset& data, const AttributeMatrix& attributes,
                  const TrainConfig& config, const IterationCallback& on_iteration) {
  config.validate();
  data.validate(attributes);
  const bool transductive = config.mode == Mode::transductive;
  if (data.seen_train.size() == 0 && !transductive)
    throw std::invalid_argument("train: no labeled seen training samples");
  if (transductive && data.unseen_unlabeled.rows() == 0)
    throw std::invalid_argument("train: transductive mode needs unlabeled unseen samples");
  if (transductive && attributes.unseen().empty())
    throw std::invalid_argument("train: transductive mode needs unseen classes");

  const std::size_t d = attributes.dim();
  const std::size_t D = data.feature_dim;
  SeededRng rng(config.seed);

  TrainResult result;
  model::Checkpoint& ck = result.checkpoint;
  ck.generator = model::init_generator(d, config.hidden_dim, D, rng);
  ck.predictor = model::init_predictor(D, config.hidden_dim, d, config.gamma_sq, rng);
  ck.adam = model::AdamState(
      ck.generator.net.parameter_count() + ck.predictor.net.parameter_count(), config.learning_rate);

  const std::size_t pool = data.seen_train.size() + (transductive ? data.unseen_unlabeled.rows() : 0);
  const std::size_t per_epoch = (pool + config.batch_size - 1) / config.batch_size;
  const auto& unseen = attributes.unseen();

  std::size_t iteration = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t step = 0; step < per_epoch; ++step, ++iteration) {
      const LabeledFeatures real = sample_real_batch(data, config.batch_size, rng, transductive);
      std::vector<std::size_t> labeled;
      for (auto l : real.labels)
        if (l != kUnlabeled) labeled.push_back(l);
      const std::size_t unlabeled = real.size() - labeled.size();

      const SynthBatch seen_batch =
          sample_synth_batch(ck.generator, attributes, {}, 0, rng, &labeled);
      SynthBatch unseen_batch;
      if (!unseen.empty()) {
        unseen_batch = sample_synth_batch(ck.generator, attributes, unseen, config.batch_size, rng);
      } else {
        unseen_batch.inputs.noise = Matrix(0, d);
        unseen_batch.features = Matrix(0, D);
      }
      const model::SynthInputs synth = concat(seen_batch.inputs, unseen_batch.inputs, d);

      // Unlabeled real samples are coupled with as many unseen synthetic
      // samples; the transport columns are a prefix of `synth`.
      const std::size_t coupled = labeled.size() + unlabeled;
      Matrix generated(coupled, D);
      std::copy_n(seen_batch.features.values().begin(), seen_batch.features.size(),
                  generated.values().begin());
      std::copy_n(unseen_batch.features.values().begin(), unlabeled * D,
                  generated.values().begin() + static_cast<std::ptrdiff_t>(seen_batch.features.size()));

      const double coin = rng.uniform();
      Branch branch = Branch::optimal_transport;
      ot::TransportPlan plan;
      if (coin <= config.p || unlabeled > 0) {
        const ot::CostMatrix cost = ot::build_cost_matrix(real.features, generated);
        try {
          plan = ot::ipot_solve(cost, ot::Marginals::uniform(real.size(), coupled), config.ipot);
        } catch (const std::exception& e) {
          throw std::runtime_error("train: iteration " + std::to_string(iteration) + ": " + e.what());
        }
      } else {
        branch = Branch::transition;
        plan = ot::stochastic_transition_plan(real.labels, seen_batch.inputs.classes);
      }

      model::Gradients grads;
      model::ObjectiveValue value;
      try {
        value = model::backward({real, synth, plan.values}, ck.generator, ck.predictor, attributes,
                                config.beta, grads);
      } catch (const std::exception& e) {
        throw std::runtime_error("train: iteration " + std::to_string(iteration) + ": " + e.what());
      }
      model::adam_step(ck.generator, ck.predictor, grads, ck.adam);

      IterationRecord rec{iteration,          epoch,       branch, value.transport_cost,
                          value.regularizer, value.total};
      result.trace.iterations.push_back(rec);
      result.trace.clamped_probabilities += value.clamped;
      if (on_iteration) on_iteration(rec);
    }
    result.trace.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return result;
}

LabeledFeatures synthesize_class_features(const model::GeneratorParams& g,
                                          const AttributeMatrix& attributes,
                                          std::span<const std::size_t> classes,
                                          std::size_t per_class, SeededRng& rng) {
  if (per_class < 1) throw std::invalid_argument("synthesize_class_features: per_class must be >= 1");
  std::vector<std::size_t> list;
  list.reserve(classes.size() * per_class);
  for (auto c : classes) list.insert(list.end(), per_class, c);
  SynthBatch batch = sample_synth_batch(g, attributes, {}, 0, rng, &list);
  return {std::move(batch.features), std::move(batch.inputs.classes)};
}

}  // namespace otzsl::training
