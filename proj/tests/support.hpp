#ifndef OTZSL_TESTS_SUPPORT_HPP
#define OTZSL_TESTS_SUPPORT_HPP

// Independent reference implementations and fixtures shared by the unit
// tests and the acceptance binary. Oracles here are written as plain scalar
// loops and never call the library routine they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "otzsl/core.hpp"
#include "otzsl/dataset.hpp"
#include "otzsl/model.hpp"

namespace otzsl::test {

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("otzsl_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline double cosine_distance_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  return 1.0 - xy / (std::sqrt(xx) * std::sqrt(yy));
}

inline std::vector<double> row_vec(const Matrix& m, std::size_t r) {
  return {m.row(r).begin(), m.row(r).end()};
}

// W2 relu(W1 x + b1) + b2, element by element.
inline std::vector<double> mlp_oracle(const model::MlpParams& p, const std::vector<double>& x) {
  std::vector<double> h(p.hidden_dim), out(p.output_dim);
  for (std::size_t j = 0; j < p.hidden_dim; ++j) {
    double s = p.b1[j];
    for (std::size_t i = 0; i < p.input_dim; ++i) s += p.w1(j, i) * x[i];
    h[j] = s > 0 ? s : 0;
  }
  for (std::size_t k = 0; k < p.output_dim; ++k) {
    double s = p.b2[k];
    for (std::size_t j = 0; j < p.hidden_dim; ++j) s += p.w2(k, j) * h[j];
    out[k] = s;
  }
  return out;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, SeededRng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.gaussian();
  return m;
}

inline void randomize(model::MlpParams& p, SeededRng& rng, double scale) {
  for (auto block : p.blocks())
    for (double& v : block) v = scale * rng.gaussian();
}

// A small random instance of the training objective.
struct SmallProblem {
  AttributeMatrix attributes;
  LabeledFeatures real;
  model::SynthInputs synth;
  Matrix plan;  // real x (prefix of synth)
  model::GeneratorParams g;
  model::PredictorParams f;
};

// `coupled` synthetic samples are in the plan; `extra` more enter only the
// regularizer. Some real samples are unlabeled when `with_unlabeled`.
inline SmallProblem make_small_problem(SeededRng& rng, std::size_t d, std::size_t D, std::size_t hidden,
                                       std::size_t classes, std::size_t n_real, std::size_t extra,
                                       bool with_unlabeled) {
  Matrix attrs = random_matrix(classes, d, rng);
  std::vector<std::int64_t> ids(classes);
  std::vector<std::size_t> seen, unseen;
  for (std::size_t c = 0; c < classes; ++c) {
    ids[c] = static_cast<std::int64_t>(10 + c);
    (c + 1 < classes || classes == 1 ? seen : unseen).push_back(c);
  }
  SmallProblem p{AttributeMatrix(ids, attrs, seen, unseen), {}, {}, {}, {}, {}};
  p.real.features = random_matrix(n_real, D, rng);
  for (std::size_t i = 0; i < n_real; ++i)
    p.real.labels.push_back(with_unlabeled && i % 3 == 2 ? kUnlabeled : seen[rng.uniform_index(seen.size())]);
  const std::size_t m = n_real + extra;
  for (std::size_t i = 0; i < m; ++i) p.synth.classes.push_back(rng.uniform_index(classes));
  p.synth.noise = random_matrix(m, d, rng);
  p.plan = Matrix(n_real, n_real);
  for (double& v : p.plan.values()) v = rng.uniform() / static_cast<double>(n_real * n_real);
  p.g.net = model::MlpParams(2 * d, hidden, D);
  p.f.net = model::MlpParams(D, hidden, d);
  p.f.gamma_sq = 0.5 + rng.uniform();
  randomize(p.g.net, rng, 0.7);
  randomize(p.f.net, rng, 0.7);
  return p;
}

// Central differences (step h) of the objective against the analytic
// gradient over every parameter of g and f. An entry passes when
// |analytic - numeric| <= rel * max(|analytic|, |numeric|, floor); returns the
// largest ratio of the error to that bound (<= 1 means every entry passed).
struct FdReport {
  double worst_ratio = 0.0;
  std::string worst_block;
  std::size_t checked = 0;
};

inline FdReport finite_difference_check(SmallProblem& p, double beta, double h = 1e-5,
                                        double rel = 1e-4, double floor = 1e-4) {
  const model::ObjectiveBatch batch{p.real, p.synth, p.plan};
  model::Gradients grads;
  model::backward(batch, p.g, p.f, p.attributes, beta, grads);
  const auto value = [&] { return model::objective(batch, p.g, p.f, p.attributes, beta).total; };

  FdReport report;
  const char* names[] = {"W1", "b1", "W2", "b2"};
  const auto sweep = [&](model::MlpParams& net, const model::MlpParams& grad, const std::string& who) {
    auto blocks = net.blocks();
    const auto gblocks = grad.blocks();
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t i = 0; i < blocks[b].size(); ++i) {
        double& w = blocks[b][i];
        const double saved = w;
        w = saved + h;
        const double up = value();
        w = saved - h;
        const double down = value();
        w = saved;
        const double numeric = (up - down) / (2 * h);
        const double analytic = gblocks[b][i];
        const double bound = rel * std::max({std::abs(analytic), std::abs(numeric), floor});
        const double ratio = std::abs(analytic - numeric) / bound;
        ++report.checked;
        if (ratio > report.worst_ratio) {
          report.worst_ratio = ratio;
          report.worst_block = who + "." + names[b] + "[" + std::to_string(i) + "]";
        }
      }
    }
  };
  sweep(p.g.net, grads.generator, "generator");
  sweep(p.f.net, grads.predictor, "predictor");
  return report;
}

}  // namespace otzsl::test

#endif  // OTZSL_TESTS_SUPPORT_HPP
