#include <doctest.h>

#include <cmath>
#include <string>

#include "otzsl/model.hpp"
#include "support.hpp"

using namespace otzsl;
using namespace otzsl::model;

namespace {

AttributeMatrix two_axes() {
  return AttributeMatrix({1, 2}, Matrix::from_rows({{1, 0}, {0, 1}}), {0}, {1});
}

// Predictor whose output is the constant `out` whatever the input.
PredictorParams constant_predictor(std::size_t feature_dim, const Vector& out, double gamma_sq) {
  PredictorParams f{MlpParams(feature_dim, 2, out.size()), gamma_sq};
  f.net.b2 = out;
  return f;
}

LabeledFeatures one_sample(const Vector& x, std::size_t label) {
  LabeledFeatures b;
  b.features = Matrix(1, x.size(), x);
  b.labels = {label};
  return b;
}

double max_abs_diff(const MlpParams& x, const MlpParams& y) {
  double worst = 0;
  const auto a = x.blocks(), b = y.blocks();
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) worst = std::max(worst, std::abs(a[k][i] - b[k][i]));
  return worst;
}

}  // namespace

TEST_CASE("generator forward: zero weights, ReLU kill and oracle agreement") {
  SeededRng rng(1);
  GeneratorParams g{MlpParams(6, 5, 4)};
  const Vector a{0.3, -1.0, 2.0}, z{0.5, 0.1, -0.2};
  CHECK(generator_forward(g, a, z) == Vector(4, 0.0));

  g.net.b1 = Vector(5, -100.0);
  for (double& v : g.net.w1.values()) v = 0.01;
  g.net.b2 = {1, 2, 3, 4};
  for (double& v : g.net.w2.values()) v = rng.gaussian();
  CHECK(generator_forward(g, a, z) == g.net.b2);

  for (int trial = 0; trial < 50; ++trial) {
    test::randomize(g.net, rng, 1.0);
    std::vector<double> x(a);
    x.insert(x.end(), z.begin(), z.end());
    const Vector got = generator_forward(g, a, z);
    const Vector want = test::mlp_oracle(g.net, x);
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-12);
  }
  CHECK_THROWS_AS(generator_forward(g, a, Vector{1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(generator_forward(g, Vector{1, 2}, Vector{1, 2}), std::invalid_argument);
}

TEST_CASE("mlp_forward matches the oracle row by row") {
  SeededRng rng(2);
  MlpParams net(5, 7, 3);
  test::randomize(net, rng, 0.8);
  const Matrix x = test::random_matrix(9, 5, rng);
  const Matrix y = mlp_forward(net, x);
  for (std::size_t r = 0; r < 9; ++r) {
    const auto want = test::mlp_oracle(net, test::row_vec(x, r));
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(y(r, k) - want[k]) <= 1e-12);
  }
}

TEST_CASE("NCA probability examples") {
  const AttributeMatrix a = two_axes();
  const Vector e1{1, 0};
  CHECK(nca_probability(e1, a, 0, 0.5) == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))).epsilon(1e-14));
  CHECK(std::abs(nca_probability(e1, a, 0, 0.5) - 0.62246) <= 1e-5);
  const Vector diag{1 / std::sqrt(2.0), 1 / std::sqrt(2.0)};
  CHECK(nca_probability(diag, a, 0, 0.5) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(nca_probability(diag, a, 1, 0.5) == doctest::Approx(0.5).epsilon(1e-14));

  const AttributeMatrix single({7}, Matrix::from_rows({{0.3, 0.4}}), {0}, {});
  CHECK(nca_probability(Vector{-5, 2}, single, 0, 3.0) == 1.0);

  CHECK_THROWS_AS(nca_probability(Vector{0, 0}, a, 0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(nca_probability(e1, a, 2, 0.5), std::invalid_argument);
}

TEST_CASE("property: NCA probabilities sum to one") {
  SeededRng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t classes = 1 + rng.uniform_index(9), d = 1 + rng.uniform_index(6);
    std::vector<std::int64_t> ids(classes);
    std::vector<std::size_t> seen(classes);
    for (std::size_t c = 0; c < classes; ++c) ids[c] = static_cast<std::int64_t>(c), seen[c] = c;
    const AttributeMatrix a(ids, test::random_matrix(classes, d, rng), seen, {});
    const Matrix y = test::random_matrix(1, d, rng);
    const double gamma_sq = 20 * rng.uniform();
    const Vector p = nca_probabilities(y.row(0), a, gamma_sq);
    double s = 0;
    for (double v : p) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("regularizer examples") {
  const AttributeMatrix a = two_axes();
  const PredictorParams half = constant_predictor(3, {1, 1}, 0.5);
  const LabeledFeatures r = one_sample({1, 2, 3}, 0);
  const LabeledFeatures s = one_sample({-1, 0, 2}, 1);
  CHECK(regularizer_loss(r, s, half, a).loss == doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));
  CHECK(std::abs(regularizer_loss(r, s, half, a).loss - 1.3863) <= 1e-4);

  const AttributeMatrix single({7}, Matrix::from_rows({{0.3, 0.4}}), {0}, {});
  SeededRng rng(4);
  PredictorParams f{MlpParams(3, 4, 2), 2.0};
  test::randomize(f.net, rng, 1.0);
  CHECK(regularizer_loss(r, one_sample({0.2, 0.1, 0.4}, 0), f, single).loss == 0.0);
}

TEST_CASE("regularizer: sample duplication, unlabeled rows and bounds") {
  SeededRng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    test::SmallProblem p = test::make_small_problem(rng, 3, 4, 5, 4, 6, 0, true);
    LabeledFeatures synth;
    synth.features = generate(p.g, p.attributes, p.synth);
    synth.labels = p.synth.classes;
    const double base = regularizer_loss(p.real, synth, p.f, p.attributes).loss;
    CHECK(base >= 0.0);

    LabeledFeatures real2 = p.real, synth2 = synth;
    real2.features = Matrix(2 * p.real.size(), 4);
    synth2.features = Matrix(2 * synth.size(), 4);
    real2.labels.clear();
    synth2.labels.clear();
    for (int copy = 0; copy < 2; ++copy) {
      for (std::size_t i = 0; i < p.real.size(); ++i) {
        std::copy(p.real.features.row(i).begin(), p.real.features.row(i).end(),
                  real2.features.row(copy * p.real.size() + i).begin());
      }
      for (std::size_t i = 0; i < synth.size(); ++i) {
        std::copy(synth.features.row(i).begin(), synth.features.row(i).end(),
                  synth2.features.row(copy * synth.size() + i).begin());
      }
      real2.labels.insert(real2.labels.end(), p.real.labels.begin(), p.real.labels.end());
      synth2.labels.insert(synth2.labels.end(), synth.labels.begin(), synth.labels.end());
    }
    CHECK(regularizer_loss(real2, synth2, p.f, p.attributes).loss == doctest::Approx(base).epsilon(1e-12));

    // Unlabeled reals are ignored.
    LabeledFeatures labeled_only;
    std::vector<double> rows;
    for (std::size_t i = 0; i < p.real.size(); ++i) {
      if (p.real.labels[i] == kUnlabeled) continue;
      labeled_only.labels.push_back(p.real.labels[i]);
      rows.insert(rows.end(), p.real.features.row(i).begin(), p.real.features.row(i).end());
    }
    labeled_only.features = Matrix(labeled_only.labels.size(), 4, rows);
    CHECK(regularizer_loss(labeled_only, synth, p.f, p.attributes).loss ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("regularizer clamps vanishing probabilities") {
  // gamma^2 large enough that the wrong class gets exp(-2000) relative mass.
  const AttributeMatrix a = two_axes();
  const PredictorParams f = constant_predictor(2, {1, 0}, 1000.0);
  const RegularizerValue v = regularizer_loss(one_sample({1, 1}, 1), one_sample({1, 1}, 0), f, a);
  CHECK(v.clamped == 1);
  CHECK(std::isfinite(v.loss));
  CHECK(v.loss == doctest::Approx(-std::log(kProbabilityFloor)).epsilon(1e-12));
}

TEST_CASE("total loss examples") {
  const ot::CostMatrix c(Matrix::from_rows({{0.2}}));
  CHECK(total_loss(Matrix::from_rows({{1}}), c, 4.0, 0.05) == doctest::Approx(0.4).epsilon(1e-15));
  SeededRng rng(6);
  Matrix cm(3, 3), plan(3, 3);
  for (double& v : cm.values()) v = rng.uniform();
  for (double& v : plan.values()) v = rng.uniform() / 9;
  const ot::CostMatrix cost(cm);
  CHECK(total_loss(plan, cost, 123.0, 0.0) == ot::transport_cost(plan, cost));
  CHECK(total_loss(plan, ot::CostMatrix(Matrix(3, 3)), 0.0, 0.7) == 0.0);
  CHECK_THROWS_AS(total_loss(plan, cost, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("objective agrees with its parts") {
  SeededRng rng(7);
  test::SmallProblem p = test::make_small_problem(rng, 3, 5, 6, 4, 5, 3, true);
  const double beta = 0.3;
  const ObjectiveValue v = objective({p.real, p.synth, p.plan}, p.g, p.f, p.attributes, beta);
  const Matrix generated = generate(p.g, p.attributes, p.synth);
  Matrix prefix(p.plan.cols(), 5);
  for (std::size_t m = 0; m < p.plan.cols(); ++m)
    std::copy(generated.row(m).begin(), generated.row(m).end(), prefix.row(m).begin());
  const ot::CostMatrix cost = ot::build_cost_matrix(p.real.features, prefix);
  LabeledFeatures synth{generated, p.synth.classes};
  const double reg = regularizer_loss(p.real, synth, p.f, p.attributes).loss;
  CHECK(v.transport_cost == doctest::Approx(ot::transport_cost(p.plan, cost)).epsilon(1e-13));
  CHECK(v.regularizer == doctest::Approx(reg).epsilon(1e-13));
  CHECK(v.total == doctest::Approx(total_loss(p.plan, cost, reg, beta)).epsilon(1e-13));
}

TEST_CASE("gradients match central finite differences") {
  SeededRng rng(8);
  for (double beta : {0.0, 0.05, 1.0}) {
    for (int config = 0; config < 4; ++config) {
      const std::size_t d = 2 + rng.uniform_index(3), D = 2 + rng.uniform_index(5);
      const std::size_t hidden = 2 + rng.uniform_index(7);
      test::SmallProblem p = test::make_small_problem(rng, d, D, hidden, 3 + rng.uniform_index(3),
                                                      3 + rng.uniform_index(4), rng.uniform_index(3),
                                                      config % 2 == 1);
      const test::FdReport r = test::finite_difference_check(p, beta);
      INFO("beta=" << beta << " worst=" << r.worst_block << " ratio=" << r.worst_ratio);
      CHECK(r.checked == p.g.net.parameter_count() + p.f.net.parameter_count());
      CHECK(r.worst_ratio <= 1.0);
    }
  }
}

TEST_CASE("zero plan column removes that sample's gradient when beta is 0") {
  SeededRng rng(9);
  test::SmallProblem p = test::make_small_problem(rng, 3, 4, 6, 3, 4, 0, false);
  for (std::size_t n = 0; n < p.plan.rows(); ++n) p.plan(n, 2) = 0.0;
  Gradients base, moved;
  backward({p.real, p.synth, p.plan}, p.g, p.f, p.attributes, 0.0, base);
  model::SynthInputs other = p.synth;
  for (double& v : other.noise.row(2)) v += 3.0;
  other.classes[2] = (other.classes[2] + 1) % 3;
  backward({p.real, other, p.plan}, p.g, p.f, p.attributes, 0.0, moved);
  CHECK(base.generator == moved.generator);
  CHECK(base.predictor == moved.predictor);
}

TEST_CASE("duplicated synthetic sample with split plan mass gives the same gradient") {
  SeededRng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    test::SmallProblem p = test::make_small_problem(rng, 3, 4, 6, 3, 4, 0, false);
    const std::size_t dup = rng.uniform_index(4);
    model::SynthInputs synth2 = p.synth;
    synth2.classes.push_back(p.synth.classes[dup]);
    synth2.noise = Matrix(5, 3);
    for (std::size_t m = 0; m < 4; ++m)
      std::copy(p.synth.noise.row(m).begin(), p.synth.noise.row(m).end(), synth2.noise.row(m).begin());
    std::copy(p.synth.noise.row(dup).begin(), p.synth.noise.row(dup).end(), synth2.noise.row(4).begin());
    Matrix plan2(4, 5);
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t m = 0; m < 4; ++m) plan2(n, m) = p.plan(n, m);
      plan2(n, dup) = p.plan(n, dup) / 2;
      plan2(n, 4) = p.plan(n, dup) / 2;
    }
    Gradients one, two;
    const double v1 = backward({p.real, p.synth, p.plan}, p.g, p.f, p.attributes, 0.0, one).total;
    const double v2 = backward({p.real, synth2, plan2}, p.g, p.f, p.attributes, 0.0, two).total;
    CHECK(v1 == doctest::Approx(v2).epsilon(1e-12));
    CHECK(max_abs_diff(one.generator, two.generator) <= 1e-12);
    CHECK(max_abs_diff(one.predictor, two.predictor) <= 1e-12);
  }
}

TEST_CASE("objective is invariant to scaling a real feature when beta is 0") {
  SeededRng rng(11);
  test::SmallProblem p = test::make_small_problem(rng, 3, 4, 6, 3, 4, 2, false);
  const double base = objective({p.real, p.synth, p.plan}, p.g, p.f, p.attributes, 0.0).total;
  for (double& v : p.real.features.row(1)) v *= 7.5;
  CHECK(objective({p.real, p.synth, p.plan}, p.g, p.f, p.attributes, 0.0).total ==
        doctest::Approx(base).epsilon(1e-13));
  const Matrix x = test::random_matrix(3, 4, rng), y = test::random_matrix(2, 4, rng);
  Matrix y_scaled = y;
  for (double& v : y_scaled.row(0)) v *= 0.01;
  const auto c1 = ot::build_cost_matrix(x, y), c2 = ot::build_cost_matrix(x, y_scaled);
  for (std::size_t n = 0; n < 3; ++n) CHECK(c1(n, 0) == doctest::Approx(c2(n, 0)).epsilon(1e-14));
}

TEST_CASE("backward rejects inconsistent shapes") {
  SeededRng rng(12);
  test::SmallProblem p = test::make_small_problem(rng, 3, 4, 6, 3, 4, 0, false);
  Gradients g;
  const Matrix wide(4, 9);
  CHECK_THROWS_AS(backward({p.real, p.synth, wide}, p.g, p.f, p.attributes, 0.1, g), std::invalid_argument);
  CHECK_THROWS_AS(backward({p.real, p.synth, p.plan}, p.g, p.f, p.attributes, -1.0, g),
                  std::invalid_argument);
  PredictorParams bad = p.f;
  bad.net = MlpParams(5, 6, 3);
  CHECK_THROWS_AS(backward({p.real, p.synth, p.plan}, p.g, bad, p.attributes, 0.1, g), std::invalid_argument);
}

TEST_CASE("adam: zero gradient, first-step closed form and determinism") {
  Vector params{0.5, -1.5, 2.0};
  const Vector zero(3, 0.0);
  AdamState state(3, 1e-3);
  std::span<double> pb[] = {params};
  std::span<const double> gb0[] = {zero};
  adam_step(pb, gb0, state);
  CHECK(params == Vector{0.5, -1.5, 2.0});
  CHECK(state.step == 1);

  Vector p1{0.5, -1.5, 2.0, 0.0};
  const Vector grad{0.3, -2e-3, 40.0, -7.0};
  AdamState s1(4, 1e-3);
  std::span<double> p1b[] = {p1};
  std::span<const double> gb[] = {grad};
  adam_step(p1b, gb, s1);
  const Vector start{0.5, -1.5, 2.0, 0.0};
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = start[i] - 1e-3 * grad[i] / (std::abs(grad[i]) + 1e-8);
    CHECK(std::abs(p1[i] - expect) <= 1e-15);
    CHECK(std::abs(std::abs(p1[i] - start[i]) - 1e-3) <= 1e-8);
  }

  Vector p2 = start;
  AdamState s2(4, 1e-3);
  std::span<double> p2b[] = {p2};
  adam_step(p2b, gb, s2);
  CHECK(p2 == p1);
  CHECK(s2 == s1);

  AdamState wrong(3, 1e-3);
  CHECK_THROWS_AS(adam_step(p2b, gb, wrong), std::invalid_argument);
}

TEST_CASE("init_params: Glorot bounds, zero biases, determinism") {
  SeededRng a(13), b(13);
  const MlpParams p = init_params(6, 9, 4, a);
  CHECK(p == init_params(6, 9, 4, b));
  CHECK(p.b1 == Vector(9, 0.0));
  CHECK(p.b2 == Vector(4, 0.0));
  const double s1 = std::sqrt(6.0 / 15.0), s2 = std::sqrt(6.0 / 13.0);
  for (double v : p.w1.values()) CHECK(std::abs(v) < s1);
  for (double v : p.w2.values()) CHECK(std::abs(v) < s2);
  CHECK_THROWS_AS(init_params(0, 3, 3, a), std::invalid_argument);
}

TEST_CASE("50 Adam steps on a fixed batch decrease the loss") {
  SeededRng rng(14);
  const std::size_t d = 8, D = 16, hidden = 128, classes = 5, batch = 16;
  test::SmallProblem p = test::make_small_problem(rng, d, D, 2, classes, batch, 0, false);
  p.g = init_generator(d, hidden, D, rng);
  p.f = init_predictor(D, hidden, d, 5.0, rng);
  p.plan = Matrix(batch, batch, 1.0 / (batch * batch));
  AdamState state(p.g.net.parameter_count() + p.f.net.parameter_count(), 1e-3);
  const ObjectiveBatch ob{p.real, p.synth, p.plan};
  double prev = objective(ob, p.g, p.f, p.attributes, 0.05).total;
  const double first = prev;
  for (int step = 0; step < 50; ++step) {
    Gradients grads;
    backward(ob, p.g, p.f, p.attributes, 0.05, grads);
    adam_step(p.g, p.f, grads, state);
    const double now = objective(ob, p.g, p.f, p.attributes, 0.05).total;
    CHECK(now <= prev + 1e-6);
    prev = now;
  }
  CHECK(prev < first);
}

TEST_CASE("checkpoint round trip is bit exact") {
  SeededRng rng(15);
  Checkpoint c;
  c.generator = init_generator(3, 5, 4, rng);
  c.predictor = init_predictor(4, 5, 3, 7.25, rng);
  c.adam = AdamState(c.generator.net.parameter_count() + c.predictor.net.parameter_count(), 3e-3);
  c.adam.step = 17;
  for (double& v : c.adam.first_moment) v = rng.gaussian();
  for (double& v : c.adam.second_moment) v = rng.uniform();
  const std::string bytes = encode_checkpoint(c);
  CHECK(bytes.substr(0, 8) == "OTZSLCKP");
  CHECK(decode_checkpoint(bytes) == c);
  CHECK(encode_checkpoint(decode_checkpoint(bytes)) == bytes);

  const auto dir = test::temp_dir("ckpt");
  save_checkpoint((dir / "c.bin").string(), c);
  CHECK(load_checkpoint((dir / "c.bin").string()) == c);
  CHECK(test::file_bytes(dir / "c.bin") == bytes);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint decoding rejects damaged input") {
  SeededRng rng(16);
  Checkpoint c;
  c.generator = init_generator(2, 3, 4, rng);
  c.predictor = init_predictor(4, 3, 2, 1.0, rng);
  c.adam = AdamState(c.generator.net.parameter_count() + c.predictor.net.parameter_count());
  const std::string bytes = encode_checkpoint(c);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad_magic), "checkpoint: bad magic", std::runtime_error);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), std::runtime_error);
  CHECK_THROWS_WITH_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), "checkpoint: truncated data",
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(decode_checkpoint(bytes + "x"), "checkpoint: trailing bytes", std::runtime_error);
  std::string zero_dim = bytes;
  for (int i = 12; i < 20; ++i) zero_dim[i] = 0;
  CHECK_THROWS_AS(decode_checkpoint(zero_dim), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/otzsl.bin"), std::runtime_error);
}
