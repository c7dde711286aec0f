#include <doctest.h>

#include <cmath>

#include "otzsl/data_io.hpp"
#include "otzsl/training.hpp"
#include "support.hpp"

using namespace otzsl;
using namespace otzsl::training;

namespace {

// Tiny hand-built dataset: `seen` classes with `per_class` training samples
// each, one unseen class with a few unlabeled and test samples.
io::Dataset tiny_dataset(SeededRng& rng, std::size_t seen, std::size_t per_class) {
  const std::size_t classes = seen + 1, d = 3, D = 4;
  std::vector<std::int64_t> ids(classes);
  std::vector<std::size_t> seen_idx;
  for (std::size_t c = 0; c < classes; ++c) {
    ids[c] = static_cast<std::int64_t>(c);
    if (c < seen) seen_idx.push_back(c);
  }
  Matrix attrs(classes, d);
  for (std::size_t c = 0; c < classes; ++c) attrs(c, c % d) = 1.0 + static_cast<double>(c / d);
  io::Dataset ds{AttributeMatrix(ids, attrs, seen_idx, {seen}), {}};
  FeatureDataset& f = ds.features;
  f.feature_dim = D;
  f.seen_train.features = test::random_matrix(seen * per_class, D, rng);
  for (std::size_t c = 0; c < seen; ++c) f.seen_train.labels.insert(f.seen_train.labels.end(), per_class, c);
  f.seen_test.features = test::random_matrix(seen, D, rng);
  for (std::size_t c = 0; c < seen; ++c) f.seen_test.labels.push_back(c);
  f.unseen_test.features = test::random_matrix(2, D, rng);
  f.unseen_test.labels = {seen, seen};
  f.unseen_unlabeled = test::random_matrix(3, D, rng);
  return ds;
}

io::Dataset small_synthetic(std::uint64_t seed) {
  io::SyntheticSpec spec;
  spec.seen_classes = 4;
  spec.unseen_classes = 2;
  spec.attribute_dim = 6;
  spec.feature_dim = 8;
  spec.samples_per_class = 20;
  spec.seed = seed;
  return io::make_synthetic_dataset(spec).first;
}

TrainConfig small_config() {
  TrainConfig c = TrainConfig::desk_scale();
  c.hidden_dim = 8;
  c.batch_size = 8;
  c.epochs = 2;
  c.ipot.max_outer_iterations = 50;
  return c;
}

}  // namespace

TEST_CASE("mode and branch names") {
  for (Mode m : {Mode::standard, Mode::generalized, Mode::transductive}) CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_mode("inductive"), std::invalid_argument);
  CHECK(to_string(Branch::optimal_transport) != to_string(Branch::transition));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK(c.p == 0.9);
  CHECK(c.ipot.lambda == 0.5);
  CHECK(c.gamma_sq == 0.5);
  CHECK(c.beta == 0.05);
  CHECK(c.batch_size == 128);
  CHECK(c.learning_rate == 1e-3);
  CHECK_NOTHROW(c.validate());
  c.p = 1.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("sample_real_batch examples") {
  SeededRng rng(1);
  io::Dataset ds = tiny_dataset(rng, 1, 1);
  const LabeledFeatures b = sample_real_batch(ds.features, 3, rng);
  REQUIRE(b.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(test::row_vec(b.features, i) == test::row_vec(ds.features.seen_train.features, 0));
    CHECK(b.labels[i] == 0);
  }
  SeededRng a(7), c(7);
  CHECK(sample_real_batch(ds.features, 5, a, true) == sample_real_batch(ds.features, 5, c, true));

  FeatureDataset empty;
  empty.feature_dim = 4;
  CHECK_THROWS_AS(sample_real_batch(empty, 3, rng), std::invalid_argument);
}

TEST_CASE("sample_real_batch draws classes uniformly") {
  SeededRng rng(2);
  io::Dataset ds = tiny_dataset(rng, 4, 5);
  const LabeledFeatures b = sample_real_batch(ds.features, 10000, rng);
  std::vector<int> counts(4, 0);
  for (auto l : b.labels) ++counts[l];
  for (int n : counts) {
    CHECK(n / 1e4 >= 0.23);
    CHECK(n / 1e4 <= 0.27);
  }
}

TEST_CASE("sample_real_batch with the unlabeled pool") {
  SeededRng rng(3);
  io::Dataset ds = tiny_dataset(rng, 2, 2);  // 4 labeled + 3 unlabeled
  const LabeledFeatures b = sample_real_batch(ds.features, 7000, rng, true);
  std::size_t unlabeled = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.labels[i] != kUnlabeled) continue;
    ++unlabeled;
    const auto row = test::row_vec(b.features, i);
    bool found = false;
    for (std::size_t r = 0; r < 3; ++r) found |= row == test::row_vec(ds.features.unseen_unlabeled, r);
    CHECK(found);
  }
  CHECK(unlabeled / 7000.0 == doctest::Approx(3.0 / 7.0).epsilon(0.05));
}

TEST_CASE("sample_synth_batch examples") {
  SeededRng rng(4);
  io::Dataset ds = tiny_dataset(rng, 5, 1);
  const model::GeneratorParams g = model::init_generator(3, 6, 4, rng);
  const std::vector<std::size_t> mirror{1, 1, 2, 2};
  const SynthBatch m = sample_synth_batch(g, ds.attributes, {}, 0, rng, &mirror);
  CHECK(m.inputs.classes == mirror);
  CHECK(m.features == model::generate(g, ds.attributes, m.inputs));
  CHECK(m.inputs.noise.rows() == 4);
  CHECK(m.inputs.noise.cols() == 3);

  const std::vector<std::size_t> pool{5};
  const SynthBatch p = sample_synth_batch(g, ds.attributes, pool, 9, rng);
  CHECK(p.inputs.classes == std::vector<std::size_t>(9, 5));

  SeededRng a(11), b(11);
  const std::vector<std::size_t> two{0, 3};
  CHECK(sample_synth_batch(g, ds.attributes, two, 6, a).features ==
        sample_synth_batch(g, ds.attributes, two, 6, b).features);

  const std::vector<std::size_t> bad{9};
  CHECK_THROWS_AS(sample_synth_batch(g, ds.attributes, bad, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_synth_batch(g, ds.attributes, {}, 2, rng), std::invalid_argument);
}

TEST_CASE("property: mirrored batches always admit the transition plan") {
  SeededRng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    io::Dataset ds = tiny_dataset(rng, 2 + rng.uniform_index(5), 1 + rng.uniform_index(4));
    const model::GeneratorParams g = model::init_generator(3, 4, 4, rng);
    const LabeledFeatures real = sample_real_batch(ds.features, 2 + rng.uniform_index(20), rng);
    const SynthBatch s = sample_synth_batch(g, ds.attributes, {}, 0, rng, &real.labels);
    const ot::TransportPlan t = ot::stochastic_transition_plan(real.labels, s.inputs.classes);
    CHECK(ot::check_marginals(t, ot::Marginals::uniform(real.size(), s.inputs.size()), 1e-12).passed);
  }
}

TEST_CASE("synthesize_class_features examples") {
  SeededRng rng(6);
  io::Dataset ds = tiny_dataset(rng, 3, 1);
  const std::vector<std::size_t> classes{2, 0};
  model::GeneratorParams zero{model::MlpParams(6, 4, 4)};
  zero.net.b2 = {0.5, -1, 2, 0};
  const LabeledFeatures out = synthesize_class_features(zero, ds.attributes, classes, 3, rng);
  CHECK(out.labels == std::vector<std::size_t>{2, 2, 2, 0, 0, 0});
  for (std::size_t r = 0; r < 6; ++r) CHECK(test::row_vec(out.features, r) == zero.net.b2);

  const model::GeneratorParams g = model::init_generator(3, 5, 4, rng);
  SeededRng a(3), b(3);
  CHECK(synthesize_class_features(g, ds.attributes, classes, 4, a) ==
        synthesize_class_features(g, ds.attributes, classes, 4, b));
  CHECK_THROWS_AS(synthesize_class_features(g, ds.attributes, classes, 0, a), std::invalid_argument);
}

TEST_CASE("train: branch extremes") {
  const io::Dataset ds = small_synthetic(1);
  TrainConfig c = small_config();
  c.p = 1.0;
  const TrainResult all_ot = train(ds.features, ds.attributes, c);
  CHECK(all_ot.trace.transition_count() == 0);
  CHECK(all_ot.trace.iterations.size() == 2 * ((ds.features.seen_train.size() + 7) / 8));

  c.p = 0.0;
  const TrainResult all_t = train(ds.features, ds.attributes, c);
  CHECK(all_t.trace.transition_count() == all_t.trace.iterations.size());
  for (const auto& r : all_t.trace.iterations) CHECK(std::isfinite(r.total_loss));
}

TEST_CASE("train: two runs give identical checkpoints and traces") {
  const io::Dataset ds = small_synthetic(2);
  for (Mode mode : {Mode::standard, Mode::transductive}) {
    TrainConfig c = small_config();
    c.mode = mode;
    c.seed = 99;
    const TrainResult a = train(ds.features, ds.attributes, c);
    const TrainResult b = train(ds.features, ds.attributes, c);
    CHECK(model::encode_checkpoint(a.checkpoint) == model::encode_checkpoint(b.checkpoint));
    REQUIRE(a.trace.iterations.size() == b.trace.iterations.size());
    for (std::size_t i = 0; i < a.trace.iterations.size(); ++i)
      CHECK(a.trace.iterations[i].total_loss == b.trace.iterations[i].total_loss);
    c.seed = 100;
    CHECK(model::encode_checkpoint(train(ds.features, ds.attributes, c).checkpoint) !=
          model::encode_checkpoint(a.checkpoint));
  }
}

TEST_CASE("train: OT-branch frequency over 10^4 iterations") {
  SeededRng rng(7);
  const io::Dataset ds = tiny_dataset(rng, 2, 2);
  TrainConfig c = small_config();
  c.hidden_dim = 2;
  c.batch_size = 2;
  c.epochs = 5000;  // two iterations per epoch
  c.ipot.max_outer_iterations = 5;
  const TrainResult r = train(ds.features, ds.attributes, c);
  REQUIRE(r.trace.iterations.size() == 10000);
  const double ot_fraction = 1.0 - static_cast<double>(r.trace.transition_count()) / 1e4;
  CHECK(ot_fraction >= 0.88);
  CHECK(ot_fraction <= 0.92);
}

TEST_CASE("train: a frozen generator keeps its initialization") {
  const io::Dataset ds = small_synthetic(3);
  TrainConfig c = small_config();
  c.p = 1.0;
  c.learning_rate = 0.0;
  c.hidden_dim = 32;  // at width 8 a fully dead ReLU layer is likely for some input
  const TrainResult r = train(ds.features, ds.attributes, c);
  SeededRng rng(c.seed);
  const model::GeneratorParams g0 = model::init_generator(6, c.hidden_dim, 8, rng);
  const model::PredictorParams f0 = model::init_predictor(8, c.hidden_dim, 6, c.gamma_sq, rng);
  CHECK(r.checkpoint.generator == g0);
  CHECK(r.checkpoint.predictor == f0);
  // Each iteration's transport cost depends only on its batch: replaying the
  // run reproduces it exactly.
  const TrainResult again = train(ds.features, ds.attributes, c);
  for (std::size_t i = 0; i < r.trace.iterations.size(); ++i)
    CHECK(r.trace.iterations[i].transport_cost == again.trace.iterations[i].transport_cost);
}

TEST_CASE("train: transductive batches with unlabeled samples use the OT branch") {
  const io::Dataset ds = small_synthetic(4);
  TrainConfig c = small_config();
  c.mode = Mode::transductive;
  c.p = 0.0;
  c.epochs = 3;
  std::size_t ot_steps = 0;
  const TrainResult r = train(ds.features, ds.attributes, c, [&](const IterationRecord& rec) {
    ot_steps += rec.branch == Branch::optimal_transport ? 1 : 0;
  });
  // Unlabeled rows are 70% of unseen data; a batch of 8 almost surely holds one.
  CHECK(ot_steps > 0);
  CHECK(ot_steps + r.trace.transition_count() == r.trace.iterations.size());
  const std::size_t pool = ds.features.seen_train.size() + ds.features.unseen_unlabeled.rows();
  CHECK(r.trace.iterations.size() == 3 * ((pool + 7) / 8));
}

TEST_CASE("train: input errors") {
  const io::Dataset ds = small_synthetic(5);
  TrainConfig c = small_config();
  FeatureDataset no_pool = ds.features;
  no_pool.unseen_unlabeled = Matrix(0, 8);
  c.mode = Mode::transductive;
  CHECK_THROWS_AS(train(no_pool, ds.attributes, c), std::invalid_argument);
  c.mode = Mode::standard;
  FeatureDataset no_train = ds.features;
  no_train.seen_train = {Matrix(0, 8), {}};
  CHECK_THROWS_AS(train(no_train, ds.attributes, c), std::invalid_argument);
  c.p = -1;
  CHECK_THROWS_AS(train(ds.features, ds.attributes, c), std::invalid_argument);
}

TEST_CASE("train: epoch-mean loss falls by at least 20% on the synthetic benchmark") {
  const auto [ds, truth] = io::make_synthetic_dataset({});
  TrainConfig c = TrainConfig::desk_scale();
  c.epochs = 10;
  const TrainResult r = train(ds.features, ds.attributes, c);
  const double first = r.trace.epoch_mean_loss(0), last = r.trace.epoch_mean_loss(c.epochs - 1);
  INFO("first=" << first << " last=" << last);
  CHECK(last <= 0.8 * first);
  CHECK(r.trace.epoch_seconds.size() == c.epochs);
}
