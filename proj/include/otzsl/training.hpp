#ifndef OTZSL_TRAINING_HPP
#define OTZSL_TRAINING_HPP

// Alternating optimization of the generator/predictor pair. Each iteration
// draws a real batch, a synthetic seen batch mirroring the real labels and a
// synthetic unseen batch, then flips a p-coin: heads solves the transport
// plan with IPOT, tails uses the label-derived transition coupling. The plan
// is then held fixed for one Adam step on the full objective.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otzsl/dataset.hpp"
#include "otzsl/model.hpp"
#include "otzsl/ot.hpp"

namespace otzsl::training {

enum class Mode { standard, generalized, transductive };
std::string_view to_string(Mode mode);
// Throws std::invalid_argument for unknown names.
Mode parse_mode(std::string_view name);

enum class Branch { optimal_transport, transition };
std::string_view to_string(Branch branch);

struct TrainConfig {
  double p = 0.9;
  double beta = 0.05;
  double gamma_sq = 0.5;
  ot::IpotConfig ipot;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  Mode mode = Mode::standard;
  std::size_t hidden_dim = 4096;

  // Settings used for the synthetic desk-scale benchmark.
  static TrainConfig desk_scale();
  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  Branch branch = Branch::optimal_transport;
  double transport_cost = 0.0;
  double reg_loss = 0.0;
  double total_loss = 0.0;
};

struct TrainTrace {
  std::vector<IterationRecord> iterations;
  std::vector<double> epoch_seconds;
  std::size_t clamped_probabilities = 0;

  // Mean total loss over the iterations of `epoch` (0-based).
  double epoch_mean_loss(std::size_t epoch) const;
  std::size_t transition_count() const;
};

struct TrainResult {
  model::Checkpoint checkpoint;
  TrainTrace trace;
};

// b uniform draws with replacement from the seen training split, or from the
// seen training split followed by the unlabeled pool when `with_unlabeled`;
// pool samples carry kUnlabeled.
LabeledFeatures sample_real_batch(const FeatureDataset& data, std::size_t batch_size,
                                  SeededRng& rng, bool with_unlabeled = false);

struct SynthBatch {
  model::SynthInputs inputs;
  Matrix features;
};

// Draws fresh Gaussian noise per sample. With `mirror` the class list is
// copied one-for-one (and batch_size is ignored); otherwise classes are
// uniform over `class_pool`.
SynthBatch sample_synth_batch(const model::GeneratorParams& g, const AttributeMatrix& attributes,
                              std::span<const std::size_t> class_pool, std::size_t batch_size,
                              SeededRng& rng,
                              const std::vector<std::size_t>* mirror = nullptr);

using IterationCallback = std::function<void(const IterationRecord&)>;

TrainResult train(const FeatureDataset& data, const AttributeMatrix& attributes,
                  const TrainConfig& config, const IterationCallback& on_iteration = {});

// per_class generated features for each listed class, grouped by class in
// list order.
LabeledFeatures synthesize_class_features(const model::GeneratorParams& g,
                                          const AttributeMatrix& attributes,
                                          std::span<const std::size_t> classes,
                                          std::size_t per_class, SeededRng& rng);

}  // namespace otzsl::training

#endif  // OTZSL_TRAINING_HPP
