#ifndef OTZSL_EVAL_HPP
#define OTZSL_EVAL_HPP

// Linear softmax classifier trained on generated (and optionally real seen)
// features, and the per-class metrics of the three zero-shot protocols.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "otzsl/dataset.hpp"
#include "otzsl/model.hpp"
#include "otzsl/training.hpp"

namespace otzsl::eval {

struct ClassifierConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
};

struct ClassifierParams {
  Matrix weights;  // classes x D
  Vector bias;     // classes
  // Dataset class index of each output row.
  std::vector<std::size_t> class_id_map;
};

// Mean cross-entropy of softmax(W x + b) minimized with Adam over shuffled
// minibatches. Labels are dataset class indices; every listed class needs at
// least one sample.
ClassifierParams train_softmax(const Matrix& features, const std::vector<std::size_t>& labels,
                               const std::vector<std::size_t>& classes,
                               const ClassifierConfig& config);

Matrix classifier_logits(const ClassifierParams& clf, const Matrix& features);
// Top-1 dataset class index per row.
std::vector<std::size_t> predict(const ClassifierParams& clf, const Matrix& features);
// The k highest-scoring class indices per row, best first.
std::vector<std::vector<std::size_t>> predict_top_k(const ClassifierParams& clf,
                                                    const Matrix& features, std::size_t k);

struct PerClassAccuracy {
  std::map<std::size_t, double> per_class;
  double mean = 0.0;
  // Listed classes with no test samples; left out of the mean.
  std::vector<std::size_t> excluded;
};

// Accuracy within each listed class, then the unweighted mean over classes.
PerClassAccuracy per_class_top1(const std::vector<std::size_t>& predictions,
                                const std::vector<std::size_t>& labels,
                                const std::vector<std::size_t>& classes);
// Same, counting a hit when the label is anywhere in the row's candidates.
PerClassAccuracy per_class_top_k(const std::vector<std::vector<std::size_t>>& candidates,
                                 const std::vector<std::size_t>& labels,
                                 const std::vector<std::size_t>& classes);

// 2 A_s A_u / (A_s + A_u), 0 when both are 0.
double harmonic_mean(double seen_accuracy, double unseen_accuracy);

struct EvalConfig {
  std::size_t synth_per_class = 100;
  // 0 disables top-k reporting.
  std::size_t top_k = 0;
  // Generalized protocol: train on real seen features as well as generated ones.
  bool include_real_seen = true;
  // Scale every feature (generated, real, test) to unit norm before the
  // classifier sees it. Off by default: at the default classifier learning
  // rate, unit-norm inputs leave the logits too small to move off the
  // class-frequency prior within the epoch budget.
  bool normalize_features = false;
  ClassifierConfig classifier;
  std::uint64_t seed = 0;
};

struct EvalReport {
  training::Mode mode = training::Mode::standard;
  // Keyed by dataset class id.
  std::map<std::int64_t, double> per_class;
  std::optional<double> seen_accuracy;
  double unseen_accuracy = 0.0;
  std::optional<double> harmonic;
  std::size_t top_k = 0;
  std::optional<double> top_k_accuracy;
  std::size_t synth_per_class = 0;
  std::uint64_t seed = 0;
  // Rows: true class, columns: predicted class, both in `confusion_classes` order.
  std::vector<std::int64_t> confusion_classes;
  std::vector<std::vector<std::size_t>> confusion;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Standard / transductive: U-way classifier on generated unseen features,
// scored on the unseen test split. Generalized: (S+U)-way classifier on
// generated features for every class plus real seen training features,
// scored on both test splits.
EvalReport evaluate(training::Mode mode, const model::GeneratorParams& g,
                    const AttributeMatrix& attributes, const FeatureDataset& data,
                    const EvalConfig& config);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace otzsl::eval

#endif  // OTZSL_EVAL_HPP
