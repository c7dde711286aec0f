#ifndef OTZSL_DATASET_HPP
#define OTZSL_DATASET_HPP

// In-memory zero-shot datasets: the class attribute table with its
// seen/unseen partition, and the labeled/unlabeled feature splits.
//
// Classes are referred to internally by their row position in the attribute
// table ("class index"); the user-facing integer ids appear only in files.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "otzsl/core.hpp"

namespace otzsl {

// Label of a real sample whose class is unknown (transductive pool).
inline constexpr std::size_t kUnlabeled = std::numeric_limits<std::size_t>::max();

class AttributeMatrix {
 public:
  AttributeMatrix() = default;
  // `attributes` holds one row per class. Throws std::invalid_argument when
  // ids repeat, the seen/unseen sets overlap or miss a class, two classes
  // share an attribute vector, or a vector has zero norm.
  AttributeMatrix(std::vector<std::int64_t> class_ids, Matrix attributes,
                  std::vector<std::size_t> seen, std::vector<std::size_t> unseen);

  std::size_t dim() const { return values_.cols(); }
  std::size_t class_count() const { return values_.rows(); }
  std::span<const double> attribute(std::size_t cls) const { return values_.row(cls); }
  const Matrix& values() const { return values_; }

  const std::vector<std::int64_t>& ids() const { return ids_; }
  std::int64_t id(std::size_t cls) const { return ids_.at(cls); }
  std::optional<std::size_t> index_of(std::int64_t id) const;

  const std::vector<std::size_t>& seen() const { return seen_; }
  const std::vector<std::size_t>& unseen() const { return unseen_; }
  bool is_seen(std::size_t cls) const;

  friend bool operator==(const AttributeMatrix&, const AttributeMatrix&) = default;

 private:
  std::vector<std::int64_t> ids_;
  Matrix values_;
  std::vector<std::size_t> seen_;
  std::vector<std::size_t> unseen_;
};

struct LabeledFeatures {
  Matrix features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  friend bool operator==(const LabeledFeatures&, const LabeledFeatures&) = default;
};

struct FeatureDataset {
  std::size_t feature_dim = 0;
  LabeledFeatures seen_train;
  LabeledFeatures seen_test;
  LabeledFeatures unseen_test;
  Matrix unseen_unlabeled;

  // Throws std::invalid_argument on shape errors, labels outside their
  // split's class set, or zero-norm feature rows.
  void validate(const AttributeMatrix& attributes) const;

  friend bool operator==(const FeatureDataset&, const FeatureDataset&) = default;
};

}  // namespace otzsl

#endif  // OTZSL_DATASET_HPP
