#include "otzsl/dataset.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

namespace otzsl {

AttributeMatrix::AttributeMatrix(std::vector<std::int64_t> class_ids, Matrix attributes,
                                 std::vector<std::size_t> seen, std::vector<std::size_t> unseen)
    : ids_(std::move(class_ids)),
      values_(std::move(attributes)),
      seen_(std::move(seen)),
      unseen_(std::move(unseen)) {
  const std::size_t c = values_.rows();
  if (ids_.size() != c) throw std::invalid_argument("AttributeMatrix: id count differs from rows");
  if (c == 0 || values_.cols() == 0) throw std::invalid_argument("AttributeMatrix: empty table");
  if (!values_.all_finite()) throw std::invalid_argument("AttributeMatrix: non-finite attribute");
  if (std::set<std::int64_t>(ids_.begin(), ids_.end()).size() != c)
    throw std::invalid_argument("AttributeMatrix: duplicate class id");

  std::vector<int> owner(c, 0);
  for (auto idx : seen_) {
    if (idx >= c) throw std::invalid_argument("AttributeMatrix: seen index out of range");
    ++owner[idx];
  }
  for (auto idx : unseen_) {
    if (idx >= c) throw std::invalid_argument("AttributeMatrix: unseen index out of range");
    ++owner[idx];
  }
  for (std::size_t i = 0; i < c; ++i) {
    if (owner[i] != 1)
      throw std::invalid_argument("AttributeMatrix: class " + std::to_string(ids_[i]) +
                                  (owner[i] == 0 ? " is neither seen nor unseen"
                                                 : " is listed more than once"));
  }
  for (std::size_t i = 0; i < c; ++i) {
    if (!(norm(values_.row(i)) > 0.0))
      throw std::invalid_argument("AttributeMatrix: class " + std::to_string(ids_[i]) +
                                  " has a zero attribute vector");
    for (std::size_t j = 0; j < i; ++j) {
      const auto a = values_.row(i);
      const auto b = values_.row(j);
      if (std::equal(a.begin(), a.end(), b.begin()))
        throw std::invalid_argument("AttributeMatrix: classes " + std::to_string(ids_[j]) +
                                    " and " + std::to_string(ids_[i]) +
                                    " share an attribute vector");
    }
  }
}

std::optional<std::size_t> AttributeMatrix::index_of(std::int64_t id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

bool AttributeMatrix::is_seen(std::size_t cls) const {
  return std::find(seen_.begin(), seen_.end(), cls) != seen_.end();
}

namespace {

void validate_split(const LabeledFeatures& split, std::size_t dim, const char* name,
                    const std::vector<std::size_t>& allowed) {
  if (split.features.rows() != split.labels.size())
    throw std::invalid_argument(std::string(name) + ": feature rows differ from label count");
  if (split.features.cols() != dim && split.features.rows() > 0)
    throw std::invalid_argument(std::string(name) + ": wrong feature dimension");
  for (std::size_t i = 0; i < split.labels.size(); ++i) {
    if (std::find(allowed.begin(), allowed.end(), split.labels[i]) == allowed.end())
      throw std::invalid_argument(std::string(name) + ": row " + std::to_string(i) +
                                  " has a label outside the split's classes");
    if (!(norm(split.features.row(i)) > 0.0))
      throw std::invalid_argument(std::string(name) + ": row " + std::to_string(i) +
                                  " has zero norm");
  }
}

}  // namespace

void FeatureDataset::validate(const AttributeMatrix& attributes) const {
  if (feature_dim == 0) throw std::invalid_argument("FeatureDataset: zero feature dimension");
  validate_split(seen_train, feature_dim, "seen_train", attributes.seen());
  validate_split(seen_test, feature_dim, "seen_test", attributes.seen());
  validate_split(unseen_test, feature_dim, "unseen_test", attributes.unseen());
  if (unseen_unlabeled.rows() > 0 && unseen_unlabeled.cols() != feature_dim)
    throw std::invalid_argument("unseen_unlabeled: wrong feature dimension");
  for (std::size_t i = 0; i < unseen_unlabeled.rows(); ++i) {
    if (!(norm(unseen_unlabeled.row(i)) > 0.0))
      throw std::invalid_argument("unseen_unlabeled: row " + std::to_string(i) +
                                  " has zero norm");
  }
}

}  // namespace otzsl
