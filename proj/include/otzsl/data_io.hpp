#ifndef OTZSL_DATA_IO_HPP
#define OTZSL_DATA_IO_HPP

// Dataset directories, the synthetic benchmark generator, and CSV
// serialization of matrices and labeled features.
//
// A dataset directory holds three files:
//   attributes.csv  header "class_id,a_1,...,a_d", one row per class
//   features.csv    header "class_id,x_1,...,x_D", one row per sample
//   split.json      {"seen": [ids], "unseen": [ids],
//                    "seen_train_rows": [...], "seen_test_rows": [...],
//                    "unseen_test_rows": [...], "unseen_unlabeled_rows": [...]}
// Row indices are 0-based positions in features.csv (header excluded).
// Floats are written with 17 significant digits so text round-trips are exact.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "otzsl/core.hpp"
#include "otzsl/dataset.hpp"

namespace otzsl::io {

// Malformed or inconsistent input file; the message carries file and line.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  AttributeMatrix attributes;
  FeatureDataset features;
};

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

struct SyntheticSpec {
  std::size_t seen_classes = 8;
  std::size_t unseen_classes = 4;
  std::size_t attribute_dim = 16;
  std::size_t feature_dim = 32;
  std::size_t samples_per_class = 60;
  double noise_sigma = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

// Hidden structure behind a synthetic dataset: prototype_c = map * a_c.
struct SyntheticTruth {
  Matrix map;         // feature_dim x attribute_dim
  Matrix prototypes;  // classes x feature_dim
};

// Binary attributes (density 0.5, duplicates and all-zero vectors redrawn up
// to 100 times), a Gaussian linear map to feature space and isotropic noise.
// Seen classes split 70/30 into train/test; unseen classes split 70/30 into
// the unlabeled pool and test. Class ids are 0..S+U-1, seen first.
std::pair<Dataset, SyntheticTruth> make_synthetic_dataset(const SyntheticSpec& spec);

// Features as "class_id,x_1,...,x_D", one id per row (-1 marks an
// unlabeled row).
void export_features_csv(const Matrix& features, const std::vector<std::int64_t>& class_ids,
                         const std::filesystem::path& path);
struct IdFeatures {
  Matrix features;
  std::vector<std::int64_t> class_ids;
};
IdFeatures read_features_csv(const std::filesystem::path& path);

// Plain matrices (costs, plans): first line "rows=N,cols=M", then N lines of
// M comma-separated values.
void write_matrix_csv(const Matrix& m, const std::filesystem::path& path);
Matrix read_matrix_csv(const std::filesystem::path& path);

// `v` with 17 significant digits ("%.17g"), locale independent.
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace otzsl::io

#endif  // OTZSL_DATA_IO_HPP
