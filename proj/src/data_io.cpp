#include "otzsl/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

namespace otzsl::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string where(const fs::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view field, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (field.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
    throw FormatError(where(path, line) + ": invalid number '" + std::string(field) + "'");
  return v;
}

std::int64_t parse_int(std::string_view field, const fs::path& path, std::size_t line) {
  std::int64_t v = 0;
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, v);
  if (field.empty() || res.ec != std::errc() || res.ptr != end)
    throw FormatError(where(path, line) + ": invalid class id '" + std::string(field) + "'");
  return v;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// Reads "class_id,<prefix>1,...,<prefix>k" tables.
IdFeatures read_id_table(const fs::path& path, const std::string& prefix) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw FormatError(where(path, 1) + ": missing header");
  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header[0] != "class_id")
    throw FormatError(where(path, 1) + ": header must be class_id," + prefix + "1,...");
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != prefix + std::to_string(i))
      throw FormatError(where(path, 1) + ": expected column '" + prefix + std::to_string(i) + "'");
  }
  const std::size_t cols = header.size() - 1;
  std::size_t rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) rows += lines[i].empty() ? 0 : 1;

  IdFeatures out{Matrix(rows, cols), {}};
  out.class_ids.reserve(rows);
  std::size_t r = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != cols + 1)
      throw FormatError(where(path, i + 1) + ": expected " + std::to_string(cols + 1) +
                        " fields, found " + std::to_string(fields.size()));
    out.class_ids.push_back(parse_int(fields[0], path, i + 1));
    auto row = out.features.row(r++);
    for (std::size_t c = 0; c < cols; ++c) row[c] = parse_double(fields[c + 1], path, i + 1);
  }
  return out;
}

void write_id_table(const Matrix& m, const std::vector<std::int64_t>& ids, const std::string& prefix,
                    const fs::path& path) {
  if (ids.size() != m.rows())
    throw std::invalid_argument("write table: " + std::to_string(ids.size()) + " ids for " +
                                std::to_string(m.rows()) + " rows");
  std::string out = "class_id";
  for (std::size_t c = 0; c < m.cols(); ++c) out += "," + prefix + std::to_string(c + 1);
  out += '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out += std::to_string(ids[r]);
    for (double v : m.row(r)) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<std::int64_t> json_ids(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key) || !j[key].is_array())
    throw FormatError(path.filename().string() + ": '" + key + "' must be an array");
  std::vector<std::int64_t> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer())
      throw FormatError(path.filename().string() + ": '" + key + "' must hold integers");
    out.push_back(v.get<std::int64_t>());
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path attr_path = dir / "attributes.csv";
  const fs::path feat_path = dir / "features.csv";
  const fs::path split_path = dir / "split.json";
  for (const auto& p : {attr_path, feat_path, split_path})
    if (!fs::exists(p)) throw FormatError("missing dataset file " + p.string());

  const IdFeatures attrs = read_id_table(attr_path, "a_");
  const IdFeatures feats = read_id_table(feat_path, "x_");
  for (std::size_t r = 0; r < feats.features.rows(); ++r) {
    if (!(norm(feats.features.row(r)) > 0.0))
      throw FormatError(where(feat_path, r + 2) + ": feature row " + std::to_string(r) +
                        " has zero norm");
  }

  json split;
  try {
    split = json::parse(read_text_file(split_path));
  } catch (const json::parse_error& e) {
    throw FormatError(split_path.filename().string() + ": " + e.what());
  }
  static const std::set<std::string> kKeys = {"seen",           "unseen",
                                              "seen_train_rows", "seen_test_rows",
                                              "unseen_test_rows", "unseen_unlabeled_rows"};
  if (!split.is_object()) throw FormatError("split.json: top level must be an object");
  for (const auto& [key, _] : split.items())
    if (!kKeys.count(key)) throw FormatError("split.json: unknown key '" + key + "'");

  auto to_index = [&](std::int64_t id, const char* what) {
    std::size_t i = 0;
    for (; i < attrs.class_ids.size(); ++i)
      if (attrs.class_ids[i] == id) return i;
    throw FormatError("split.json: " + std::string(what) + " class " + std::to_string(id) +
                      " is absent from attributes.csv");
  };
  std::vector<std::size_t> seen, unseen;
  for (auto id : json_ids(split, "seen", split_path)) seen.push_back(to_index(id, "seen"));
  for (auto id : json_ids(split, "unseen", split_path)) unseen.push_back(to_index(id, "unseen"));

  Dataset data;
  try {
    data.attributes = AttributeMatrix(attrs.class_ids, attrs.features, seen, unseen);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("attributes.csv/split.json: ") + e.what());
  }
  const AttributeMatrix& A = data.attributes;
  const std::size_t D = feats.features.cols();
  data.features.feature_dim = D;

  std::vector<char> used(feats.features.rows(), 0);
  auto take_rows = [&](const char* key) {
    std::vector<std::size_t> rows;
    for (auto r : json_ids(split, key, split_path)) {
      if (r < 0 || static_cast<std::size_t>(r) >= feats.features.rows())
        throw FormatError("split.json: " + std::string(key) + " row " + std::to_string(r) +
                          " is outside features.csv");
      if (used[static_cast<std::size_t>(r)]++)
        throw FormatError("split.json: row " + std::to_string(r) + " appears in more than one split");
      rows.push_back(static_cast<std::size_t>(r));
    }
    return rows;
  };
  auto labeled = [&](const char* key, bool want_seen) {
    LabeledFeatures out{Matrix(0, D), {}};
    const auto rows = take_rows(key);
    out.features = Matrix(rows.size(), D);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::int64_t id = feats.class_ids[rows[i]];
      const auto cls = A.index_of(id);
      const std::string line = where(feat_path, rows[i] + 2);
      if (!cls) throw FormatError(line + ": class " + std::to_string(id) + " is not in attributes.csv");
      if (A.is_seen(*cls) != want_seen)
        throw FormatError(line + ": class " + std::to_string(id) + " listed in " + key +
                          " is not a" + (want_seen ? " seen" : "n unseen") + " class");
      out.labels.push_back(*cls);
      const auto src = feats.features.row(rows[i]);
      std::copy(src.begin(), src.end(), out.features.row(i).begin());
    }
    return out;
  };
  data.features.seen_train = labeled("seen_train_rows", true);
  data.features.seen_test = labeled("seen_test_rows", true);
  data.features.unseen_test = labeled("unseen_test_rows", false);
  const auto unlabeled = take_rows("unseen_unlabeled_rows");
  data.features.unseen_unlabeled = Matrix(unlabeled.size(), D);
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    const auto src = feats.features.row(unlabeled[i]);
    std::copy(src.begin(), src.end(), data.features.unseen_unlabeled.row(i).begin());
  }

  try {
    data.features.validate(A);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return data;
}

void save_dataset(const fs::path& dir, const Dataset& data) {
  const AttributeMatrix& A = data.attributes;
  const FeatureDataset& F = data.features;
  F.validate(A);
  fs::create_directories(dir);
  write_id_table(A.values(), A.ids(), "a_", dir / "attributes.csv");

  const std::size_t total = F.seen_train.size() + F.seen_test.size() + F.unseen_test.size() +
                            F.unseen_unlabeled.rows();
  Matrix all(total, F.feature_dim);
  std::vector<std::int64_t> ids;
  ids.reserve(total);
  json split;
  std::size_t row = 0;
  auto append = [&](const Matrix& m, const std::vector<std::size_t>* labels, const char* key) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i, ++row) {
      const auto src = m.row(i);
      std::copy(src.begin(), src.end(), all.row(row).begin());
      ids.push_back(labels ? A.id((*labels)[i]) : -1);
      rows.push_back(row);
    }
    split[key] = rows;
  };
  append(F.seen_train.features, &F.seen_train.labels, "seen_train_rows");
  append(F.seen_test.features, &F.seen_test.labels, "seen_test_rows");
  append(F.unseen_test.features, &F.unseen_test.labels, "unseen_test_rows");
  append(F.unseen_unlabeled, nullptr, "unseen_unlabeled_rows");
  json seen = json::array(), unseen = json::array();
  for (auto c : A.seen()) seen.push_back(A.id(c));
  for (auto c : A.unseen()) unseen.push_back(A.id(c));
  split["seen"] = seen;
  split["unseen"] = unseen;
  write_id_table(all, ids, "x_", dir / "features.csv");
  write_text_file(dir / "split.json", split.dump(2) + "\n");
}

void SyntheticSpec::validate() const {
  if (seen_classes < 2) throw std::invalid_argument("synthetic spec: S must be at least 2");
  if (unseen_classes < 1) throw std::invalid_argument("synthetic spec: U must be at least 1");
  if (attribute_dim < 1 || feature_dim < 1)
    throw std::invalid_argument("synthetic spec: dimensions must be positive");
  if (samples_per_class < 4)
    throw std::invalid_argument("synthetic spec: samples_per_class must be at least 4");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw std::invalid_argument("synthetic spec: noise_sigma must be non-negative");
}

std::pair<Dataset, SyntheticTruth> make_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  SeededRng rng(spec.seed);
  const std::size_t classes = spec.seen_classes + spec.unseen_classes;
  const std::size_t d = spec.attribute_dim;
  const std::size_t D = spec.feature_dim;

  // Classes are the columns of the attribute table in the usual d x C
  // layout; a class vector that repeats an earlier one or is all zero is
  // redrawn.
  Matrix attrs(classes, d);
  for (std::size_t c = 0; c < classes; ++c) {
    auto row = attrs.row(c);
    bool ok = false;
    for (int attempt = 0; attempt <= 100 && !ok; ++attempt) {
      for (double& v : row) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
      ok = std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; });
      for (std::size_t o = 0; o < c && ok; ++o) {
        const auto other = attrs.row(o);
        ok = !std::equal(row.begin(), row.end(), other.begin());
      }
    }
    if (!ok)
      throw std::runtime_error("make_synthetic_dataset: could not draw distinct attributes for class " +
                               std::to_string(c) + " after 100 redraws");
  }

  SyntheticTruth truth{Matrix(D, d), Matrix(classes, D)};
  for (double& v : truth.map.values()) v = rng.gaussian();
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t k = 0; k < D; ++k) truth.prototypes(c, k) = dot(truth.map.row(k), attrs.row(c));

  std::vector<std::int64_t> ids(classes);
  std::vector<std::size_t> seen, unseen;
  for (std::size_t c = 0; c < classes; ++c) {
    ids[c] = static_cast<std::int64_t>(c);
    (c < spec.seen_classes ? seen : unseen).push_back(c);
  }

  Dataset data;
  data.attributes = AttributeMatrix(ids, attrs, seen, unseen);
  FeatureDataset& F = data.features;
  F.feature_dim = D;
  const std::size_t n = spec.samples_per_class;
  const std::size_t first_part = static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(n)));
  std::vector<double> seen_train, seen_test, unseen_test, unlabeled;
  for (std::size_t c = 0; c < classes; ++c) {
    const bool is_seen = c < spec.seen_classes;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double>& dst = i < first_part ? (is_seen ? seen_train : unlabeled)
                                                : (is_seen ? seen_test : unseen_test);
      for (std::size_t k = 0; k < D; ++k)
        dst.push_back(truth.prototypes(c, k) + spec.noise_sigma * rng.gaussian());
      if (i < first_part) {
        if (is_seen) F.seen_train.labels.push_back(c);
      } else {
        (is_seen ? F.seen_test : F.unseen_test).labels.push_back(c);
      }
    }
  }
  const auto as_matrix = [D](std::vector<double>& v) {
    const std::size_t rows = v.size() / D;
    return Matrix(rows, D, std::move(v));
  };
  F.seen_train.features = as_matrix(seen_train);
  F.seen_test.features = as_matrix(seen_test);
  F.unseen_test.features = as_matrix(unseen_test);
  F.unseen_unlabeled = as_matrix(unlabeled);
  F.validate(data.attributes);
  return {std::move(data), std::move(truth)};
}

void export_features_csv(const Matrix& features, const std::vector<std::int64_t>& class_ids,
                         const fs::path& path) {
  write_id_table(features, class_ids, "x_", path);
}

IdFeatures read_features_csv(const fs::path& path) { return read_id_table(path, "x_"); }

void write_matrix_csv(const Matrix& m, const fs::path& path) {
  std::string out = "rows=" + std::to_string(m.rows()) + ",cols=" + std::to_string(m.cols()) + "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  write_text_file(path, out);
}

Matrix read_matrix_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw FormatError(where(path, 1) + ": empty file");
  std::size_t rows = 0, cols = 0;
  {
    const auto header = split_fields(lines[0]);
    auto dim = [&](std::string_view field, std::string_view key) -> std::size_t {
      if (field.substr(0, key.size()) != key)
        throw FormatError(where(path, 1) + ": header must be 'rows=N,cols=M'");
      const auto v = parse_int(field.substr(key.size()), path, 1);
      if (v <= 0) throw FormatError(where(path, 1) + ": dimensions must be positive");
      return static_cast<std::size_t>(v);
    };
    if (header.size() != 2) throw FormatError(where(path, 1) + ": header must be 'rows=N,cols=M'");
    rows = dim(header[0], "rows=");
    cols = dim(header[1], "cols=");
  }
  Matrix m(rows, cols);
  std::size_t r = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    if (r == rows) throw FormatError(where(path, i + 1) + ": more rows than the header declares");
    const auto fields = split_fields(lines[i]);
    if (fields.size() != cols)
      throw FormatError(where(path, i + 1) + ": expected " + std::to_string(cols) +
                        " values, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = parse_double(fields[c], path, i + 1);
    ++r;
  }
  if (r != rows)
    throw FormatError(where(path, lines.size()) + ": expected " + std::to_string(rows) +
                      " rows, found " + std::to_string(r));
  return m;
}

}  // namespace otzsl::io
