#ifndef OTZSL_CORE_HPP
#define OTZSL_CORE_HPP

// Dense row-major matrices, vector helpers and the seeded random stream shared
// by every other part of the library. Everything is 64-bit floating point.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace otzsl {

using Vector = std::vector<double>;

// Raised when a computation produces (or would produce) a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  // Matrix::from_rows({{1, 2}, {3, 4}}); all rows must have equal length.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool all_finite() const;
  Matrix transposed() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> x, std::span<const double> y);
double norm(std::span<const double> x);

// 1 - cos(x, y). Throws std::invalid_argument on length mismatch or a
// zero-norm argument.
double cosine_distance(std::span<const double> x, std::span<const double> y);

// Row-wise softmax with per-row max subtraction. Throws NumericalError on
// non-finite input.
Matrix softmax_rows(const Matrix& m);

// log(sum(exp(v))) computed stably.
double log_sum_exp(std::span<const double> v);

// Deterministic random stream built on SplitMix64 (Steele, Lea & Flood 2014):
// the state advances by the golden-ratio increment 0x9E3779B97F4A7C15 and
// each output is the state passed through the published variant-13 mixer.
// Uniforms take the top 53 bits; Gaussians use Box-Muller with the second
// draw of each pair cached.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double uniform();
  // Uniform on the open interval (0, 1).
  double uniform_open();
  // Uniform integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);
  double gaussian();

  // Independent stream for worker `index`: seeded with seed XOR index.
  SeededRng split(std::uint64_t index) const { return SeededRng(seed_ ^ index); }

  friend bool operator==(const SeededRng&, const SeededRng&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// n standard-normal draws. Throws std::invalid_argument when n == 0.
Vector sample_gaussian(SeededRng& rng, std::size_t n);

// Worker count for the few loops that fan out (cost-matrix rows). Defaults
// to 1. Results never depend on the value.
std::size_t worker_count();
void set_worker_count(std::size_t n);

}  // namespace otzsl

#endif  // OTZSL_CORE_HPP
