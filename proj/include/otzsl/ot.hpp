#ifndef OTZSL_OT_HPP
#define OTZSL_OT_HPP

// Discrete optimal transport between two empirical measures: cosine cost
// matrices, the inexact proximal-point solver (IPOT), entropic Sinkhorn,
// exact assignment references and the label-derived transition coupling.

#include <cstddef>
#include <utility>
#include <vector>

#include "otzsl/core.hpp"

namespace otzsl::ot {

// Finite, non-negative N x M transport cost. Rows index real samples,
// columns index generated samples. Costs built from features lie in [0, 2].
class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(Matrix values);

  const Matrix& values() const { return values_; }
  std::size_t rows() const { return values_.rows(); }
  std::size_t cols() const { return values_.cols(); }
  double operator()(std::size_t r, std::size_t c) const { return values_(r, c); }

 private:
  Matrix values_;
};

// Source (mu, length N) and target (nu, length M) masses. Entries must be
// strictly positive and each side must sum to 1 within 1e-12.
class Marginals {
 public:
  Marginals(Vector mu, Vector nu);
  static Marginals uniform(std::size_t n, std::size_t m);

  const Vector& mu() const { return mu_; }
  const Vector& nu() const { return nu_; }

 private:
  Vector mu_;
  Vector nu_;
};

struct IpotConfig {
  double lambda = 0.5;
  std::size_t inner_iterations = 1;
  std::size_t max_outer_iterations = 5000;
  // Stop once max |T(t+1) - T(t)| falls below stop_tolerance and the plan's
  // largest marginal deviation is at most feasibility_tolerance. A zero
  // stop_tolerance runs every iteration.
  double stop_tolerance = 1e-7;
  double feasibility_tolerance = 1e-8;

  void validate() const;
};

struct TransportPlan {
  Matrix values;
  bool converged = false;
  std::size_t outer_iterations_used = 0;
};

struct FeasibilityReport {
  double max_row_deviation = 0.0;
  double max_col_deviation = 0.0;
  double min_entry = 0.0;
  bool passed = false;

  double max_deviation() const {
    return max_row_deviation > max_col_deviation ? max_row_deviation : max_col_deviation;
  }
};

// One record per solver iteration (IPOT: outer step, Sinkhorn: scaling pair),
// evaluated on the plan that iteration produced.
struct SolverIterate {
  std::size_t iteration = 0;
  double transport_cost = 0.0;
  double feasibility_error = 0.0;
};
using SolverTrace = std::vector<SolverIterate>;

// C(n, m) = 1 - cos(real_n, synth_m). Throws std::invalid_argument naming the
// first zero-norm row.
CostMatrix build_cost_matrix(const Matrix& real_features, const Matrix& synth_features);

// Inexact proximal point iterations: G = exp(-C / lambda); each outer step
// runs `inner_iterations` Sinkhorn-Knopp scalings on K = G .* T(t).
// Throws NumericalError naming the outer iteration on any non-finite value.
TransportPlan ipot_solve(const CostMatrix& cost, const Marginals& marginals,
                         const IpotConfig& config = {}, SolverTrace* trace = nullptr);

// Entropic OT with fixed kernel exp(-C / lambda) and `iterations` scaling
// pairs. Throws NumericalError when the kernel underflows to a zero row or
// column.
TransportPlan sinkhorn_solve(const CostMatrix& cost, const Marginals& marginals, double lambda,
                             std::size_t iterations, SolverTrace* trace = nullptr);

// sum_nm T_nm C_nm.
double transport_cost(const Matrix& plan, const CostMatrix& cost);
inline double transport_cost(const TransportPlan& plan, const CostMatrix& cost) {
  return transport_cost(plan.values, cost);
}

// Brute-force over all N! permutation plans of a square problem with uniform
// marginals (N <= 8). Ties resolve to the lexicographically first permutation.
std::pair<TransportPlan, double> exact_assignment_oracle(const CostMatrix& cost);

// Exact optimum of a square uniform-marginal problem via the Hungarian
// (Kuhn-Munkres) method, O(N^3). Returns the plan and its cost.
std::pair<TransportPlan, double> hungarian_assignment(const CostMatrix& cost);

// Label-derived coupling: T(n, m) = 1 / (N * #synth(label)) when real n and
// synthetic m share a label, 0 otherwise. Requires
// #real(a) / N == #synth(a) / M for every label a.
TransportPlan stochastic_transition_plan(const std::vector<std::size_t>& real_labels,
                                         const std::vector<std::size_t>& synth_labels);

FeasibilityReport check_marginals(const Matrix& plan, const Marginals& marginals, double tol);
inline FeasibilityReport check_marginals(const TransportPlan& plan, const Marginals& marginals,
                                         double tol) {
  return check_marginals(plan.values, marginals, tol);
}

}  // namespace otzsl::ot

#endif  // OTZSL_OT_HPP
