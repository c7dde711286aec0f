#include "otzsl/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <thread>

namespace otzsl::ot {

namespace {

constexpr double kMarginalSumTol = 1e-12;

void require_shape(const Matrix& plan, const CostMatrix& cost, const char* who) {
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch (plan " +
                                std::to_string(plan.rows()) + "x" + std::to_string(plan.cols()) +
                                ", cost " + std::to_string(cost.rows()) + "x" +
                                std::to_string(cost.cols()) + ")");
  }
}

void require_marginals(const CostMatrix& cost, const Marginals& marg, const char* who) {
  if (marg.mu().size() != cost.rows() || marg.nu().size() != cost.cols()) {
    throw std::invalid_argument(std::string(who) + ": marginal lengths do not match cost shape");
  }
  if (cost.rows() == 0 || cost.cols() == 0) {
    throw std::invalid_argument(std::string(who) + ": empty cost matrix");
  }
}

void validate_mass(const Vector& w, const char* side) {
  if (w.empty()) throw std::invalid_argument(std::string("Marginals: empty ") + side);
  double s = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || !(x > 0.0)) {
      throw std::invalid_argument(std::string("Marginals: ") + side +
                                  " entries must be finite and strictly positive");
    }
    s += x;
  }
  if (std::abs(s - 1.0) > kMarginalSumTol) {
    throw std::invalid_argument(std::string("Marginals: ") + side + " does not sum to 1");
  }
}

Matrix gibbs_kernel(const CostMatrix& cost, double lambda) {
  Matrix k(cost.rows(), cost.cols());
  auto out = k.values();
  const auto in = cost.values().values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(-in[i] / lambda);
  return k;
}

// b = nu / (K^T a)
void scale_columns(const Matrix& k, const Vector& a, const Vector& nu, Vector& b) {
  std::fill(b.begin(), b.end(), 0.0);
  for (std::size_t n = 0; n < k.rows(); ++n) {
    const auto row = k.row(n);
    for (std::size_t m = 0; m < k.cols(); ++m) b[m] += row[m] * a[n];
  }
  for (std::size_t m = 0; m < b.size(); ++m) b[m] = nu[m] / b[m];
}

// a = mu / (K b)
void scale_rows(const Matrix& k, const Vector& b, const Vector& mu, Vector& a) {
  for (std::size_t n = 0; n < k.rows(); ++n) {
    const auto row = k.row(n);
    double s = 0.0;
    for (std::size_t m = 0; m < k.cols(); ++m) s += row[m] * b[m];
    a[n] = mu[n] / s;
  }
}

bool all_finite(const Vector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// diag(a) K diag(b). Entries below the smallest normal double are flushed to
// zero: IPOT drives off-support mass toward underflow geometrically, and
// subnormal arithmetic is two orders of magnitude slower on x86.
Matrix scaled_plan(const Matrix& k, const Vector& a, const Vector& b) {
  constexpr double tiny = std::numeric_limits<double>::min();
  Matrix t(k.rows(), k.cols());
  for (std::size_t n = 0; n < k.rows(); ++n) {
    const auto kr = k.row(n);
    auto tr = t.row(n);
    for (std::size_t m = 0; m < k.cols(); ++m) {
      const double v = a[n] * kr[m] * b[m];
      tr[m] = v < tiny ? 0.0 : v;
    }
  }
  return t;
}

// Projects a nonnegative plan onto the transport polytope: shrink rows to
// at most mu, columns to at most nu, then spread the missing mass as a rank-one
// correction. Moves at most the current marginal error's worth of mass.
void round_to_marginals(Matrix& t, const Vector& mu, const Vector& nu) {
  const std::size_t n = t.rows(), m = t.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto r = t.row(i);
    double s = 0.0;
    for (double v : r) s += v;
    if (s > mu[i])
      for (double& v : r) v *= mu[i] / s;
  }
  Vector col(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) col[j] += t(i, j);
  for (std::size_t j = 0; j < m; ++j)
    if (col[j] > nu[j])
      for (std::size_t i = 0; i < n; ++i) t(i, j) *= nu[j] / col[j];
  Vector err_r(n), err_c(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : t.row(i)) s += v;
    err_r[i] = std::max(mu[i] - s, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) err_c[j] += t(i, j);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) err_c[j] = std::max(nu[j] - err_c[j], 0.0);
  for (double v : err_r) total += v;
  if (total <= 0.0) return;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) t(i, j) += err_r[i] * err_c[j] / total;
}

SolverIterate make_iterate(std::size_t it, const Matrix& plan, const CostMatrix& cost,
                           const Marginals& marg) {
  const auto rep = check_marginals(plan, marg, 0.0);
  return {it, transport_cost(plan, cost), rep.max_deviation()};
}

}  // namespace

CostMatrix::CostMatrix(Matrix values) : values_(std::move(values)) {
  for (double v : values_.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("CostMatrix: non-finite entry");
    if (v < 0.0) throw std::invalid_argument("CostMatrix: negative entry");
  }
}

Marginals::Marginals(Vector mu, Vector nu) : mu_(std::move(mu)), nu_(std::move(nu)) {
  validate_mass(mu_, "mu");
  validate_mass(nu_, "nu");
}

Marginals Marginals::uniform(std::size_t n, std::size_t m) {
  if (n == 0 || m == 0) throw std::invalid_argument("Marginals::uniform: empty side");
  return Marginals(Vector(n, 1.0 / static_cast<double>(n)),
                   Vector(m, 1.0 / static_cast<double>(m)));
}

void IpotConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("IpotConfig: lambda must be positive");
  if (inner_iterations < 1) throw std::invalid_argument("IpotConfig: inner_iterations must be >= 1");
  if (max_outer_iterations < 1)
    throw std::invalid_argument("IpotConfig: max_outer_iterations must be >= 1");
  if (!(stop_tolerance >= 0.0)) throw std::invalid_argument("IpotConfig: stop_tolerance must be >= 0");
  if (!(feasibility_tolerance >= 0.0))
    throw std::invalid_argument("IpotConfig: feasibility_tolerance must be >= 0");
}

CostMatrix build_cost_matrix(const Matrix& real_features, const Matrix& synth_features) {
  if (real_features.cols() == 0 || real_features.cols() != synth_features.cols()) {
    throw std::invalid_argument("build_cost_matrix: feature dimensions differ or are zero");
  }
  const std::size_t n = real_features.rows();
  const std::size_t m = synth_features.rows();
  Vector real_norm(n), synth_norm(m);
  for (std::size_t i = 0; i < n; ++i) {
    real_norm[i] = norm(real_features.row(i));
    if (!(real_norm[i] > 0.0))
      throw std::invalid_argument("build_cost_matrix: real feature row " + std::to_string(i) +
                                  " has zero norm");
  }
  for (std::size_t j = 0; j < m; ++j) {
    synth_norm[j] = norm(synth_features.row(j));
    if (!(synth_norm[j] > 0.0))
      throw std::invalid_argument("build_cost_matrix: synthetic feature row " +
                                  std::to_string(j) + " has zero norm");
  }

  Matrix c(n, m);
  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto x = real_features.row(i);
      for (std::size_t j = 0; j < m; ++j) {
        const double cs = dot(x, synth_features.row(j)) / (real_norm[i] * synth_norm[j]);
        c(i, j) = 1.0 - std::clamp(cs, -1.0, 1.0);
      }
    }
  };
  // Rows are independent, so the split never changes the result.
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    fill_rows(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      if (begin < end) pool.emplace_back(fill_rows, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  return CostMatrix(std::move(c));
}

TransportPlan ipot_solve(const CostMatrix& cost, const Marginals& marginals,
                         const IpotConfig& config, SolverTrace* trace) {
  config.validate();
  require_marginals(cost, marginals, "ipot_solve");
  const Vector& mu = marginals.mu();
  const Vector& nu = marginals.nu();
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();

  const Matrix g = gibbs_kernel(cost, config.lambda);
  Matrix t(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) t(i, j) = mu[i] * nu[j];

  Vector a = mu;
  Vector b(m, 1.0);
  Matrix k(n, m);
  TransportPlan plan;
  for (std::size_t outer = 1; outer <= config.max_outer_iterations; ++outer) {
    const auto gv = g.values();
    const auto tv = t.values();
    auto kv = k.values();
    for (std::size_t i = 0; i < kv.size(); ++i) kv[i] = gv[i] * tv[i];

    for (std::size_t j = 0; j < config.inner_iterations; ++j) {
      scale_columns(k, a, nu, b);
      scale_rows(k, b, mu, a);
    }
    if (!all_finite(a) || !all_finite(b)) {
      throw NumericalError("ipot_solve: non-finite scaling at outer iteration " +
                           std::to_string(outer) + " (increase lambda)");
    }
    Matrix next = scaled_plan(k, a, b);
    if (!next.all_finite()) {
      throw NumericalError("ipot_solve: non-finite plan at outer iteration " +
                           std::to_string(outer));
    }
    double change = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i)
      change = std::max(change, std::abs(next.values()[i] - t.values()[i]));
    t = std::move(next);
    plan.outer_iterations_used = outer;
    if (trace) trace->push_back(make_iterate(outer, t, cost, marginals));
    if (change < config.stop_tolerance &&
        check_marginals(t, marginals, config.feasibility_tolerance).passed) {
      plan.converged = true;
      break;
    }
  }
  // A capped run can stop short of the marginals (slow on degenerate
  // rectangular problems with J = 1); hand back the nearest feasible plan.
  if (!plan.converged && !check_marginals(t, marginals, config.feasibility_tolerance).passed)
    round_to_marginals(t, mu, nu);
  plan.values = std::move(t);
  return plan;
}

TransportPlan sinkhorn_solve(const CostMatrix& cost, const Marginals& marginals, double lambda,
                             std::size_t iterations, SolverTrace* trace) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("sinkhorn_solve: lambda must be positive");
  if (iterations < 1) throw std::invalid_argument("sinkhorn_solve: iterations must be >= 1");
  require_marginals(cost, marginals, "sinkhorn_solve");
  const Vector& mu = marginals.mu();
  const Vector& nu = marginals.nu();
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();

  const Matrix k = gibbs_kernel(cost, lambda);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = k.row(i);
    if (std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; }))
      throw NumericalError("sinkhorn_solve: kernel row " + std::to_string(i) +
                           " underflowed to zero; use a larger lambda");
  }
  for (std::size_t j = 0; j < m; ++j) {
    bool zero = true;
    for (std::size_t i = 0; i < n && zero; ++i) zero = k(i, j) == 0.0;
    if (zero)
      throw NumericalError("sinkhorn_solve: kernel column " + std::to_string(j) +
                           " underflowed to zero; use a larger lambda");
  }

  Vector a(n, 1.0);
  Vector b(m, 1.0);
  for (std::size_t it = 1; it <= iterations; ++it) {
    scale_columns(k, a, nu, b);
    scale_rows(k, b, mu, a);
    if (!all_finite(a) || !all_finite(b)) {
      throw NumericalError("sinkhorn_solve: non-finite scaling at iteration " +
                           std::to_string(it) + "; use a larger lambda");
    }
    if (trace) trace->push_back(make_iterate(it, scaled_plan(k, a, b), cost, marginals));
  }
  TransportPlan plan;
  plan.values = scaled_plan(k, a, b);
  plan.outer_iterations_used = iterations;
  plan.converged = check_marginals(plan.values, marginals, 1e-6).passed;
  return plan;
}

double transport_cost(const Matrix& plan, const CostMatrix& cost) {
  require_shape(plan, cost, "transport_cost");
  const auto t = plan.values();
  const auto c = cost.values().values();
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * c[i];
  return s;
}

std::pair<TransportPlan, double> exact_assignment_oracle(const CostMatrix& cost) {
  const std::size_t n = cost.rows();
  if (n != cost.cols()) throw std::invalid_argument("exact_assignment_oracle: cost must be square");
  if (n == 0 || n > 8) throw std::invalid_argument("exact_assignment_oracle: requires 1 <= N <= 8");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_sum = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost(i, perm[i]);
    if (s < best_sum) {
      best_sum = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  const double w = 1.0 / static_cast<double>(n);
  TransportPlan plan;
  plan.values = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) plan.values(i, best[i]) = w;
  plan.converged = true;
  const double c = transport_cost(plan.values, cost);
  return {std::move(plan), c};
}

std::pair<TransportPlan, double> hungarian_assignment(const CostMatrix& cost) {
  const std::size_t n = cost.rows();
  if (n != cost.cols()) throw std::invalid_argument("hungarian_assignment: cost must be square");
  if (n == 0) throw std::invalid_argument("hungarian_assignment: empty cost");

  // Shortest augmenting path with row/column potentials; arrays are 1-based
  // with slot 0 as the virtual source column.
  const double inf = std::numeric_limits<double>::infinity();
  Vector u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    Vector minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  const double w = 1.0 / static_cast<double>(n);
  TransportPlan plan;
  plan.values = Matrix(n, n);
  for (std::size_t j = 1; j <= n; ++j) plan.values(match[j] - 1, j - 1) = w;
  plan.converged = true;
  const double c = transport_cost(plan.values, cost);
  return {std::move(plan), c};
}

TransportPlan stochastic_transition_plan(const std::vector<std::size_t>& real_labels,
                                         const std::vector<std::size_t>& synth_labels) {
  const std::size_t n = real_labels.size();
  const std::size_t m = synth_labels.size();
  if (n == 0 || m == 0) throw std::invalid_argument("stochastic_transition_plan: empty batch");

  std::map<std::size_t, std::size_t> real_count, synth_count;
  for (auto l : real_labels) ++real_count[l];
  for (auto l : synth_labels) ++synth_count[l];
  auto check = [&](std::size_t label) {
    const std::size_t r = real_count.count(label) ? real_count[label] : 0;
    const std::size_t s = synth_count.count(label) ? synth_count[label] : 0;
    // r / N == s / M, compared exactly in integers.
    if (r * m != s * n) {
      throw std::invalid_argument("stochastic_transition_plan: label " + std::to_string(label) +
                                  " has " + std::to_string(r) + "/" + std::to_string(n) +
                                  " real vs " + std::to_string(s) + "/" + std::to_string(m) +
                                  " synthetic; the coupling would violate the marginals");
    }
  };
  for (const auto& [label, _] : real_count) check(label);
  for (const auto& [label, _] : synth_count) check(label);

  TransportPlan plan;
  plan.values = Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / (static_cast<double>(n) * static_cast<double>(synth_count[real_labels[i]]));
    for (std::size_t j = 0; j < m; ++j)
      if (synth_labels[j] == real_labels[i]) plan.values(i, j) = w;
  }
  plan.converged = true;
  return plan;
}

FeasibilityReport check_marginals(const Matrix& plan, const Marginals& marginals, double tol) {
  FeasibilityReport rep;
  const Vector& mu = marginals.mu();
  const Vector& nu = marginals.nu();
  if (plan.rows() != mu.size() || plan.cols() != nu.size()) {
    throw std::invalid_argument("check_marginals: shape mismatch");
  }
  Vector col(plan.cols(), 0.0);
  rep.min_entry = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double s = 0.0;
    const auto r = plan.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      s += r[j];
      col[j] += r[j];
      rep.min_entry = std::min(rep.min_entry, r[j]);
    }
    rep.max_row_deviation = std::max(rep.max_row_deviation, std::abs(s - mu[i]));
  }
  for (std::size_t j = 0; j < col.size(); ++j)
    rep.max_col_deviation = std::max(rep.max_col_deviation, std::abs(col[j] - nu[j]));
  rep.passed = plan.all_finite() && rep.max_row_deviation <= tol &&
               rep.max_col_deviation <= tol && rep.min_entry >= -tol;
  return rep;
}

}  // namespace otzsl::ot
