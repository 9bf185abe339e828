#pragma once

// Entropy-smoothed partial transport between m prototypes and n features.
//
//   min_{rho, pi >= 0}  <c, pi> + (1/eps) (H(pi) + H(rho))
//   s.t.  rho_j + sum_i pi_ij = 1/n,   sum_ij pi_ij = mu
//
// with H(u) = sum u log u. The forward solver is the scaling iteration on
// (rho, t); the plan is recovered as pi = t * exp(-eps c) * Diag(rho). The
// backward pass is closed form and needs no matrix inverse.

#include <cmath>
#include <cstddef>
#include <string>

#include "gsp/error.hpp"
#include "gsp/linalg.hpp"

namespace gsp {

using CostMatrix = Matrix;

struct TransportConfig {
  double mu = 0.3;        // fraction of the uniform feature mass to transport
  double epsilon = 5.0;   // entropy coefficient (larger = sharper)
  int max_iters = 100;    // fixed iteration count k
  double tol = 0.0;       // early exit on max |rho change|; 0 disables

  void validate() const {
    if (!(mu > 0.0 && mu <= 1.0))
      throw ConfigError("transport: mu must lie in (0, 1], got " + std::to_string(mu));
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw ConfigError("transport: epsilon must be > 0, got " + std::to_string(epsilon));
    if (max_iters < 1)
      throw ConfigError("transport: max_iters must be >= 1, got " + std::to_string(max_iters));
    if (!(tol >= 0.0)) throw ConfigError("transport: tol must be >= 0");
  }
};

struct TransportSolution {
  Vector rho;     // n residual weights, each in [0, 1/n]
  Matrix plan;    // m x n transport plan
  double t = 1.0;
  int iters_run = 0;
  TransportConfig config;

  std::size_t num_prototypes() const { return plan.rows(); }
  std::size_t num_features() const { return plan.cols(); }
};

// exp(eps * c) beyond this overflows the scaling iteration.
inline constexpr double kMaxScaledCost = 700.0;
// |1 - mu - n rho^T rho| below this makes the backward pass ill-defined.
inline constexpr double kDenominatorGuard = 1e-10;

inline void validate_cost(const CostMatrix& c) {
  if (c.rows() == 0 || c.cols() == 0) throw DimensionError("transport: empty cost matrix");
  for (double v : c.data()) {
    if (!std::isfinite(v)) throw ConfigError("transport: cost matrix has a non-finite entry");
    if (v < 0.0) throw ConfigError("transport: cost matrix has a negative entry");
  }
}

inline TransportSolution solve_forward(const CostMatrix& c, const TransportConfig& cfg) {
  cfg.validate();
  validate_cost(c);
  const std::size_t m = c.rows(), n = c.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  Matrix kernel(m, n);
  Vector col_sum(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double scaled = cfg.epsilon * c(i, j);
      if (scaled > kMaxScaledCost)
        throw ConfigError("transport: epsilon * cost = " + std::to_string(scaled) +
                          " exceeds the underflow limit " + std::to_string(kMaxScaledCost));
      kernel(i, j) = std::exp(-scaled);
      col_sum[j] += kernel(i, j);
    }
  }

  // Only the column sums of the kernel enter the (rho, t) recursion.
  TransportSolution sol;
  sol.config = cfg;
  sol.rho.assign(n, inv_n);
  double t = 1.0;
  int it = 0;
  while (it < cfg.max_iters) {
    ++it;
    double change = 0.0;
    double mass = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = inv_n / (1.0 + t * col_sum[j]);
      change = std::max(change, std::abs(r - sol.rho[j]));
      sol.rho[j] = r;
      mass += col_sum[j] * r;
    }
    t = cfg.mu / mass;
    if (!std::isfinite(t) || std::isnan(change))
      throw NumericalError("transport: non-finite iterate at iteration " + std::to_string(it));
    if (cfg.tol > 0.0 && change < cfg.tol) break;
  }
  sol.t = t;
  sol.iters_run = it;

  sol.plan = std::move(kernel);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = sol.plan.row(i);
    for (std::size_t j = 0; j < n; ++j) row[j] *= t * sol.rho[j];
  }
  return sol;
}

// Per-feature pooling weights p_j = (1/n - rho_j) / mu.
inline Vector pooling_weights(const TransportSolution& sol) {
  const double n = static_cast<double>(sol.rho.size());
  Vector p(sol.rho.size());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = (1.0 / n - sol.rho[j]) / sol.config.mu;
  return p;
}

// max_j |rho_j + sum_i pi_ij - 1/n|
inline double marginal_residual(const TransportSolution& sol) {
  const std::size_t n = sol.rho.size();
  double worst = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = sol.rho[j];
    for (std::size_t i = 0; i < sol.plan.rows(); ++i) s += sol.plan(i, j);
    worst = std::max(worst, std::abs(s - 1.0 / static_cast<double>(n)));
  }
  return worst;
}

inline double total_mass(const TransportSolution& sol) {
  double s = 0.0;
  for (double v : sol.plan.data()) s += v;
  return s;
}

inline double transport_cost(const CostMatrix& c, const Matrix& plan) {
  if (c.rows() != plan.rows() || c.cols() != plan.cols())
    throw DimensionError("transport_cost: cost " + shape_string(c) + " vs plan " + shape_string(plan));
  return dot(c.data(), plan.data());
}

namespace detail {
inline double neg_entropy(std::span<const double> u) {
  double s = 0.0;
  for (double v : u) {
    if (v < 0.0) throw ConfigError("objective: negative entry in transport variables");
    if (v > 0.0) s += v * std::log(v);
  }
  return s;
}

inline double backward_denominator(const TransportSolution& sol) {
  const double mu = sol.config.mu;
  if (mu >= 1.0)
    throw DegenerateError("transport backward: gradient is undefined at mu = 1 (rho is forced to 0)");
  const double n = static_cast<double>(sol.rho.size());
  const double denom = 1.0 - mu - n * dot(sol.rho, sol.rho);
  if (std::abs(denom) < kDenominatorGuard)
    throw DegenerateError("transport backward: 1 - mu - n rho^T rho = " + std::to_string(denom) +
                          " is below the guard; Jacobian is singular");
  return denom;
}

inline void check_upstream(const TransportSolution& sol, const Vector& g_rho, const Matrix& g_pi) {
  if (g_rho.size() != sol.rho.size() || g_pi.rows() != sol.plan.rows() ||
      g_pi.cols() != sol.plan.cols())
    throw DimensionError("transport backward: upstream gradient shapes do not match the solution");
}
}  // namespace detail

// <c, pi> + (1/eps)(H(pi) + H(rho)), with 0 log 0 = 0.
inline double objective_p2(const CostMatrix& c, const TransportSolution& sol, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("objective: epsilon must be > 0");
  if (sol.rho.size() != c.cols())
    throw DimensionError("objective: rho length does not match the cost matrix");
  validate_cost(c);
  const double entropy = detail::neg_entropy(sol.plan.data()) + detail::neg_entropy(sol.rho);
  return transport_cost(c, sol.plan) + entropy / epsilon;
}

// dL/dc from dL/drho and dL/dpi at a converged solution:
//   q   = rho .* g_rho + (pi .* g_pi)^T 1_m
//   eta = sum(rho .* g_rho) - n q^T rho
//   dL/dc = -eps (pi .* g_pi - n pi Diag(q - eta / (1 - mu - n rho^T rho) rho))
inline Matrix solve_backward(const TransportSolution& sol, const Vector& g_rho, const Matrix& g_pi) {
  detail::check_upstream(sol, g_rho, g_pi);
  const double denom = detail::backward_denominator(sol);
  const std::size_t m = sol.plan.rows(), n = sol.rho.size();
  const double nd = static_cast<double>(n);
  const double eps = sol.config.epsilon;

  Matrix weighted = hadamard(sol.plan, g_pi);
  Vector q(n, 0.0);
  double rho_g_sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double rg = sol.rho[j] * g_rho[j];
    rho_g_sum += rg;
    q[j] = rg;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) q[j] += weighted(i, j);
  const double eta = rho_g_sum - nd * dot(q, sol.rho);
  const double scale = eta / denom;

  Matrix grad(m, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double col = nd * (q[j] - scale * sol.rho[j]);
    for (std::size_t i = 0; i < m; ++i)
      grad(i, j) = -eps * (weighted(i, j) - sol.plan(i, j) * col);
  }
  return grad;
}

// Closed-form inverse of H = A Diag(x) A^T for the stacked constraint matrix
// A of the transport problem, where x = [rho; vec(pi)]:
//   H^-1 = [[n I + k^-1 r r^T, -k^-1 r], [-k^-1 r^T, k^-1]],
//   k = 1 - mu - n rho^T rho,  r = 1 - n rho.
inline Matrix constraint_gram_inverse(const TransportSolution& sol) {
  const double k = detail::backward_denominator(sol);
  const std::size_t n = sol.rho.size();
  const double nd = static_cast<double>(n);
  Vector r(n);
  for (std::size_t j = 0; j < n; ++j) r[j] = 1.0 - nd * sol.rho[j];
  Matrix h(n + 1, n + 1);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) h(a, b) = r[a] * r[b] / k + (a == b ? nd : 0.0);
    h(a, n) = -r[a] / k;
    h(n, a) = -r[a] / k;
  }
  h(n, n) = 1.0 / k;
  return h;
}

// H = A Diag(x) A^T assembled from the solution, for checking the closed form.
inline Matrix constraint_gram(const TransportSolution& sol) {
  const std::size_t n = sol.rho.size(), m = sol.plan.rows();
  Matrix h(n + 1, n + 1);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < m; ++i) col += sol.plan(i, j);
    h(j, j) = sol.rho[j] + col;
    h(j, n) = col;
    h(n, j) = col;
    total += col;
  }
  h(n, n) = total;
  return h;
}

// Reference gradient through the full implicit-function Jacobian
//   dx/dc = -eps (D - D A^T H^-1 A D),  D = Diag(x),  x = [rho; vec(pi)],
// materialised as a dense ((m+1)n)^2 matrix. Far slower than solve_backward;
// used only to cross-check it.
inline Matrix ift_gradient_oracle(const CostMatrix& c, const TransportSolution& sol,
                                  const Vector& g_rho, const Matrix& g_pi, double epsilon) {
  detail::check_upstream(sol, g_rho, g_pi);
  if (c.rows() != sol.plan.rows() || c.cols() != sol.plan.cols())
    throw DimensionError("ift oracle: cost matrix does not match the solution");
  const Matrix h_inv = constraint_gram_inverse(sol);
  const std::size_t m = sol.plan.rows(), n = sol.rho.size();
  const std::size_t dim = (m + 1) * n;

  Vector x(dim), g(dim);
  for (std::size_t j = 0; j < n; ++j) {
    x[j] = sol.rho[j];
    g[j] = g_rho[j];
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      x[n + i * n + j] = sol.plan(i, j);
      g[n + i * n + j] = g_pi(i, j);
    }

  // Constraint matrix: row j (< n) sums rho_j and column j of pi; row n sums pi.
  Matrix a(n + 1, dim);
  for (std::size_t j = 0; j < n; ++j) a(j, j) = 1.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      a(j, n + i * n + j) = 1.0;
      a(n, n + i * n + j) = 1.0;
    }

  Matrix ad(n + 1, dim);  // A D
  for (std::size_t r = 0; r < n + 1; ++r)
    for (std::size_t col = 0; col < dim; ++col) ad(r, col) = a(r, col) * x[col];
  const Matrix projector = matmul(transpose(ad), matmul(h_inv, ad));  // D A^T H^-1 A D

  Matrix jac(dim, dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t col = 0; col < dim; ++col)
      jac(r, col) = -epsilon * ((r == col ? x[r] : 0.0) - projector(r, col));

  const Vector full = matvec(jac, g);
  Matrix grad(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) grad(i, j) = full[n + i * n + j];
  return grad;
}

}  // namespace gsp
