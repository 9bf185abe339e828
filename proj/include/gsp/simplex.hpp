#pragma once

// Dense two-phase tableau simplex for small equality-form LPs, and the exact
// (unsmoothed) partial-transport LP built on it. Bland's rule throughout, so
// degenerate instances terminate. Meant for instances with a few hundred
// variables at most.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "gsp/error.hpp"
#include "gsp/linalg.hpp"
#include "gsp/transport.hpp"

namespace gsp {

struct LpResult {
  double objective = 0.0;
  Vector x;
};

namespace detail {

class Tableau {
 public:
  // Rows 0..m-1 are constraints, row m is the reduced-cost row. Column
  // `width - 1` is the right-hand side.
  Tableau(std::size_t rows, std::size_t cols) : t_(rows + 1, cols + 1), basis_(rows) {}

  double& at(std::size_t r, std::size_t c) { return t_(r, c); }
  double at(std::size_t r, std::size_t c) const { return t_(r, c); }
  double& rhs(std::size_t r) { return t_(r, t_.cols() - 1); }
  std::size_t rows() const { return t_.rows() - 1; }
  std::size_t cols() const { return t_.cols() - 1; }
  std::size_t obj() const { return t_.rows() - 1; }
  std::vector<std::size_t>& basis() { return basis_; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double p = t_(pr, pc);
    for (std::size_t c = 0; c < t_.cols(); ++c) t_(pr, c) /= p;
    for (std::size_t r = 0; r < t_.rows(); ++r) {
      if (r == pr) continue;
      const double f = t_(r, pc);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < t_.cols(); ++c) t_(r, c) -= f * t_(pr, c);
      t_(r, pc) = 0.0;
    }
    basis_[pr] = pc;
  }

  // Runs Bland-rule iterations over columns [0, eligible). Returns false if
  // the LP is unbounded.
  bool optimize(std::size_t eligible, const std::vector<bool>& active_rows, double tol) {
    const std::size_t max_pivots = 50000;
    for (std::size_t iter = 0; iter < max_pivots; ++iter) {
      std::size_t enter = eligible;
      for (std::size_t c = 0; c < eligible; ++c)
        if (at(obj(), c) < -tol) {
          enter = c;
          break;
        }
      if (enter == eligible) return true;
      std::size_t leave = rows();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < rows(); ++r) {
        if (!active_rows[r] || at(r, enter) <= tol) continue;
        const double ratio = rhs(r) / at(r, enter);
        if (ratio < best - tol || (ratio <= best + tol && leave < rows() && basis_[r] < basis_[leave])) {
          best = ratio;
          leave = r;
        }
      }
      if (leave == rows()) return false;
      pivot(leave, enter);
    }
    throw NumericalError("simplex: pivot limit reached");
  }

 private:
  Matrix t_;
  std::vector<std::size_t> basis_;
};

}  // namespace detail

// min c^T x  s.t.  A x = b,  x >= 0.
inline LpResult simplex_minimize(const Matrix& a, const Vector& b, const Vector& cost,
                                 double tol = 1e-11) {
  const std::size_t rows = a.rows(), vars = a.cols();
  if (b.size() != rows || cost.size() != vars)
    throw DimensionError("simplex: A is " + shape_string(a) + ", b has " + std::to_string(b.size()) +
                         ", c has " + std::to_string(cost.size()));

  // Phase 1 with one artificial per row.
  detail::Tableau tab(rows, vars + rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double sign = b[r] < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < vars; ++c) tab.at(r, c) = sign * a(r, c);
    tab.at(r, vars + r) = 1.0;
    tab.rhs(r) = sign * b[r];
    tab.basis()[r] = vars + r;
  }
  for (std::size_t c = 0; c < vars; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += tab.at(r, c);
    tab.at(tab.obj(), c) = -s;
  }
  double rhs_sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r) rhs_sum += tab.rhs(r);
  tab.rhs(tab.obj()) = -rhs_sum;

  std::vector<bool> active(rows, true);
  tab.optimize(vars + rows, active, tol);
  if (-tab.rhs(tab.obj()) > 1e-9) throw NumericalError("simplex: problem is infeasible");

  // Drive remaining artificials out of the basis; rows where that is
  // impossible are redundant.
  for (std::size_t r = 0; r < rows; ++r) {
    if (tab.basis()[r] < vars) continue;
    std::size_t col = vars;
    for (std::size_t c = 0; c < vars; ++c)
      if (std::abs(tab.at(r, c)) > 1e-9) {
        col = c;
        break;
      }
    if (col == vars)
      active[r] = false;
    else
      tab.pivot(r, col);
  }

  // Phase 2 reduced costs.
  for (std::size_t c = 0; c <= vars + rows; ++c) tab.at(tab.obj(), c) = 0.0;
  for (std::size_t c = 0; c < vars; ++c) tab.at(tab.obj(), c) = cost[c];
  for (std::size_t r = 0; r < rows; ++r) {
    if (!active[r]) continue;
    const std::size_t bc = tab.basis()[r];
    const double cb = bc < vars ? cost[bc] : 0.0;
    if (cb == 0.0) continue;
    for (std::size_t c = 0; c < vars; ++c) tab.at(tab.obj(), c) -= cb * tab.at(r, c);
    tab.rhs(tab.obj()) -= cb * tab.rhs(r);
  }
  if (!tab.optimize(vars, active, tol)) throw NumericalError("simplex: problem is unbounded");

  LpResult res;
  res.x.assign(vars, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    if (active[r] && tab.basis()[r] < vars) res.x[tab.basis()[r]] = std::max(0.0, tab.rhs(r));
  res.objective = dot(cost, res.x);
  return res;
}

struct TransportLpSolution {
  double objective = 0.0;
  Vector rho;
  Matrix plan;
};

// Exact solution of the unsmoothed partial transport problem
//   min <c, pi>  s.t.  rho_j + sum_i pi_ij = 1/n,  sum pi = mu,  rho, pi >= 0.
// rho is treated as an extra zero-cost row of the plan. Returns one optimal
// vertex; under ties the plan is not unique, only the objective is.
inline TransportLpSolution lp_oracle(const CostMatrix& c, double mu) {
  if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("lp_oracle: mu must lie in (0, 1]");
  validate_cost(c);
  const std::size_t m = c.rows(), n = c.cols();
  if (m > 16 || n > 16) throw DimensionError("lp_oracle: limited to m, n <= 16");
  const std::size_t vars = (m + 1) * n;

  Matrix a(n + 1, vars);
  Vector b(n + 1, 1.0 / static_cast<double>(n));
  b[n] = mu;
  Vector cost(vars, 0.0);
  for (std::size_t j = 0; j < n; ++j) a(j, j) = 1.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t v = n + i * n + j;
      a(j, v) = 1.0;
      a(n, v) = 1.0;
      cost[v] = c(i, j);
    }

  const LpResult lp = simplex_minimize(a, b, cost);
  TransportLpSolution out;
  out.objective = lp.objective;
  out.rho.assign(lp.x.begin(), lp.x.begin() + static_cast<std::ptrdiff_t>(n));
  out.plan = Matrix(m, n, std::vector<double>(lp.x.begin() + static_cast<std::ptrdiff_t>(n), lp.x.end()));
  return out;
}

}  // namespace gsp
