#pragma once

// Generalized sum pooling: features are weighted by how much of their mass
// the partial transport moves onto a bank of trainable prototypes. Also the
// GAP / GMP / GeMean baselines.
//
// Shapes: a FeatureSet is n x d (one feature per row), a PrototypeBank is
// m x d, the cost and plan are m x n.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "gsp/error.hpp"
#include "gsp/linalg.hpp"
#include "gsp/transport.hpp"

namespace gsp {

using FeatureSet = Matrix;
using PrototypeBank = Matrix;

// u / max(1, |u|).
inline Vector clip_normalize(std::span<const double> u) {
  const double norm = norm2(u);
  Vector out(u.begin(), u.end());
  if (norm > 1.0)
    for (double& v : out) v /= norm;
  return out;
}

// Vector-Jacobian product of clip_normalize at u. The identity branch is
// taken at |u| = 1.
inline Vector clip_normalize_backward(std::span<const double> u, std::span<const double> g) {
  if (u.size() != g.size()) throw DimensionError("clip_normalize_backward: length mismatch");
  const double norm = norm2(u);
  Vector out(g.begin(), g.end());
  if (norm <= 1.0) return out;
  // (I - uu^T/|u|^2) g / |u|
  const double proj = dot(u, g) / (norm * norm);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (g[k] - proj * u[k]) / norm;
  return out;
}

inline Matrix clip_normalize_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const Vector r = clip_normalize(x.row(i));
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

inline Matrix clip_normalize_rows_backward(const Matrix& x, const Matrix& g) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const Vector r = clip_normalize_backward(x.row(i), g.row(i));
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

// c_ij = |proto_i - feat_j|_2
inline CostMatrix cost_matrix(const Matrix& protos, const Matrix& feats) {
  if (protos.cols() != feats.cols())
    throw DimensionError("cost_matrix: prototype dim " + std::to_string(protos.cols()) +
                         " != feature dim " + std::to_string(feats.cols()));
  CostMatrix c(protos.rows(), feats.rows());
  for (std::size_t i = 0; i < protos.rows(); ++i) {
    auto p = protos.row(i);
    for (std::size_t j = 0; j < feats.rows(); ++j) {
      auto f = feats.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double d = p[k] - f[k];
        s += d * d;
      }
      c(i, j) = std::sqrt(s);
    }
  }
  return c;
}

struct CostGradients {
  Matrix protos;
  Matrix feats;
};

// Coincident pairs (c_ij = 0) contribute no gradient.
inline CostGradients cost_matrix_backward(const Matrix& protos, const Matrix& feats,
                                          const CostMatrix& c, const Matrix& g_c) {
  if (g_c.rows() != protos.rows() || g_c.cols() != feats.rows())
    throw DimensionError("cost_matrix_backward: gradient is " + shape_string(g_c));
  CostGradients out{Matrix(protos.rows(), protos.cols()), Matrix(feats.rows(), feats.cols())};
  const std::size_t d = protos.cols();
  for (std::size_t i = 0; i < protos.rows(); ++i) {
    auto p = protos.row(i);
    auto gp = out.protos.row(i);
    for (std::size_t j = 0; j < feats.rows(); ++j) {
      if (c(i, j) == 0.0 || g_c(i, j) == 0.0) continue;
      const double s = g_c(i, j) / c(i, j);
      auto f = feats.row(j);
      auto gf = out.feats.row(j);
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = s * (p[k] - f[k]);
        gp[k] += diff;
        gf[k] -= diff;
      }
    }
  }
  return out;
}

namespace detail {
inline void check_pool_args(const FeatureSet& feats, const Vector& rho, double mu, double p_power) {
  if (feats.rows() == 0) throw DimensionError("gsp_pool: empty feature set");
  if (rho.size() != feats.rows())
    throw DimensionError("gsp_pool: rho has " + std::to_string(rho.size()) + " entries for " +
                         std::to_string(feats.rows()) + " features");
  if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("gsp_pool: mu must lie in (0, 1]");
  if (!(p_power >= 1.0)) throw ConfigError("gsp_pool: p_power must be >= 1");
}
}  // namespace detail

// p = 1:  x = sum_j ((1/n - rho_j) / mu) f_j.
// p > 1:  f_j <- ((1 - n rho_j) / mu) f_j, then x = ((1/n) sum_j f_j^p)^(1/p)
//         element-wise. The re-weighted features must be non-negative.
inline Vector gsp_pool(const FeatureSet& feats, const Vector& rho, double mu, double p_power = 1.0) {
  detail::check_pool_args(feats, rho, mu, p_power);
  const std::size_t n = feats.rows(), d = feats.cols();
  const double nd = static_cast<double>(n);
  Vector x(d, 0.0);
  if (p_power == 1.0) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = (1.0 / nd - rho[j]) / mu;
      auto f = feats.row(j);
      for (std::size_t k = 0; k < d; ++k) x[k] += w * f[k];
    }
    return x;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double w = (1.0 - nd * rho[j]) / mu;
    auto f = feats.row(j);
    for (std::size_t k = 0; k < d; ++k) {
      const double v = w * f[k];
      if (v < 0.0) throw ConfigError("gsp_pool: generalized mean needs non-negative weighted features");
      x[k] += std::pow(v, p_power);
    }
  }
  for (double& v : x) v = std::pow(v / nd, 1.0 / p_power);
  return x;
}

struct PoolGradients {
  Matrix feats;  // n x d
  Vector rho;    // n
};

inline PoolGradients gsp_pool_backward(const FeatureSet& feats, const Vector& rho, double mu,
                                       double p_power, const Vector& pooled, const Vector& g) {
  detail::check_pool_args(feats, rho, mu, p_power);
  const std::size_t n = feats.rows(), d = feats.cols();
  if (g.size() != d || pooled.size() != d) throw DimensionError("gsp_pool_backward: gradient length");
  const double nd = static_cast<double>(n);
  PoolGradients out{Matrix(n, d), Vector(n, 0.0)};
  for (std::size_t j = 0; j < n; ++j) {
    auto f = feats.row(j);
    auto gf = out.feats.row(j);
    if (p_power == 1.0) {
      const double w = (1.0 / nd - rho[j]) / mu;
      for (std::size_t k = 0; k < d; ++k) gf[k] = w * g[k];
      out.rho[j] = -dot(f, g) / mu;
      continue;
    }
    const double w = (1.0 - nd * rho[j]) / mu;
    double g_w = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double v = w * f[k];
      if (pooled[k] <= 0.0 || v <= 0.0) continue;
      // dx_k / dv = v^(p-1) x_k^(1-p) / n
      const double dv = g[k] * std::pow(v / pooled[k], p_power - 1.0) / nd;
      gf[k] = w * dv;
      g_w += f[k] * dv;
    }
    out.rho[j] = -nd / mu * g_w;
  }
  return out;
}

// z_i = (1/mu) sum_j pi_ij
inline Vector attribute_vector(const Matrix& plan, double mu) {
  if (!(mu > 0.0)) throw ConfigError("attribute_vector: mu must be > 0");
  Vector z(plan.rows(), 0.0);
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double s = 0.0;
    for (double v : plan.row(i)) s += v;
    z[i] = s / mu;
  }
  return z;
}

inline Matrix attribute_vector_backward(const Vector& g_z, std::size_t num_features, double mu) {
  Matrix g_pi(g_z.size(), num_features);
  for (std::size_t i = 0; i < g_z.size(); ++i)
    for (double& v : g_pi.row(i)) v = g_z[i] / mu;
  return g_pi;
}

struct GspCache {
  FeatureSet feats;
  PrototypeBank protos;
  Matrix feats_norm;
  Matrix protos_norm;
  CostMatrix cost;
  TransportSolution solution;
  double p_power = 1.0;
};

struct GspOutput {
  Vector pooled;      // d
  Vector attributes;  // m, sums to one at convergence
  GspCache cache;
};

inline GspOutput gsp_forward(const FeatureSet& feats, const PrototypeBank& protos,
                             const TransportConfig& cfg, double p_power = 1.0) {
  if (feats.rows() == 0 || protos.rows() == 0) throw DimensionError("gsp_forward: empty input");
  GspOutput out;
  out.cache.feats = feats;
  out.cache.protos = protos;
  out.cache.p_power = p_power;
  out.cache.feats_norm = clip_normalize_rows(feats);
  out.cache.protos_norm = clip_normalize_rows(protos);
  out.cache.cost = cost_matrix(out.cache.protos_norm, out.cache.feats_norm);
  out.cache.solution = solve_forward(out.cache.cost, cfg);
  out.pooled = gsp_pool(feats, out.cache.solution.rho, cfg.mu, p_power);
  out.attributes = attribute_vector(out.cache.solution.plan, cfg.mu);
  return out;
}

struct GspGradients {
  Matrix feats;   // n x d
  Matrix protos;  // m x d
};

inline GspGradients gsp_backward(const GspOutput& out, const Vector& g_pooled, const Vector& g_z) {
  const GspCache& c = out.cache;
  const double mu = c.solution.config.mu;
  if (g_z.size() != c.protos.rows()) throw DimensionError("gsp_backward: g_z length");
  PoolGradients pool = gsp_pool_backward(c.feats, c.solution.rho, mu, c.p_power, out.pooled, g_pooled);
  const Matrix g_pi = attribute_vector_backward(g_z, c.feats.rows(), mu);
  const Matrix g_cost = solve_backward(c.solution, pool.rho, g_pi);
  const CostGradients gc = cost_matrix_backward(c.protos_norm, c.feats_norm, c.cost, g_cost);

  GspGradients g{std::move(pool.feats), clip_normalize_rows_backward(c.protos, gc.protos)};
  const Matrix g_feats_cost = clip_normalize_rows_backward(c.feats, gc.feats);
  auto dst = g.feats.data();
  auto src = g_feats_cost.data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  return g;
}

// --- baselines --------------------------------------------------------------

inline Vector gap(const FeatureSet& feats) {
  if (feats.rows() == 0) throw DimensionError("gap: empty feature set");
  Vector x(feats.cols(), 0.0);
  for (std::size_t j = 0; j < feats.rows(); ++j) {
    auto f = feats.row(j);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += f[k];
  }
  for (double& v : x) v /= static_cast<double>(feats.rows());
  return x;
}

inline Matrix gap_backward(std::size_t num_features, const Vector& g) {
  Matrix out(num_features, g.size());
  for (std::size_t j = 0; j < num_features; ++j)
    for (std::size_t k = 0; k < g.size(); ++k) out(j, k) = g[k] / static_cast<double>(num_features);
  return out;
}

inline Vector gmp(const FeatureSet& feats) {
  if (feats.rows() == 0) throw DimensionError("gmp: empty feature set");
  Vector x(feats.cols(), -std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < feats.rows(); ++j) {
    auto f = feats.row(j);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::max(x[k], f[k]);
  }
  return x;
}

// ((1/n) sum_j f_j^p)^(1/p) element-wise; features must be non-negative.
inline Vector gemean(const FeatureSet& feats, double p) {
  if (feats.rows() == 0) throw DimensionError("gemean: empty feature set");
  if (!(p >= 1.0)) throw ConfigError("gemean: p must be >= 1");
  for (double v : feats.data())
    if (v < 0.0) throw ConfigError("gemean: features must be non-negative");
  if (p == 1.0) return gap(feats);
  Vector x(feats.cols(), 0.0);
  for (std::size_t j = 0; j < feats.rows(); ++j) {
    auto f = feats.row(j);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += std::pow(f[k], p);
  }
  for (double& v : x) v = std::pow(v / static_cast<double>(feats.rows()), 1.0 / p);
  return x;
}

}  // namespace gsp
