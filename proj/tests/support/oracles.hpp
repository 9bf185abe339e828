#pragma once

// Test-only reference implementations. Nothing here calls into the code path
// it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gsp/linalg.hpp"

namespace gsp::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// max |a - b| / max(|a|_inf, |b|_inf, floor): deviation measured against the
// scale of the gradient, with a floor so all-zero gradients compare absolutely.
inline double scaled_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  double diff = 0.0, scale = floor;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, std::abs(a[k] - b[k]));
    scale = std::max({scale, std::abs(a[k]), std::abs(b[k])});
  }
  return diff / scale;
}

inline double scaled_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  return scaled_error(a.data(), b.data(), floor);
}

// Central differences of a scalar function of a matrix argument.
inline Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                 double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe.data()[k];
    probe.data()[k] = orig + h;
    const double up = f(probe);
    probe.data()[k] = orig - h;
    const double down = f(probe);
    probe.data()[k] = orig;
    g.data()[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// Brute-force retrieval metrics: the rank of every reference is obtained by
// counting the references strictly ahead of it under (distance, index).
struct BruteMetrics {
  double p_at_1 = 0.0, p_at_r = 0.0, map_at_r = 0.0;
  std::size_t skipped = 0;
};

inline BruteMetrics brute_force_metrics(const Matrix& e, const std::vector<int>& labels) {
  const std::size_t n = e.rows();
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < e.cols(); ++k) s += (e(a, k) - e(b, k)) * (e(a, k) - e(b, k));
    return s;
  };
  BruteMetrics out;
  std::size_t used = 0;
  for (std::size_t q = 0; q < n; ++q) {
    std::size_t r = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != q && labels[j] == labels[q]) ++r;
    if (r == 0) {
      ++out.skipped;
      continue;
    }
    ++used;
    std::vector<int> rank_label(n - 1, -1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == q) continue;
      std::size_t ahead = 0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == q || k == j) continue;
        if (dist(q, k) < dist(q, j) || (dist(q, k) == dist(q, j) && k < j)) ++ahead;
      }
      rank_label[ahead] = labels[j];
    }
    double hits = 0.0, ap = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      if (rank_label[k] == labels[q]) {
        hits += 1.0;
        ap += hits / static_cast<double>(k + 1);
      }
    }
    out.p_at_1 += rank_label[0] == labels[q] ? 1.0 : 0.0;
    out.p_at_r += hits / static_cast<double>(r);
    out.map_at_r += ap / static_cast<double>(r);
  }
  if (used) {
    out.p_at_1 /= static_cast<double>(used);
    out.p_at_r /= static_cast<double>(used);
    out.map_at_r /= static_cast<double>(used);
  }
  return out;
}

}  // namespace gsp::testing
