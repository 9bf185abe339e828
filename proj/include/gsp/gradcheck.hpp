#pragma once

// Seeded battery of gradient checks: the closed-form transport backward
// against the implicit-function oracle and central differences, the full
// pooling chain, the zero-shot loss, and the ridge closed form.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gsp/linalg.hpp"
#include "gsp/pooling.hpp"
#include "gsp/transport.hpp"
#include "gsp/zsr.hpp"

namespace gsp {

struct CheckResult {
  std::string name;
  std::string size;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::size_t, std::size_t>> sizes{{1, 1}, {3, 5}, {4, 8}};
  double tolerance = 0.0;  // > 0 overrides every per-check tolerance
};

// max |a - b| / max(|a|_inf, |b|_inf, 1e-6)
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 1e-6;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, std::abs(a[k] - b[k]));
    scale = std::max({scale, std::abs(a[k]), std::abs(b[k])});
  }
  return diff / scale;
}

inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
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

namespace detail {
inline Matrix uniform_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}
}  // namespace detail

inline std::vector<CheckResult> run_gradcheck(const GradcheckOptions& opt) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(opt.seed);
  auto record = [&](std::string name, std::string size, double err, double tol) {
    const double t = opt.tolerance > 0.0 ? opt.tolerance : tol;
    out.push_back({std::move(name), std::move(size), err, t, err <= t});
  };

  TransportConfig cfg;
  cfg.max_iters = 2000;
  for (const auto& [m, n] : opt.sizes) {
    const std::string size = std::to_string(m) + "x" + std::to_string(n);
    const Matrix c = detail::uniform_matrix(m, n, rng, 0.0, 2.0);
    const Matrix g_rho = detail::uniform_matrix(1, n, rng, -1.0, 1.0);
    const Matrix g_pi = detail::uniform_matrix(m, n, rng, -1.0, 1.0);
    const auto sol = solve_forward(c, cfg);
    const Matrix closed = solve_backward(sol, g_rho.values(), g_pi);
    const Matrix ift = ift_gradient_oracle(c, sol, g_rho.values(), g_pi, cfg.epsilon);
    const Matrix fd = finite_difference(
        [&](const Matrix& x) {
          const auto s = solve_forward(x, cfg);
          return dot(s.rho, g_rho.values()) + dot(s.plan.data(), g_pi.data());
        },
        c);
    record("transport.closed_vs_ift", size, relative_error(closed.data(), ift.data()), 1e-8);
    record("transport.closed_vs_fd", size, relative_error(closed.data(), fd.data()), 1e-4);
    record("transport.ift_vs_fd", size, relative_error(ift.data(), fd.data()), 1e-4);

    const Matrix feats = detail::uniform_matrix(n, 3, rng, -1.0, 1.0);
    const Matrix protos = detail::uniform_matrix(m, 3, rng, -1.0, 1.0);
    auto chain = [&](const Matrix& f, const Matrix& p) {
      const auto o = gsp_forward(f, p, cfg);
      double s = 0.0;
      for (double v : o.pooled) s += v;
      for (double v : o.attributes) s += v;
      return s;
    };
    const auto g = gsp_backward(gsp_forward(feats, protos, cfg), Vector(3, 1.0), Vector(m, 1.0));
    const Matrix fd_f = finite_difference([&](const Matrix& x) { return chain(x, protos); }, feats);
    const Matrix fd_p = finite_difference([&](const Matrix& x) { return chain(feats, x); }, protos);
    record("pooling.chain_feats_vs_fd", size, relative_error(g.feats.data(), fd_f.data()), 1e-3);
    record("pooling.chain_protos_vs_fd", size, relative_error(g.protos.data(), fd_p.data()), 1e-3);

    // Attribute dimension m, 4 classes of 4 samples.
    std::vector<int> labels;
    for (int k = 0; k < 16; ++k) labels.push_back(k / 4);
    const Matrix z = detail::uniform_matrix(m, 16, rng, 0.0, 1.0);
    const Matrix table = detail::uniform_matrix(4, 3, rng, -1.0, 1.0);
    const BatchSplit split = class_disjoint_split(labels, rng);
    const auto zr = zsr_loss(z, labels, table, 0.05, split);
    const Matrix fd_z = finite_difference([&](const Matrix& x) { return zsr_loss(x, labels, table, 0.05, split).loss; }, z);
    const Matrix fd_t = finite_difference([&](const Matrix& x) { return zsr_loss(z, labels, x, 0.05, split).loss; }, table);
    record("zsr.z_vs_fd", size, relative_error(zr.grad_z.data(), fd_z.data()), 1e-4);
    record("zsr.table_vs_fd", size, relative_error(zr.grad_table.data(), fd_t.data()), 1e-4);

    const Matrix zb = detail::uniform_matrix(m, n, rng, -1.0, 1.0);
    const Matrix tb = detail::uniform_matrix(3, n, rng, -1.0, 1.0);
    const Matrix a = ridge_fit(zb, tb, 0.05).a;
    Matrix zz = matmul(zb, transpose(zb));
    for (std::size_t i = 0; i < m; ++i) zz(i, i) += 0.05;
    const Matrix primal = transpose(solve_spd(zz, matmul(zb, transpose(tb))));
    record("ridge.gram_vs_primal", size, relative_error(a.data(), primal.data()), 1e-8);
  }
  return out;
}

}  // namespace gsp
