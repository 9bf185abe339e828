#pragma once

// Cross-batch zero-shot regularization. A batch is split into two halves with
// disjoint classes; each half fits a ridge map from attribute vectors z to
// label embeddings, and that map predicts the label embeddings of the other
// half. The loss is softmax cross-entropy of the predictions scored against
// every class embedding.
//
// Shape conventions: Z is m x |b| with one attribute vector per column,
// targets are d x |b| with one label embedding per column, and the label
// table is c x d with one class per row.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <set>
#include <vector>

#include "gsp/error.hpp"
#include "gsp/linalg.hpp"

namespace gsp {

using LabelEmbeddingTable = Matrix;

struct BatchSplit {
  std::vector<std::size_t> first;   // sample indices, ascending
  std::vector<std::size_t> second;
};

// Partitions the batch by class. ceil(C/2) classes go to the first half.
template <class Rng>
BatchSplit class_disjoint_split(const std::vector<int>& labels, Rng& rng) {
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2)
    throw ConfigError("class_disjoint_split: batch needs at least two distinct classes");
  std::vector<int> classes(distinct.begin(), distinct.end());
  std::shuffle(classes.begin(), classes.end(), rng);
  const std::size_t n_first = (classes.size() + 1) / 2;
  std::set<int> first_classes(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_first));
  BatchSplit split;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (first_classes.count(labels[i]) ? split.first : split.second).push_back(i);
  return split;
}

struct RidgeMap {
  Matrix a;  // d x m
  double eps = 0.0;
};

namespace detail {
inline Matrix ridge_gram(const Matrix& z, double eps) {
  Matrix g = matmul(transpose(z), z);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += eps;
  return g;
}
}  // namespace detail

// A = T (Z^T Z + eps I)^-1 Z^T, the minimizer of
// sum_i |A z_i - t_i|^2 + eps |A|_F^2.
inline RidgeMap ridge_fit(const Matrix& z, const Matrix& targets, double eps) {
  if (z.cols() != targets.cols())
    throw DimensionError("ridge_fit: Z is " + shape_string(z) + ", targets " + shape_string(targets));
  if (!(eps >= 0.0)) throw ConfigError("ridge_fit: eps must be >= 0");
  Matrix solved;
  try {
    solved = solve_spd(detail::ridge_gram(z, eps), transpose(z));  // |b| x m
  } catch (const DegenerateError& e) {
    throw DegenerateError(std::string("ridge_fit: Gram matrix is singular; ") + e.what());
  }
  return {matmul(targets, solved), eps};
}

struct RidgeGradients {
  Matrix z;        // m x |b|
  Matrix targets;  // d x |b|
};

// Pulls dL/dA back through the Gram-form solve.
inline RidgeGradients ridge_backward(const Matrix& z, const Matrix& targets, double eps,
                                     const Matrix& g_a) {
  const Matrix w = solve_spd(detail::ridge_gram(z, eps), Matrix::identity(z.cols()));
  const Matrix gaz = matmul(g_a, z);             // d x |b|
  RidgeGradients g;
  g.targets = matmul(gaz, w);
  const Matrix inner = matmul(transpose(targets), g.targets);  // T^T gA Z W
  Matrix gg = matmul(w, inner);
  for (double& v : gg.data()) v = -v;
  Matrix sym = gg;
  for (std::size_t i = 0; i < sym.rows(); ++i)
    for (std::size_t j = 0; j < sym.cols(); ++j) sym(i, j) += gg(j, i);
  g.z = matmul(z, sym);
  const Matrix direct = matmul(matmul(transpose(g_a), targets), w);
  auto dz = g.z.data();
  auto dd = direct.data();
  for (std::size_t k = 0; k < dz.size(); ++k) dz[k] += dd[k];
  return g;
}

struct ZsrResult {
  double loss = 0.0;
  Matrix grad_z;      // m x |b|
  Matrix grad_table;  // c x d
  BatchSplit split;
};

namespace detail {
inline Matrix gather_columns(const Matrix& z, const std::vector<std::size_t>& idx) {
  Matrix out(z.rows(), idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c)
    for (std::size_t r = 0; r < z.rows(); ++r) out(r, c) = z(r, idx[c]);
  return out;
}

inline Matrix gather_targets(const LabelEmbeddingTable& table, const std::vector<int>& labels,
                             const std::vector<std::size_t>& idx) {
  Matrix out(table.cols(), idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const auto cls = static_cast<std::size_t>(labels[idx[c]]);
    for (std::size_t r = 0; r < table.cols(); ++r) out(r, c) = table(cls, r);
  }
  return out;
}
}  // namespace detail

// Loss and gradients for a fixed split.
inline ZsrResult zsr_loss(const Matrix& z, const std::vector<int>& labels,
                          const LabelEmbeddingTable& table, double eps, BatchSplit split) {
  const std::size_t batch = z.cols();
  if (labels.size() != batch) throw DimensionError("zsr_loss: label count does not match Z");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= table.rows())
      throw DimensionError("zsr_loss: label " + std::to_string(y) + " has no embedding");
  if (split.first.empty() || split.second.empty())
    throw ConfigError("zsr_loss: both halves of the split must be non-empty");

  const std::size_t classes = table.rows(), dim = table.cols();
  const std::vector<std::size_t>* halves[2] = {&split.first, &split.second};
  Matrix zh[2], th[2];
  RidgeMap maps[2];
  for (int h = 0; h < 2; ++h) {
    zh[h] = detail::gather_columns(z, *halves[h]);
    th[h] = detail::gather_targets(table, labels, *halves[h]);
    maps[h] = ridge_fit(zh[h], th[h], eps);
  }

  ZsrResult res;
  res.grad_z = Matrix(z.rows(), batch);
  res.grad_table = Matrix(classes, dim);
  Matrix g_a[2] = {Matrix(dim, z.rows()), Matrix(dim, z.rows())};
  const double inv_b = 1.0 / static_cast<double>(batch);

  for (int h = 0; h < 2; ++h) {
    const Matrix& a = maps[1 - h].a;  // the other half's map predicts this half
    for (std::size_t i : *halves[h]) {
      const Vector zi = z.col_vector(i);
      const Vector pred = matvec(a, zi);
      Vector score = matvec(table, pred);
      const double top = *std::max_element(score.begin(), score.end());
      double sum = 0.0;
      for (double s : score) sum += std::exp(s - top);
      const auto y = static_cast<std::size_t>(labels[i]);
      res.loss += (top + std::log(sum) - score[y]) * inv_b;

      Vector g_score(classes);
      for (std::size_t j = 0; j < classes; ++j)
        g_score[j] = (std::exp(score[j] - top) / sum - (j == y ? 1.0 : 0.0)) * inv_b;
      Vector g_pred(dim, 0.0);
      for (std::size_t j = 0; j < classes; ++j)
        for (std::size_t k = 0; k < dim; ++k) {
          g_pred[k] += table(j, k) * g_score[j];
          res.grad_table(j, k) += g_score[j] * pred[k];
        }
      for (std::size_t k = 0; k < dim; ++k)
        for (std::size_t r = 0; r < z.rows(); ++r) {
          g_a[1 - h](k, r) += g_pred[k] * zi[r];
          res.grad_z(r, i) += a(k, r) * g_pred[k];
        }
    }
  }

  for (int h = 0; h < 2; ++h) {
    const RidgeGradients rg = ridge_backward(zh[h], th[h], eps, g_a[h]);
    for (std::size_t c = 0; c < halves[h]->size(); ++c) {
      const std::size_t i = (*halves[h])[c];
      const auto y = static_cast<std::size_t>(labels[i]);
      for (std::size_t r = 0; r < z.rows(); ++r) res.grad_z(r, i) += rg.z(r, c);
      for (std::size_t k = 0; k < dim; ++k) res.grad_table(y, k) += rg.targets(k, c);
    }
  }
  res.split = std::move(split);
  return res;
}

template <class Rng>
ZsrResult zsr_loss(const Matrix& z, const std::vector<int>& labels, const LabelEmbeddingTable& table,
                   double eps, Rng& rng) {
  return zsr_loss(z, labels, table, eps, class_disjoint_split(labels, rng));
}

// (1 - lambda) L_dml + lambda L_zs
inline double combined_loss(double l_dml, double l_zs, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("combined_loss: lambda must lie in [0, 1], got " + std::to_string(lambda));
  return (1.0 - lambda) * l_dml + lambda * l_zs;
}

}  // namespace gsp
