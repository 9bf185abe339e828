#pragma once

// Sample-based metric-learning losses over a whole batch (no mining).
// Embeddings are stored one per row.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gsp/error.hpp"
#include "gsp/linalg.hpp"

namespace gsp {

struct EmbeddingBatch {
  Matrix embeddings;  // |b| x d
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct LossResult {
  double value = 0.0;
  Matrix grad;  // dL/d embeddings, |b| x d
};

inline void validate_batch(const EmbeddingBatch& batch) {
  if (batch.embeddings.rows() != batch.labels.size())
    throw DimensionError("batch: " + std::to_string(batch.embeddings.rows()) + " embeddings but " +
                         std::to_string(batch.labels.size()) + " labels");
  for (int y : batch.labels)
    if (y < 0) throw ConfigError("batch: labels must be non-negative");
}

inline Matrix pairwise_distances(const Matrix& e) {
  const std::size_t b = e.rows();
  Matrix d(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < e.cols(); ++k) {
        const double diff = e(i, k) - e(j, k);
        s += diff * diff;
      }
      d(i, j) = d(j, i) = std::sqrt(s);
    }
  return d;
}

// Accumulates dL/dE given dL/dD. Coincident pairs get zero gradient.
inline Matrix pairwise_distances_backward(const Matrix& e, const Matrix& dist, const Matrix& g_dist) {
  const std::size_t b = e.rows();
  Matrix g(b, e.cols());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j || dist(i, j) == 0.0 || g_dist(i, j) == 0.0) continue;
      const double s = g_dist(i, j) / dist(i, j);
      for (std::size_t k = 0; k < e.cols(); ++k) {
        const double v = s * (e(i, k) - e(j, k));
        g(i, k) += v;
        g(j, k) -= v;
      }
    }
  return g;
}

// Contrastive loss with a positive margin:
//   mean_{pos pairs} max(0, D - m_pos) + mean_{neg pairs} max(0, m_neg - D)
// over unordered pairs i < j.
inline LossResult contrastive_c2(const EmbeddingBatch& batch, double m_pos, double m_neg) {
  validate_batch(batch);
  if (!(m_pos >= 0.0 && m_neg > m_pos))
    throw ConfigError("contrastive_c2: margins must satisfy m_neg > m_pos >= 0");
  const std::size_t b = batch.size();
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) (batch.labels[i] == batch.labels[j] ? n_pos : n_neg)++;
  if (n_pos == 0) throw ConfigError("contrastive_c2: batch has no positive pairs");
  if (n_neg == 0) throw ConfigError("contrastive_c2: batch has no negative pairs");

  const Matrix dist = pairwise_distances(batch.embeddings);
  Matrix g_dist(b, b);
  LossResult res;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) {
      const double d = dist(i, j);
      if (batch.labels[i] == batch.labels[j]) {
        if (d > m_pos) {
          res.value += (d - m_pos) / static_cast<double>(n_pos);
          g_dist(i, j) = 1.0 / static_cast<double>(n_pos);
        }
      } else if (d < m_neg) {
        res.value += (m_neg - d) / static_cast<double>(n_neg);
        g_dist(i, j) = -1.0 / static_cast<double>(n_neg);
      }
    }
  res.grad = pairwise_distances_backward(batch.embeddings, dist, g_dist);
  return res;
}

// mean over every (anchor, positive, negative) triple of max(0, D_ap - D_an + margin).
inline LossResult triplet(const EmbeddingBatch& batch, double margin) {
  validate_batch(batch);
  if (!(margin >= 0.0)) throw ConfigError("triplet: margin must be >= 0");
  const std::size_t b = batch.size();
  const Matrix dist = pairwise_distances(batch.embeddings);
  Matrix g_dist(b, b);
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t a = 0; a < b; ++a)
    for (std::size_t p = 0; p < b; ++p) {
      if (p == a || batch.labels[p] != batch.labels[a]) continue;
      for (std::size_t n = 0; n < b; ++n) {
        if (batch.labels[n] == batch.labels[a]) continue;
        ++count;
        const double h = dist(a, p) - dist(a, n) + margin;
        if (h > 0.0) {
          total += h;
          g_dist(a, p) += 1.0;
          g_dist(a, n) -= 1.0;
        }
      }
    }
  if (count == 0) throw ConfigError("triplet: batch has no valid (anchor, positive, negative) triple");
  LossResult res;
  res.value = total / static_cast<double>(count);
  for (double& v : g_dist.data()) v /= static_cast<double>(count);
  res.grad = pairwise_distances_backward(batch.embeddings, dist, g_dist);
  return res;
}

}  // namespace gsp
