#pragma once

// Retrieval metrics in the single-pool setting: every sample is a query and
// every other sample is a reference. R for a query is the number of other
// samples sharing its class. Distance ties are broken by ascending index.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "gsp/error.hpp"
#include "gsp/linalg.hpp"

namespace gsp {

struct QueryResult {
  std::size_t query = 0;
  std::size_t r = 0;        // number of true references
  std::vector<bool> flags;  // correctness of the r nearest references
};

struct RetrievalMetrics {
  double p_at_1 = 0.0;
  double p_at_r = 0.0;
  double map_at_r = 0.0;
  std::size_t queries = 0;  // queries that contributed
  std::size_t skipped = 0;  // queries whose class has no other sample
};

// (1/R) sum_k [k-th correct] * precision@k
inline double average_precision_at_r(const std::vector<bool>& flags) {
  if (flags.empty()) throw ConfigError("average_precision_at_r: R must be >= 1");
  double hits = 0.0, sum = 0.0;
  for (std::size_t k = 0; k < flags.size(); ++k)
    if (flags[k]) {
      hits += 1.0;
      sum += hits / static_cast<double>(k + 1);
    }
  return sum / static_cast<double>(flags.size());
}

inline double precision_of(const std::vector<bool>& flags) {
  return flags.empty() ? 0.0
                       : static_cast<double>(std::count(flags.begin(), flags.end(), true)) /
                             static_cast<double>(flags.size());
}

namespace detail {
inline void check_retrieval_input(const Matrix& e, const std::vector<int>& labels) {
  if (e.rows() != labels.size())
    throw DimensionError("retrieval: " + std::to_string(e.rows()) + " embeddings but " +
                         std::to_string(labels.size()) + " labels");
  if (e.rows() < 2) throw ConfigError("retrieval: need at least two samples");
}

// References of `query` sorted by (squared distance, index).
inline std::vector<std::size_t> ranked_references(const Matrix& e, std::size_t query,
                                                  std::vector<double>& dist) {
  const std::size_t n = e.rows();
  dist.assign(n, 0.0);
  auto q = e.row(query);
  for (std::size_t j = 0; j < n; ++j) {
    auto r = e.row(j);
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      const double d = q[k] - r[k];
      s += d * d;
    }
    dist[j] = s;
  }
  std::vector<std::size_t> order;
  order.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    if (j != query) order.push_back(j);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  });
  return order;
}
}  // namespace detail

// Per-query correctness of the R nearest references; queries with R = 0 are
// returned with empty flags.
inline std::vector<QueryResult> retrieve(const Matrix& e, const std::vector<int>& labels) {
  detail::check_retrieval_input(e, labels);
  std::vector<QueryResult> out(e.rows());
  std::vector<double> dist;
  for (std::size_t q = 0; q < e.rows(); ++q) {
    QueryResult& res = out[q];
    res.query = q;
    res.r = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), labels[q])) - 1;
    if (res.r == 0) continue;
    const auto order = detail::ranked_references(e, q, dist);
    res.flags.resize(res.r);
    for (std::size_t k = 0; k < res.r; ++k) res.flags[k] = labels[order[k]] == labels[q];
  }
  return out;
}

inline RetrievalMetrics evaluate_retrieval(const Matrix& e, const std::vector<int>& labels) {
  RetrievalMetrics m;
  for (const QueryResult& q : retrieve(e, labels)) {
    if (q.r == 0) {
      ++m.skipped;
      continue;
    }
    ++m.queries;
    m.p_at_1 += q.flags.front() ? 1.0 : 0.0;
    m.p_at_r += precision_of(q.flags);
    m.map_at_r += average_precision_at_r(q.flags);
  }
  if (m.queries > 0) {
    const double n = static_cast<double>(m.queries);
    m.p_at_1 /= n;
    m.p_at_r /= n;
    m.map_at_r /= n;
  }
  return m;
}

struct PrecisionAt1 {
  double value = 0.0;
  std::size_t skipped = 0;
};

inline PrecisionAt1 precision_at_1(const Matrix& e, const std::vector<int>& labels) {
  const RetrievalMetrics m = evaluate_retrieval(e, labels);
  return {m.p_at_1, m.skipped};
}

struct MapAtR {
  double map_r = 0.0;
  double p_at_r = 0.0;
  std::size_t skipped = 0;
};

inline MapAtR map_at_r(const Matrix& e, const std::vector<int>& labels) {
  const RetrievalMetrics m = evaluate_retrieval(e, labels);
  return {m.map_at_r, m.p_at_r, m.skipped};
}

}  // namespace gsp
