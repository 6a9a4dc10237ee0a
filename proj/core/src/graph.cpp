#include "dcg/graph.hpp"

#include <algorithm>
#include <cmath>

#include "dcg/error.hpp"

namespace dcg {

PpmiPrior build_ppmi(const std::vector<std::vector<int>>& labels, const ConceptDictionary& dict,
                     double eps) {
  if (labels.empty()) throw DataError("build_ppmi: empty label table");
  if (eps < 0.0) throw ConfigError("build_ppmi: smoothing must be non-negative");
  int64_t K = dict.concept_count();
  int64_t M = dict.node_count();
  int64_t N = static_cast<int64_t>(labels.size());

  std::vector<int64_t> n_i(static_cast<size_t>(M), 0);
  std::vector<int64_t> n_ij(static_cast<size_t>(M * M), 0);
  std::vector<int64_t> active(static_cast<size_t>(K));
  for (size_t s = 0; s < labels.size(); ++s) {
    const auto& row = labels[s];
    if (static_cast<int64_t>(row.size()) != K)
      throw DataError("build_ppmi: sample " + std::to_string(s) + " labels " +
                      std::to_string(row.size()) + " concepts, expected " + std::to_string(K));
    for (int64_t k = 0; k < K; ++k) {
      int v = row[static_cast<size_t>(k)];
      if (v < 0 || v >= dict.value_count(k))
        throw DataError("build_ppmi: sample " + std::to_string(s) + " value " + std::to_string(v) +
                        " out of range for concept " + std::to_string(k));
      active[static_cast<size_t>(k)] = dict.node_id(k, v);
    }
    for (int64_t a = 0; a < K; ++a) {
      ++n_i[static_cast<size_t>(active[static_cast<size_t>(a)])];
      for (int64_t b = a + 1; b < K; ++b) {
        int64_t i = active[static_cast<size_t>(a)];
        int64_t j = active[static_cast<size_t>(b)];
        ++n_ij[static_cast<size_t>(i * M + j)];
        ++n_ij[static_cast<size_t>(j * M + i)];
      }
    }
  }

  double denom = static_cast<double>(N) + 2.0 * eps;
  std::vector<double> mat(static_cast<size_t>(M * M), 0.0);
  for (int64_t i = 0; i < M; ++i) {
    for (int64_t j = 0; j < M; ++j) {
      if (i == j) continue;
      double pij = (static_cast<double>(n_ij[static_cast<size_t>(i * M + j)]) + eps) / denom;
      if (pij <= 0.0) continue;  // no evidence and no smoothing
      double pi = (static_cast<double>(n_i[static_cast<size_t>(i)]) + eps) / denom;
      double pj = (static_cast<double>(n_i[static_cast<size_t>(j)]) + eps) / denom;
      double v = std::log(pij) - std::log(pi) - std::log(pj);
      mat[static_cast<size_t>(i * M + j)] = v > 0.0 ? v : 0.0;
    }
  }

  PpmiPrior prior;
  prior.matrix = Tensor::from_data(Shape{M, M}, std::move(mat), false);
  prior.samples = N;
  prior.node_counts = std::move(n_i);
  prior.smoothing = eps;
  return prior;
}

Tensor build_mask(const ConceptDictionary& dict) {
  int64_t M = dict.node_count();
  std::vector<double> mask(static_cast<size_t>(M * M), 1.0);
  for (int64_t i = 0; i < M; ++i) {
    for (int64_t j = 0; j < M; ++j) {
      if (i == j || dict.node_km(i).first == dict.node_km(j).first)
        mask[static_cast<size_t>(i * M + j)] = 0.0;
    }
  }
  return Tensor::from_data(Shape{M, M}, std::move(mask), false);
}

Tensor edge_weights(const Tensor& b_scores, const Tensor& mask, const Tensor& prior) {
  if (b_scores.shape() != mask.shape() || mask.shape() != prior.shape())
    throw ShapeError("edge_weights: shapes disagree: " + shape_str(b_scores.shape()) + ", " +
                     shape_str(mask.shape()) + ", " + shape_str(prior.shape()));
  return mul(softplus(b_scores), mul(mask, prior));
}

Tensor top_k_sparsify(const Tensor& unnorm, int64_t k_top) {
  if (unnorm.rank() != 2) throw ShapeError("top_k_sparsify: expected a matrix");
  if (k_top < 1) throw ConfigError("top_k_sparsify: k_top must be >= 1");
  int64_t m = unnorm.dim(0), n = unnorm.dim(1);
  const auto& ad = unnorm.data();

  std::vector<char> kept(static_cast<size_t>(m * n), 0);
  std::vector<int64_t> cols(static_cast<size_t>(n));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) cols[static_cast<size_t>(j)] = j;
    int64_t take = std::min(k_top, n);
    std::partial_sort(cols.begin(), cols.begin() + take, cols.end(), [&](int64_t a, int64_t b) {
      double va = ad[static_cast<size_t>(i * n + a)];
      double vb = ad[static_cast<size_t>(i * n + b)];
      if (va != vb) return va > vb;
      return a < b;  // tie toward lower column index
    });
    for (int64_t t = 0; t < take; ++t)
      kept[static_cast<size_t>(i * n + cols[static_cast<size_t>(t)])] = 1;
  }

  std::vector<double> kept_mask(kept.size());
  for (size_t i = 0; i < kept.size(); ++i) kept_mask[i] = kept[i] ? 1.0 : 0.0;
  Tensor mask = Tensor::from_data(unnorm.shape(), std::move(kept_mask), false);
  return mul(unnorm, mask);
}

Tensor row_normalize(const Tensor& sparse) { return row_normalize_nonneg(sparse); }

Tensor adjacency(const GraphParams& params, const Tensor& mask, const Tensor& prior) {
  return row_normalize(top_k_sparsify(edge_weights(params.b_scores, mask, prior), params.k_top));
}

Tensor propagate(const Tensor& h0, const Tensor& adjacency, const GraphParams& params) {
  if (params.w_self.empty() || params.w_self.size() != params.w_neigh.size())
    throw ConfigError("propagate: need matching per-layer weight lists, L >= 1");
  Tensor h = h0;
  for (size_t l = 0; l < params.w_self.size(); ++l)
    h = relu(add(matmul(h, params.w_self[l]), matmul(adjacency, matmul(h, params.w_neigh[l]))));
  return h;
}

}  // namespace dcg
