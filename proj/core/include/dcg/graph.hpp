#pragma once
#include <cstdint>
#include <vector>

#include "dcg/schema.hpp"
#include "dcg/tensor.hpp"

namespace dcg {

// Fixed structural prior over concept-value co-occurrence, plus the counts
// it was estimated from.
struct PpmiPrior {
  Tensor matrix;  // [M, M] non-negative, symmetric, zero diagonal
  int64_t samples = 0;
  std::vector<int64_t> node_counts;
  double smoothing = 0.0;
};

// labels[sample][k] is the annotated value index of concept k. Two nodes
// co-occur when both are the annotated values of their concepts in the
// same sample. With N samples and smoothing eps:
//   p_i  = (n_i  + eps) / (N + 2 eps)
//   p_ij = (n_ij + eps) / (N + 2 eps)
//   entry = max(0, ln(p_ij / (p_i p_j))), diagonal forced to 0.
PpmiPrior build_ppmi(const std::vector<std::vector<int>>& labels, const ConceptDictionary& dict,
                     double eps);

// Binary mask zeroing self-loops and intra-concept pairs.
Tensor build_mask(const ConceptDictionary& dict);

// Unnormalized edge weights softplus(B) .* R .* A0; gradient reaches B only.
Tensor edge_weights(const Tensor& b_scores, const Tensor& mask, const Tensor& prior);

// Keeps the k_top largest entries per row (ties broken toward the lower
// column index) and zeroes the rest. Gradient passes through kept entries
// only; the selection is treated as locally constant.
Tensor top_k_sparsify(const Tensor& unnorm, int64_t k_top);

// D^-1 A-bar with the zero-row convention (all-zero rows stay zero).
Tensor row_normalize(const Tensor& sparse);

struct GraphParams {
  Tensor b_scores;  // [M, M] trainable
  int64_t k_top = 8;
  std::vector<Tensor> w_self;   // per layer, [d_v, d_v]
  std::vector<Tensor> w_neigh;  // per layer, [d_v, d_v]
};

// Full pipeline to the row-stochastic adjacency. Recomputed every forward
// pass since b_scores is trainable.
Tensor adjacency(const GraphParams& params, const Tensor& mask, const Tensor& prior);

// L layers of h <- ReLU(h W_self + A h W_neigh).
Tensor propagate(const Tensor& h0, const Tensor& adjacency, const GraphParams& params);

}  // namespace dcg
