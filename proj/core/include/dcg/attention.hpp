#pragma once
#include <vector>

#include "dcg/schema.hpp"
#include "dcg/tensor.hpp"

namespace dcg {

// Visual token sequence: a global context token plus P patch tokens.
struct VisualTokens {
  Tensor cls;      // [d_v]
  Tensor patches;  // [P, d_v]
};

// Trainable stand-in for a vision backbone: per-patch affine + ReLU, with
// the context token produced by a second affine applied to the patch mean.
struct PatchEncoderParams {
  Tensor w1, b1;  // d_in -> d_v
  Tensor w2, b2;  // d_v -> d_v (context head)
};

VisualTokens encode_patches(const Tensor& raw_patches, const PatchEncoderParams& p);

// Multi-head attention projections. Heads split the d_v columns evenly.
struct MhaParams {
  Tensor wq, wk, wv, wo;  // each d_v x d_v
  int64_t heads = 4;
};

struct AttentionResult {
  Tensor evidence;                 // [M, d_v]
  Tensor attn_full;                // [M, P+1] head-averaged weights, detached
  std::vector<Tensor> attn_heads;  // per-head [M, P+1], only when requested
};

// Text-to-image branch: queries are the projected prototypes, keys/values
// the full token sequence [cls; patches]. Scaled dot-product per head with
// scale 1/sqrt(d_v/heads).
AttentionResult t2i_attention(const Tensor& prototypes, const VisualTokens& tokens,
                              const MhaParams& p, bool keep_head_maps = false);

// Image-to-text branch: alpha = sigmoid(cls . (prototypes W_key)^T / tau).
// Each entry is an independent gate; nothing is normalized across nodes.
Tensor i2t_relevance(const Tensor& cls, const Tensor& prototypes, const Tensor& key_proj,
                     double tau);

// Gated fusion h0[m,:] = alpha[m] * evidence[m,:].
Tensor fuse(const Tensor& evidence, const Tensor& relevance);

// Localization maps for display: the context column is dropped and rows
// renormalized over patch positions. Rows with no patch mass fall back to
// uniform so every exported row is a distribution.
Tensor export_patch_maps(const Tensor& attn_full);

// Per-concept affine value heads: u_k = pooled_k . w[k] + b[k].
struct ConceptHeads {
  std::vector<Tensor> w;  // [d_v, M_k]
  std::vector<Tensor> b;  // [M_k]
};

// Mean-pooling matrix over each concept's value nodes: [K, M] constant with
// row k holding 1/M_k on that concept's node columns.
Tensor concept_pool_matrix(const ConceptDictionary& dict);

// pooled: [K, d_v] rows are per-concept means of node features.
std::vector<Tensor> concept_logits(const Tensor& pooled, const ConceptHeads& heads);

std::vector<Tensor> predicted_value_probs(const std::vector<Tensor>& u);

}  // namespace dcg
