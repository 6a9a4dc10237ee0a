#include "dcg/attention.hpp"

#include <cmath>

#include "dcg/error.hpp"

namespace dcg {

VisualTokens encode_patches(const Tensor& raw_patches, const PatchEncoderParams& p) {
  if (raw_patches.rank() != 2)
    throw ShapeError("encode_patches: expected [P, d_in], got " + shape_str(raw_patches.shape()));
  Tensor h = relu(add(matmul(raw_patches, p.w1), p.b1));  // [P, d_v]
  Tensor pooled = mean(h, 0);                             // [d_v]
  int64_t d_v = p.w2.dim(0);
  Tensor cls = reshape(add(matmul(reshape(pooled, {1, d_v}), p.w2), p.b2), {p.w2.dim(1)});
  return {cls, h};
}

AttentionResult t2i_attention(const Tensor& prototypes, const VisualTokens& tokens,
                              const MhaParams& p, bool keep_head_maps) {
  int64_t d_v = prototypes.dim(1);
  if (tokens.patches.dim(1) != d_v || tokens.cls.dim(0) != d_v)
    throw ShapeError("t2i_attention: token width " + shape_str(tokens.patches.shape()) +
                     " does not match prototype width " + shape_str(prototypes.shape()));
  if (p.heads < 1 || d_v % p.heads != 0)
    throw ConfigError("t2i_attention: heads=" + std::to_string(p.heads) + " must divide d_v=" +
                      std::to_string(d_v));
  int64_t M = prototypes.dim(0);
  int64_t P = tokens.patches.dim(0);
  int64_t dh = d_v / p.heads;

  Tensor seq = concat({reshape(tokens.cls, {1, d_v}), tokens.patches}, 0);  // [P+1, d_v]
  Tensor q = matmul(prototypes, p.wq);
  Tensor k = matmul(seq, p.wk);
  Tensor v = matmul(seq, p.wv);

  AttentionResult res;
  std::vector<Tensor> contexts;
  std::vector<double> mean_attn(static_cast<size_t>(M * (P + 1)), 0.0);
  double inv_heads = 1.0 / static_cast<double>(p.heads);

  for (int64_t h = 0; h < p.heads; ++h) {
    std::vector<int64_t> cols(static_cast<size_t>(dh));
    for (int64_t c = 0; c < dh; ++c) cols[static_cast<size_t>(c)] = h * dh + c;
    Tensor qh = gather_cols(q, cols);
    Tensor kh = gather_cols(k, cols);
    Tensor vh = gather_cols(v, cols);
    Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attn = softmax(scores, 1);  // [M, P+1]
    contexts.push_back(matmul(attn, vh));
    const auto& ad = attn.data();
    for (size_t i = 0; i < ad.size(); ++i) mean_attn[i] += inv_heads * ad[i];
    if (keep_head_maps) res.attn_heads.push_back(attn.detach());
  }

  res.evidence = matmul(concat(contexts, 1), p.wo);
  res.attn_full = Tensor::from_data(Shape{M, P + 1}, std::move(mean_attn), false);
  return res;
}

Tensor i2t_relevance(const Tensor& cls, const Tensor& prototypes, const Tensor& key_proj,
                     double tau) {
  if (!(tau > 0.0)) throw ConfigError("i2t_relevance: tau must be positive, got " + std::to_string(tau));
  int64_t d_v = prototypes.dim(1);
  if (cls.rank() != 1 || cls.dim(0) != d_v)
    throw ShapeError("i2t_relevance: cls " + shape_str(cls.shape()) + " vs prototypes " +
                     shape_str(prototypes.shape()));
  Tensor keys = matmul(prototypes, key_proj);                   // [M, d_v]
  Tensor logits = matmul(keys, reshape(cls, {d_v, 1}));         // [M, 1]
  return sigmoid(scale(reshape(logits, {prototypes.dim(0)}), 1.0 / tau));
}

Tensor fuse(const Tensor& evidence, const Tensor& relevance) {
  return scale_rows(evidence, relevance);
}

Tensor export_patch_maps(const Tensor& attn_full) {
  int64_t M = attn_full.dim(0);
  int64_t P = attn_full.dim(1) - 1;
  std::vector<double> out(static_cast<size_t>(M * P));
  const auto& ad = attn_full.data();
  for (int64_t i = 0; i < M; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < P; ++j) s += ad[static_cast<size_t>(i * (P + 1) + 1 + j)];
    for (int64_t j = 0; j < P; ++j) {
      double v = ad[static_cast<size_t>(i * (P + 1) + 1 + j)];
      out[static_cast<size_t>(i * P + j)] = s > 1e-300 ? v / s : 1.0 / static_cast<double>(P);
    }
  }
  return Tensor::from_data(Shape{M, P}, std::move(out), false);
}

Tensor concept_pool_matrix(const ConceptDictionary& dict) {
  int64_t K = dict.concept_count();
  int64_t M = dict.node_count();
  std::vector<double> pool(static_cast<size_t>(K * M), 0.0);
  for (int64_t k = 0; k < K; ++k) {
    const auto& nodes = dict.concept_nodes(k);
    double w = 1.0 / static_cast<double>(nodes.size());
    for (int64_t id : nodes) pool[static_cast<size_t>(k * M + id)] = w;
  }
  return Tensor::from_data(Shape{K, M}, std::move(pool), false);
}

std::vector<Tensor> concept_logits(const Tensor& pooled, const ConceptHeads& heads) {
  if (pooled.dim(0) != static_cast<int64_t>(heads.w.size()))
    throw ShapeError("concept_logits: pooled rows " + shape_str(pooled.shape()) +
                     " do not match head count " + std::to_string(heads.w.size()));
  std::vector<Tensor> u;
  int64_t d_v = pooled.dim(1);
  for (size_t k = 0; k < heads.w.size(); ++k) {
    Tensor row = gather_rows(pooled, {static_cast<int64_t>(k)});  // [1, d_v]
    if (heads.w[k].dim(0) != d_v)
      throw ShapeError("concept_logits: head " + std::to_string(k) + " expects width " +
                       std::to_string(heads.w[k].dim(0)));
    int64_t mk = heads.w[k].dim(1);
    u.push_back(reshape(add(matmul(row, heads.w[k]), reshape(heads.b[k], {1, mk})), {mk}));
  }
  return u;
}

std::vector<Tensor> predicted_value_probs(const std::vector<Tensor>& u) {
  std::vector<Tensor> probs;
  probs.reserve(u.size());
  for (const auto& uk : u) probs.push_back(softmax(uk, 0));
  return probs;
}

}  // namespace dcg
