#include "dcg/model.hpp"

#include <unordered_set>

#include "dcg/error.hpp"

namespace dcg {

void ModelConfig::validate() const {
  if (d_t < 8) throw ConfigError("model: d_t must be >= 8");
  if (d_v < 1) throw ConfigError("model: d_v must be >= 1");
  if (heads < 1 || d_v % heads != 0)
    throw ConfigError("model: heads=" + std::to_string(heads) + " must divide d_v=" + std::to_string(d_v));
  if (!(tau > 0.0)) throw ConfigError("model: tau must be positive");
  if (graph_layers < 1) throw ConfigError("model: graph_layers must be >= 1");
  if (top_k < 1) throw ConfigError("model: top_k must be >= 1");
  if (ppmi_smoothing < 0.0) throw ConfigError("model: ppmi_smoothing must be non-negative");
  if (prompt_mode != "full" && prompt_mode != "bare")
    throw ConfigError("model: prompt_mode must be \"full\" or \"bare\"");
  if (encoder != "hash" && encoder != "file")
    throw ConfigError("model: encoder must be \"hash\" or \"file\"");
  if (encoder == "file" && embedding_file.empty())
    throw ConfigError("model: encoder \"file\" needs embedding_file");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["d_t"] = d_t;
  j["d_v"] = d_v;
  j["heads"] = heads;
  j["tau"] = tau;
  j["graph_layers"] = graph_layers;
  j["top_k"] = top_k;
  j["ppmi_smoothing"] = ppmi_smoothing;
  j["use_graph"] = use_graph;
  j["prompt_mode"] = prompt_mode;
  j["encoder"] = encoder;
  j["encoder_seed"] = encoder_seed;
  j["embedding_file"] = embedding_file;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  static const std::unordered_set<std::string> known = {
      "d_t",       "d_v",         "heads",   "tau",          "graph_layers", "top_k",
      "ppmi_smoothing", "use_graph", "prompt_mode", "encoder", "encoder_seed", "embedding_file"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown model config key \"" + it.key() + "\"");
  ModelConfig c;
  c.d_t = j.value("d_t", c.d_t);
  c.d_v = j.value("d_v", c.d_v);
  c.heads = j.value("heads", c.heads);
  c.tau = j.value("tau", c.tau);
  c.graph_layers = j.value("graph_layers", c.graph_layers);
  c.top_k = j.value("top_k", c.top_k);
  c.ppmi_smoothing = j.value("ppmi_smoothing", c.ppmi_smoothing);
  c.use_graph = j.value("use_graph", c.use_graph);
  c.prompt_mode = j.value("prompt_mode", c.prompt_mode);
  c.encoder = j.value("encoder", c.encoder);
  c.encoder_seed = j.value("encoder_seed", c.encoder_seed);
  c.embedding_file = j.value("embedding_file", c.embedding_file);
  c.validate();
  return c;
}

Model::Model(const ConceptDictionary& dict, ModelConfig cfg, DataDims dims)
    : dict_(dict), cfg_(std::move(cfg)), dims_(dims) {
  cfg_.validate();
  if (dims_.patch_count < 1 || dims_.patch_width < 1 || dims_.classes < 2)
    throw ConfigError("model: invalid data dims");
  mask_ = build_mask(dict_);
  pool_ = concept_pool_matrix(dict_);
}

void Model::build_params(uint64_t init_seed) {
  Rng root(init_seed);
  int64_t d_t = cfg_.d_t, d_v = cfg_.d_v;
  int64_t M = dict_.node_count();

  Rng r_wp = root.fork("w_p");
  w_p_ = Tensor::xavier(d_t, d_v, r_wp);

  Rng r_p1 = root.fork("patch_w1");
  patch_.w1 = Tensor::xavier(dims_.patch_width, d_v, r_p1);
  patch_.b1 = Tensor::zeros({d_v}, true);
  // Context head starts at zero: an untrained model gates every node at
  // sigmoid(0) = 0.5.
  patch_.w2 = Tensor::zeros({d_v, d_v}, true);
  patch_.b2 = Tensor::zeros({d_v}, true);

  Rng r_q = root.fork("mha_wq"), r_k = root.fork("mha_wk"), r_v = root.fork("mha_wv"),
      r_o = root.fork("mha_wo");
  mha_.wq = Tensor::xavier(d_v, d_v, r_q);
  mha_.wk = Tensor::xavier(d_v, d_v, r_k);
  mha_.wv = Tensor::xavier(d_v, d_v, r_v);
  mha_.wo = Tensor::xavier(d_v, d_v, r_o);
  mha_.heads = cfg_.heads;

  Rng r_i2t = root.fork("i2t_key");
  i2t_key_ = Tensor::xavier(d_v, d_v, r_i2t);

  // Value heads start at zero: untrained value probabilities are uniform.
  for (int64_t k = 0; k < dict_.concept_count(); ++k) {
    int64_t mk = dict_.value_count(k);
    heads_.w.push_back(Tensor::zeros({d_v, mk}, true));
    heads_.b.push_back(Tensor::zeros({mk}, true));
  }

  graph_.b_scores = Tensor::zeros({M, M}, true);  // softplus(0) scales the prior uniformly
  graph_.k_top = cfg_.top_k;
  for (int64_t l = 0; l < cfg_.graph_layers; ++l) {
    Rng rs = root.fork("gnn_self_" + std::to_string(l));
    Rng rn = root.fork("gnn_neigh_" + std::to_string(l));
    graph_.w_self.push_back(Tensor::xavier(d_v, d_v, rs));
    graph_.w_neigh.push_back(Tensor::xavier(d_v, d_v, rn));
  }

  // Diagnosis head starts at zero: an untrained model predicts by argmax
  // tie-break (class 0), giving chance accuracy on balanced data.
  w_c_ = Tensor::zeros({dict_.concept_count() * d_v, dims_.classes}, true);
  b_c_ = Tensor::zeros({dims_.classes}, true);
}

void Model::register_params() {
  params_.clear();
  auto reg = [&](std::string name, const Tensor& t) { params_.push_back({std::move(name), t}); };
  reg("cde/w_p", w_p_);
  reg("patch/w1", patch_.w1);
  reg("patch/b1", patch_.b1);
  reg("patch/w2", patch_.w2);
  reg("patch/b2", patch_.b2);
  reg("dca/mha_wq", mha_.wq);
  reg("dca/mha_wk", mha_.wk);
  reg("dca/mha_wv", mha_.wv);
  reg("dca/mha_wo", mha_.wo);
  reg("dca/i2t_key", i2t_key_);
  for (int64_t k = 0; k < dict_.concept_count(); ++k) {
    reg("heads/k" + std::to_string(k) + "_w", heads_.w[static_cast<size_t>(k)]);
    reg("heads/k" + std::to_string(k) + "_b", heads_.b[static_cast<size_t>(k)]);
  }
  reg("graph/b_scores", graph_.b_scores);
  for (size_t l = 0; l < graph_.w_self.size(); ++l) {
    reg("graph/l" + std::to_string(l) + "_w_self", graph_.w_self[l]);
    reg("graph/l" + std::to_string(l) + "_w_neigh", graph_.w_neigh[l]);
  }
  reg("diag/w_c", w_c_);
  reg("diag/b_c", b_c_);

  std::unordered_set<std::string> names;
  for (const auto& p : params_)
    if (!names.insert(p.name).second) throw Error("duplicate parameter name " + p.name);
}

Model Model::create(const ConceptDictionary& dict, const ModelConfig& cfg,
                    const PrototypeBank& bank, const Tensor& ppmi, const DataDims& dims,
                    uint64_t init_seed) {
  Model m(dict, cfg, dims);
  if (bank.raw.dim(0) != dict.node_count() || bank.raw.dim(1) != cfg.d_t)
    throw ShapeError("model: prototype bank " + shape_str(bank.raw.shape()) + " does not match M=" +
                     std::to_string(dict.node_count()) + ", d_t=" + std::to_string(cfg.d_t));
  if (ppmi.shape() != Shape{dict.node_count(), dict.node_count()})
    throw ShapeError("model: PPMI prior " + shape_str(ppmi.shape()) + " must be M x M");
  m.prototypes_raw_ = bank.raw;
  m.prototype_norms_ = bank.norms;
  m.ppmi_ = ppmi;
  m.build_params(init_seed);
  m.register_params();
  return m;
}

Tensor Model::param(const std::map<std::string, Tensor>& tensors, const std::string& name,
                    Shape shape) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError("checkpoint: missing tensor \"" + name + "\"");
  if (it->second.shape() != shape)
    throw DataError("checkpoint: tensor \"" + name + "\" has shape " + shape_str(it->second.shape()) +
                    ", expected " + shape_str(shape));
  return Tensor::from_data(shape, it->second.data(), true);
}

Model Model::restore(const ConceptDictionary& dict, const ModelConfig& cfg, const DataDims& dims,
                     const Tensor& prototypes_raw, const Tensor& ppmi,
                     const std::map<std::string, Tensor>& tensors) {
  Model m(dict, cfg, dims);
  m.prototypes_raw_ = prototypes_raw.detach();
  m.prototype_norms_.clear();
  for (int64_t i = 0; i < prototypes_raw.dim(0); ++i) {
    double sq = 0.0;
    for (int64_t j = 0; j < prototypes_raw.dim(1); ++j) {
      double v = prototypes_raw.at(i, j);
      sq += v * v;
    }
    m.prototype_norms_.push_back(std::sqrt(sq));
  }
  m.ppmi_ = ppmi.detach();

  int64_t d_t = cfg.d_t, d_v = cfg.d_v, M = dict.node_count();
  m.w_p_ = m.param(tensors, "cde/w_p", {d_t, d_v});
  m.patch_.w1 = m.param(tensors, "patch/w1", {dims.patch_width, d_v});
  m.patch_.b1 = m.param(tensors, "patch/b1", {d_v});
  m.patch_.w2 = m.param(tensors, "patch/w2", {d_v, d_v});
  m.patch_.b2 = m.param(tensors, "patch/b2", {d_v});
  m.mha_.wq = m.param(tensors, "dca/mha_wq", {d_v, d_v});
  m.mha_.wk = m.param(tensors, "dca/mha_wk", {d_v, d_v});
  m.mha_.wv = m.param(tensors, "dca/mha_wv", {d_v, d_v});
  m.mha_.wo = m.param(tensors, "dca/mha_wo", {d_v, d_v});
  m.mha_.heads = cfg.heads;
  m.i2t_key_ = m.param(tensors, "dca/i2t_key", {d_v, d_v});
  for (int64_t k = 0; k < dict.concept_count(); ++k) {
    int64_t mk = dict.value_count(k);
    m.heads_.w.push_back(m.param(tensors, "heads/k" + std::to_string(k) + "_w", {d_v, mk}));
    m.heads_.b.push_back(m.param(tensors, "heads/k" + std::to_string(k) + "_b", {mk}));
  }
  m.graph_.b_scores = m.param(tensors, "graph/b_scores", {M, M});
  m.graph_.k_top = cfg.top_k;
  for (int64_t l = 0; l < cfg.graph_layers; ++l) {
    m.graph_.w_self.push_back(m.param(tensors, "graph/l" + std::to_string(l) + "_w_self", {d_v, d_v}));
    m.graph_.w_neigh.push_back(m.param(tensors, "graph/l" + std::to_string(l) + "_w_neigh", {d_v, d_v}));
  }
  m.w_c_ = m.param(tensors, "diag/w_c", {dict.concept_count() * d_v, dims.classes});
  m.b_c_ = m.param(tensors, "diag/b_c", {dims.classes});
  m.register_params();
  return m;
}

Model::Shared Model::shared_forward() const {
  Shared s;
  s.prototypes = matmul(prototypes_raw_, w_p_);
  if (cfg_.use_graph) s.adjacency = adjacency(graph_, mask_, ppmi_);
  return s;
}

ModelOutput Model::forward(const SampleRecord& sample, const Shared& shared,
                           const ForwardOptions& opts) const {
  int64_t K = dict_.concept_count();
  if (static_cast<int64_t>(sample.concept_labels.size()) != K)
    throw DataError("forward: sample labels " + std::to_string(sample.concept_labels.size()) +
                    " concepts, schema has " + std::to_string(K));
  if (static_cast<int64_t>(sample.patches.size()) != dims_.patch_count * dims_.patch_width)
    throw DataError("forward: sample patch grid does not match model dims");

  ModelOutput out;
  Tensor raw = Tensor::from_data({dims_.patch_count, dims_.patch_width}, sample.patches, false);
  out.tokens = encode_patches(raw, patch_);

  AttentionResult att = t2i_attention(shared.prototypes, out.tokens, mha_, opts.keep_head_maps);
  out.evidence = att.evidence;
  out.attn_full = att.attn_full;
  out.attn_heads = std::move(att.attn_heads);
  out.attn_maps = export_patch_maps(out.attn_full);

  out.alpha = i2t_relevance(out.tokens.cls, shared.prototypes, i2t_key_, cfg_.tau);
  out.h0 = fuse(out.evidence, out.alpha);

  Tensor pooled0 = matmul(pool_, out.h0);  // [K, d_v]
  out.alpha_k = reshape(matmul(pool_, reshape(out.alpha, {dict_.node_count(), 1})), {K});
  out.u = concept_logits(pooled0, heads_);
  out.probs = predicted_value_probs(out.u);

  out.hL = cfg_.use_graph ? propagate(out.h0, shared.adjacency, graph_) : out.h0;
  out.o = diagnose(out.hL);
  out.z = reshape(matmul(pool_, out.hL), {K * cfg_.d_v});
  out.diag_probs = softmax(out.o, 0);
  return out;
}

Tensor Model::diagnose(const Tensor& hL) const {
  int64_t K = dict_.concept_count();
  Tensor pooled = matmul(pool_, hL);                 // [K, d_v] concept features
  Tensor z = reshape(pooled, {K * cfg_.d_v});        // concatenation in concept order
  Tensor o = add(matmul(reshape(z, {1, K * cfg_.d_v}), w_c_), reshape(b_c_, {1, dims_.classes}));
  return reshape(o, {dims_.classes});
}

void Model::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<std::pair<std::string, std::vector<double>>> Model::snapshot() const {
  std::vector<std::pair<std::string, std::vector<double>>> snap;
  snap.reserve(params_.size());
  for (const auto& p : params_) snap.emplace_back(p.name, p.tensor.data());
  return snap;
}

void Model::load_snapshot(const std::vector<std::pair<std::string, std::vector<double>>>& snap) {
  if (snap.size() != params_.size()) throw Error("snapshot: parameter count mismatch");
  for (size_t i = 0; i < snap.size(); ++i) {
    if (snap[i].first != params_[i].name) throw Error("snapshot: parameter order mismatch");
    auto& dst = params_[i].tensor.mutable_data();
    if (dst.size() != snap[i].second.size()) throw Error("snapshot: size mismatch at " + snap[i].first);
    dst = snap[i].second;
  }
}

}  // namespace dcg
