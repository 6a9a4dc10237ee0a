#pragma once
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcg/attention.hpp"
#include "dcg/dataset.hpp"
#include "dcg/graph.hpp"
#include "dcg/schema.hpp"
#include "dcg/tensor.hpp"

namespace dcg {

struct ModelConfig {
  int64_t d_t = 128;
  int64_t d_v = 64;
  int64_t heads = 4;
  double tau = 1.0;
  int64_t graph_layers = 2;
  int64_t top_k = 8;
  double ppmi_smoothing = 1.0;
  bool use_graph = true;           // false: bottleneck reads the fused features directly
  std::string prompt_mode = "full";  // "full" | "bare"
  std::string encoder = "hash";      // "hash" | "file"
  uint64_t encoder_seed = 17;
  std::string embedding_file;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);  // unknown keys are errors
};

struct DataDims {
  int64_t patch_count = 0;  // P
  int64_t patch_width = 0;  // d_in
  int classes = 0;          // C_y
};

struct ForwardOptions {
  bool keep_head_maps = false;
};

// Everything a loss or report needs from one sample's pass.
struct ModelOutput {
  VisualTokens tokens;
  Tensor evidence;   // [M, d_v]
  Tensor attn_full;  // [M, P+1] detached
  Tensor attn_maps;  // [M, P] detached, renormalized over patches
  std::vector<Tensor> attn_heads;
  Tensor alpha;    // [M]
  Tensor alpha_k;  // [K]
  Tensor h0;       // [M, d_v]
  Tensor hL;       // [M, d_v]
  std::vector<Tensor> u;      // per-concept value logits
  std::vector<Tensor> probs;  // softmax of u
  Tensor z;                   // [K*d_v]
  Tensor o;                   // [C_y]
  Tensor diag_probs;          // [C_y]
};

// The full network: prototype projection, dual cross-attention, concept
// graph, and the strictly concept-mediated diagnosis head.
class Model {
 public:
  // Fresh parameters. `prior` is the PPMI prior built from the training
  // split; `bank` the prototype bank for the schema.
  static Model create(const ConceptDictionary& dict, const ModelConfig& cfg,
                      const PrototypeBank& bank, const Tensor& ppmi, const DataDims& dims,
                      uint64_t init_seed);

  // Rebuild from checkpoint contents (schema, config, dims, named tensors).
  static Model restore(const ConceptDictionary& dict, const ModelConfig& cfg, const DataDims& dims,
                       const Tensor& prototypes_raw, const Tensor& ppmi,
                       const std::map<std::string, Tensor>& tensors);

  // Sample-independent context, recomputed once per optimizer step (the
  // adjacency depends on trainable scores, so it is never cached across
  // steps).
  struct Shared {
    Tensor prototypes;  // [M, d_v] projected
    Tensor adjacency;   // [M, M] row-stochastic; undefined when !use_graph
  };
  Shared shared_forward() const;

  ModelOutput forward(const SampleRecord& sample, const Shared& shared,
                      const ForwardOptions& opts = {}) const;

  // Diagnosis head on its own: pool per concept, concatenate, affine.
  // forward() routes through this same code path, so replaying it from a
  // captured hL reproduces the logits bit for bit.
  Tensor diagnose(const Tensor& hL) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  void zero_grad();

  const ConceptDictionary& dict() const { return dict_; }
  const ModelConfig& config() const { return cfg_; }
  const DataDims& dims() const { return dims_; }
  const Tensor& prototypes_raw() const { return prototypes_raw_; }
  const std::vector<double>& prototype_norms() const { return prototype_norms_; }
  const Tensor& ppmi() const { return ppmi_; }
  const Tensor& mask() const { return mask_; }
  const GraphParams& graph() const { return graph_; }

  // Copies of parameter buffers, in registry order.
  std::vector<std::pair<std::string, std::vector<double>>> snapshot() const;
  void load_snapshot(const std::vector<std::pair<std::string, std::vector<double>>>& snap);

 private:
  Model(const ConceptDictionary& dict, ModelConfig cfg, DataDims dims);
  void build_params(uint64_t init_seed);
  void register_params();
  Tensor param(const std::map<std::string, Tensor>& tensors, const std::string& name, Shape shape);

  ConceptDictionary dict_;
  ModelConfig cfg_;
  DataDims dims_;

  Tensor prototypes_raw_;  // [M, d_t] constant
  std::vector<double> prototype_norms_;
  Tensor ppmi_;  // [M, M] constant
  Tensor mask_;  // [M, M] constant
  Tensor pool_;  // [K, M] constant

  Tensor w_p_;
  PatchEncoderParams patch_;
  MhaParams mha_;
  Tensor i2t_key_;
  ConceptHeads heads_;
  GraphParams graph_;
  Tensor w_c_, b_c_;

  std::vector<Parameter> params_;
};

}  // namespace dcg
