#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcg/tensor.hpp"

namespace dcg {

class TextEncoder;

// One clinical concept and its mutually exclusive values. Synonyms are
// per-value and may be empty.
struct ConceptSpec {
  std::string name;
  std::vector<std::string> values;
  std::vector<std::vector<std::string>> synonyms;  // aligned with values; may be empty
};

// The concept/value/synonym/template schema plus the canonical node
// indexing. Node ids are contiguous, concept-major: (k,m) -> id.
class ConceptDictionary {
 public:
  ConceptDictionary(std::vector<ConceptSpec> concepts, std::vector<std::string> templates);

  int64_t concept_count() const { return static_cast<int64_t>(concepts_.size()); }
  int64_t node_count() const { return node_count_; }  // M = sum_k M_k
  int64_t value_count(int64_t k) const;               // M_k

  int64_t node_id(int64_t k, int64_t m) const;
  std::pair<int64_t, int64_t> node_km(int64_t id) const;
  const std::vector<int64_t>& concept_nodes(int64_t k) const;
  std::string node_name(int64_t id) const;  // "concept=value"

  const std::vector<ConceptSpec>& concepts() const { return concepts_; }
  const std::vector<std::string>& templates() const { return templates_; }

  nlohmann::ordered_json to_json() const;
  static ConceptDictionary from_json(const nlohmann::json& j);
  // FNV-1a of the canonical JSON serialization; checkpoints and datasets
  // must agree on this before a model touches data.
  uint64_t schema_hash() const;

 private:
  std::vector<ConceptSpec> concepts_;
  std::vector<std::string> templates_;
  std::vector<std::pair<int64_t, int64_t>> node_to_km_;
  std::vector<std::vector<int64_t>> concept_nodes_;
  int64_t node_count_ = 0;
};

// Prompt set for value (k,m): the bare value name, its synonyms, then each
// template instantiated with the name and with each synonym. Deduplicated,
// order-stable.
std::vector<std::string> build_prompts(const ConceptDictionary& dict, int64_t k, int64_t m);

enum class PromptMode {
  kFull,      // name + synonyms + template expansions
  kBareName,  // single bare value-name prompt (prototype-ensembling ablation)
};

// Fixed semantic anchors queried by both attention branches. `raw` rows
// are means of l2-normalized prompt embeddings and are NOT re-normalized,
// so row norms are <= 1; `norms` records them for explanation reports.
struct PrototypeBank {
  Tensor raw;  // M x d_t, constant
  int64_t d_t = 0;
  std::vector<double> norms;
};

PrototypeBank build_prototypes(const ConceptDictionary& dict, const TextEncoder& encoder,
                               PromptMode mode = PromptMode::kFull);

// Projection into the visual embedding space; gradient reaches w_p only.
Tensor project(const PrototypeBank& bank, const Tensor& w_p);

// Default neutral clinical templates used by generated schemas.
const std::vector<std::string>& default_templates();

}  // namespace dcg
