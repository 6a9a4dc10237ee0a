#pragma once
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "dcg/model.hpp"

namespace dcg {

// Versioned binary container: schema JSON + model config + data dims +
// named float64 tensors (parameters plus the prototype and PPMI constants).
// Self-contained: a model can be rebuilt from the file alone.
struct CheckpointData {
  uint32_t version = 1;
  uint64_t schema_hash = 0;
  nlohmann::ordered_json schema_json;
  nlohmann::ordered_json model_config;
  DataDims dims;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model);
CheckpointData load_checkpoint(const std::filesystem::path& path);
Model model_from_checkpoint(const CheckpointData& ckpt);

// Refuses (SchemaError) when the checkpoint was built against a different
// concept schema than the dataset.
void require_schema_match(const CheckpointData& ckpt, const ConceptDictionary& dataset_schema);

}  // namespace dcg
