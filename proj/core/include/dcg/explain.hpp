#pragma once
#include <string>

#include <nlohmann/json.hpp>

#include "dcg/model.hpp"

namespace dcg {

struct ExplainOptions {
  int top_n = 5;          // concepts shown in panels B and C
  int top_patches = 5;    // attention indices per reported node
  int edges_per_node = 3; // strongest outgoing edges per panel-C node
};

// Per-sample explanation record:
//   panel_a: per-concept value probabilities, truth labels, prototype norms
//   panel_b: contribution scores alpha_k * p(predicted value), sorted
//   panel_c: graph neighborhoods of the top concepts' value nodes
//   attention: strongest patch positions for each top concept's predicted node
// Pure function of (model parameters, sample); byte-identical on repeats.
nlohmann::ordered_json build_report(const Model& model, const Model::Shared& shared,
                                    const ModelOutput& out, const SampleRecord& sample,
                                    const ExplainOptions& opts = {});

std::string render_pretty(const nlohmann::ordered_json& report);

}  // namespace dcg
