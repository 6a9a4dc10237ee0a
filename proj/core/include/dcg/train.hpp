#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcg/losses.hpp"
#include "dcg/metrics.hpp"
#include "dcg/model.hpp"

namespace dcg {

struct TrainConfig {
  double lr = 5e-5;
  double weight_decay = 5e-3;
  int epochs = 30;
  int batch_size = 32;
  double warmup_frac = 0.05;
  double label_smoothing = 0.05;
  bool class_balanced = true;
  uint64_t seed = 1;
  LossWeights loss_weights;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);  // unknown keys are errors
};

struct TrainResult {
  bool aborted = false;
  std::string abort_reason;
  int best_epoch = -1;
  double best_val_f1 = -1.0;
  // Parameter buffers of the best-validation-macro-F1 state (or the last
  // finite state when training aborts before any validation).
  std::vector<std::pair<std::string, std::vector<double>>> best_params;
  std::vector<std::string> log_lines;  // line-delimited JSON records
};

// Losses of one sample's forward pass.
LossBreakdown sample_losses(const ModelOutput& out, const SampleRecord& sample,
                            const ClassWeights& weights, double label_smoothing,
                            const LossWeights& loss_weights);

// Full training run: AdamW with decoupled decay, warmup+cosine schedule,
// per-epoch validation, best-diagnosis-macro-F1 checkpoint retention.
// Deterministic given (model init, config.seed).
TrainResult train_model(Model& model, const Split& train, const Split& val,
                        const TrainConfig& cfg);

// Diagnosis accuracy/macro-F1 plus concept accuracy/macro-F1. Concept
// metrics are computed on the pre-graph value logits u_k; concept accuracy
// is macro over concepts and concept F1 macro over all (concept,value)
// classes.
EvalMetrics evaluate_split(const Model& model, const Split& split);

}  // namespace dcg
