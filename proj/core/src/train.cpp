#include "dcg/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "dcg/error.hpp"
#include "dcg/optim.hpp"

namespace dcg {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (warmup_frac < 0.0 || warmup_frac >= 1.0) throw ConfigError("train: warmup_frac in [0,1)");
  if (label_smoothing < 0.0 || label_smoothing >= 0.5)
    throw ConfigError("train: label_smoothing in [0,0.5)");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["warmup_frac"] = warmup_frac;
  j["label_smoothing"] = label_smoothing;
  j["class_balanced"] = class_balanced;
  j["seed"] = seed;
  j["loss_weights"] = {{"align", loss_weights.align},
                       {"concept", loss_weights.concepts},
                       {"cons", loss_weights.cons},
                       {"diag", loss_weights.diag}};
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  static const std::unordered_set<std::string> known = {
      "lr",          "weight_decay",    "epochs", "batch_size", "warmup_frac",
      "label_smoothing", "class_balanced", "seed",   "loss_weights"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown train config key \"" + it.key() + "\"");
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.class_balanced = j.value("class_balanced", c.class_balanced);
  c.seed = j.value("seed", c.seed);
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    for (auto it = w.begin(); it != w.end(); ++it)
      if (it.key() != "align" && it.key() != "concept" && it.key() != "cons" && it.key() != "diag")
        throw ConfigError("unknown loss weight \"" + it.key() + "\"");
    c.loss_weights.align = w.value("align", 1.0);
    c.loss_weights.concepts = w.value("concept", 1.0);
    c.loss_weights.cons = w.value("cons", 1.0);
    c.loss_weights.diag = w.value("diag", 1.0);
  }
  c.validate();
  return c;
}

LossBreakdown sample_losses(const ModelOutput& out, const SampleRecord& sample,
                            const ClassWeights& weights, double label_smoothing,
                            const LossWeights& loss_weights) {
  Tensor a = loss_align(out.alpha_k, out.u);
  Tensor c = loss_concept(out.u, sample.concept_labels, weights);
  // The consistency term is defined over >= 2 concepts; a single-concept
  // schema contributes zero.
  Tensor k = out.u.size() >= 2 ? loss_cons(out.u, out.alpha_k) : Tensor::scalar(0.0);
  Tensor d = loss_diag(out.o, sample.label, label_smoothing, weights);
  return combine_losses(a, c, k, d, loss_weights);
}

namespace {

bool params_finite(const Model& model) {
  for (const auto& p : model.parameters())
    for (double v : p.tensor.data())
      if (!std::isfinite(v)) return false;
  return true;
}

nlohmann::ordered_json metrics_json(const EvalMetrics& m) {
  return {{"diag_acc", m.diag_acc},
          {"diag_f1", m.diag_macro_f1},
          {"concept_acc", m.concept_acc},
          {"concept_f1", m.concept_macro_f1}};
}

}  // namespace

TrainResult train_model(Model& model, const Split& train, const Split& val,
                        const TrainConfig& cfg) {
  cfg.validate();
  if (train.samples.empty() || val.samples.empty())
    throw DataError("train: both train and val splits must be non-empty");

  TrainResult res;
  ClassWeights weights =
      cfg.class_balanced
          ? ClassWeights::balanced(diag_label_table(train), concept_label_table(train),
                                   model.dict(), model.dims().classes)
          : ClassWeights::uniform(model.dict(), model.dims().classes);

  int64_t n = static_cast<int64_t>(train.samples.size());
  int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  int64_t total_steps = steps_per_epoch * cfg.epochs;

  AdamW opt(model.parameters(), cfg.weight_decay);
  Rng shuffle_rng = stream_rng(cfg.seed, "shuffle");

  auto last_good = model.snapshot();
  res.best_params = last_good;

  auto log = [&](nlohmann::ordered_json j) { res.log_lines.push_back(j.dump()); };
  log({{"type", "config"},
       {"train", cfg.to_json()},
       {"model", model.config().to_json()},
       {"steps_per_epoch", steps_per_epoch},
       {"total_steps", total_steps}});

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int64_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
      int64_t bn = std::min<int64_t>(cfg.batch_size, n - b0);
      try {
        model.zero_grad();
        Model::Shared shared = model.shared_forward();
        Tensor acc_a, acc_c, acc_k, acc_d;
        for (int64_t i = 0; i < bn; ++i) {
          const SampleRecord& s = train.samples[static_cast<size_t>(order[static_cast<size_t>(b0 + i)])];
          ModelOutput out = model.forward(s, shared);
          LossBreakdown lb = sample_losses(out, s, weights, cfg.label_smoothing, cfg.loss_weights);
          acc_a = i == 0 ? lb.align : add(acc_a, lb.align);
          acc_c = i == 0 ? lb.concepts : add(acc_c, lb.concepts);
          acc_k = i == 0 ? lb.cons : add(acc_k, lb.cons);
          acc_d = i == 0 ? lb.diag : add(acc_d, lb.diag);
        }
        double inv = 1.0 / static_cast<double>(bn);
        LossBreakdown batch = combine_losses(scale(acc_a, inv), scale(acc_c, inv),
                                             scale(acc_k, inv), scale(acc_d, inv), cfg.loss_weights);
        batch.total.backward();
        double lr = lr_at(step, total_steps, cfg.lr, cfg.warmup_frac);
        opt.step(lr);
        log({{"type", "step"},
             {"step", step},
             {"epoch", epoch},
             {"lr", lr},
             {"align", batch.align_v()},
             {"concept", batch.concept_v()},
             {"cons", batch.cons_v()},
             {"diag", batch.diag_v()},
             {"total", batch.total_v()}});
        if (params_finite(model)) last_good = model.snapshot();
        ++step;
      } catch (const NumericError& e) {
        res.aborted = true;
        res.abort_reason = e.what();
        if (res.best_epoch < 0) res.best_params = last_good;
        log({{"type", "abort"}, {"step", step}, {"epoch", epoch}, {"reason", e.what()}});
        return res;
      }
    }

    EvalMetrics m = evaluate_split(model, val);
    bool is_best = m.diag_macro_f1 > res.best_val_f1;
    if (is_best) {
      res.best_val_f1 = m.diag_macro_f1;
      res.best_epoch = epoch;
      res.best_params = model.snapshot();
    }
    nlohmann::ordered_json ej = {{"type", "epoch"}, {"epoch", epoch}};
    ej["val"] = metrics_json(m);
    ej["best"] = is_best;
    log(ej);
  }

  log({{"type", "done"}, {"best_epoch", res.best_epoch}, {"best_val_f1", res.best_val_f1}});
  return res;
}

EvalMetrics evaluate_split(const Model& model, const Split& split) {
  if (split.samples.empty()) throw DataError("evaluate: empty split");
  NoGradGuard ng;
  Model::Shared shared = model.shared_forward();

  int classes = model.dims().classes;
  int64_t K = model.dict().concept_count();
  std::vector<ClassCounts> diag_counts(static_cast<size_t>(classes));
  std::vector<ClassCounts> value_counts(static_cast<size_t>(model.dict().node_count()));
  std::vector<int64_t> concept_correct(static_cast<size_t>(K), 0);
  int64_t diag_correct = 0;

  for (const auto& s : split.samples) {
    ModelOutput out = model.forward(s, shared);
    int pred = 0;
    for (int c = 1; c < classes; ++c)
      if (out.o.at(c) > out.o.at(pred)) pred = c;
    if (pred == s.label) ++diag_correct;
    tally(diag_counts, s.label, pred);

    for (int64_t k = 0; k < K; ++k) {
      const Tensor& uk = out.u[static_cast<size_t>(k)];
      int vpred = 0;
      for (int64_t m = 1; m < uk.dim(0); ++m)
        if (uk.at(m) > uk.at(vpred)) vpred = static_cast<int>(m);
      int truth = s.concept_labels[static_cast<size_t>(k)];
      if (vpred == truth) ++concept_correct[static_cast<size_t>(k)];
      // one-vs-rest over global node ids
      int truth_node = static_cast<int>(model.dict().node_id(k, truth));
      int pred_node = static_cast<int>(model.dict().node_id(k, vpred));
      tally(value_counts, truth_node, pred_node);
    }
  }

  double nsamp = static_cast<double>(split.samples.size());
  EvalMetrics m;
  m.diag_acc = static_cast<double>(diag_correct) / nsamp;
  m.diag_macro_f1 = macro_f1(diag_counts);
  double acc_sum = 0.0;
  for (int64_t k = 0; k < K; ++k)
    acc_sum += static_cast<double>(concept_correct[static_cast<size_t>(k)]) / nsamp;
  m.concept_acc = acc_sum / static_cast<double>(K);
  m.concept_macro_f1 = macro_f1(value_counts);
  return m;
}

}  // namespace dcg
