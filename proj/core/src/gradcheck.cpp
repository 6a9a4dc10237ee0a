#include "dcg/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "dcg/attention.hpp"
#include "dcg/encoders.hpp"
#include "dcg/error.hpp"
#include "dcg/graph.hpp"
#include "dcg/losses.hpp"
#include "dcg/model.hpp"
#include "dcg/synth.hpp"
#include "dcg/tensor.hpp"
#include "dcg/train.hpp"

namespace dcg {

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;

double rel_err(double analytic, double numeric) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), 0.1});
  return std::abs(analytic - numeric) / denom;
}

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0,
                   bool requires_grad = true) {
  int64_t n = shape_numel(shape);
  std::vector<double> d(static_cast<size_t>(n));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

// Keeps values away from the ReLU/max kinks so finite differences stay on
// one side of the selection.
Tensor rand_tensor_nudged(Shape shape, Rng& rng) {
  Tensor t = rand_tensor(std::move(shape), rng);
  for (auto& v : t.mutable_data())
    if (std::abs(v) < 1e-3) v = v < 0 ? v - 1e-3 : v + 1e-3;
  return t;
}

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

GradCheckReport compare_case(const std::string& name, std::vector<Tensor> inputs, const LossFn& f,
                             bool corrupt) {
  auto start = std::chrono::steady_clock::now();
  GradCheckReport rep;
  rep.name = name;

  for (auto& in : inputs) in.zero_grad();  // cases may share leaf tensors
  Tensor loss = f(inputs);
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) analytic.push_back(in.has_grad() ? in.grad() : std::vector<double>(in.data().size(), 0.0));
  if (corrupt && !analytic.empty() && !analytic[0].empty()) analytic[0][0] += 1e-2;

  for (size_t i = 0; i < inputs.size(); ++i) {
    auto& data = inputs[i].mutable_data();
    for (size_t j = 0; j < data.size(); ++j) {
      double orig = data[j];
      data[j] = orig + kStep;
      double up = f(inputs).value();
      data[j] = orig - kStep;
      double down = f(inputs).value();
      data[j] = orig;
      double numeric = (up - down) / (2.0 * kStep);
      double e = rel_err(analytic[i][j], numeric);
      ++rep.coords;
      if (e > rep.max_rel) {
        rep.max_rel = e;
        rep.worst = name + ":input" + std::to_string(i) + "[" + std::to_string(j) + "]";
      }
    }
  }
  rep.pass = rep.max_rel < kTol;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// Scalarizes a tensor against a fixed random probe so every output
// coordinate contributes to the checked gradient.
Tensor probe(const Tensor& t, uint64_t salt) {
  Rng rng(0x9d2c5680u ^ salt);
  Tensor w = rand_tensor(t.shape(), rng, -1.0, 1.0, false);
  return sum(mul(t, w));
}

struct OpCase {
  std::string name;
  std::function<GradCheckReport(bool corrupt)> run;
};

GradCheckReport composite_model_check(bool corrupt);

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name, std::vector<Tensor> inputs, LossFn f) {
    cases.push_back({name, [name, inputs = std::move(inputs), f = std::move(f)](bool corrupt) {
                       return compare_case(name, inputs, f, corrupt);
                     }});
  };

  Rng rng(20240521);

  add_case("matmul", {rand_tensor({3, 4}, rng), rand_tensor({4, 2}, rng)},
           [](const std::vector<Tensor>& in) { return probe(matmul(in[0], in[1]), 1); });
  add_case("add", {rand_tensor({3, 4}, rng), rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(add(in[0], in[1]), 2); });
  add_case("add_rowvec", {rand_tensor({3, 4}, rng), rand_tensor({4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(add(in[0], in[1]), 3); });
  add_case("add_scalar", {rand_tensor({3, 4}, rng), rand_tensor({}, rng)},
           [](const std::vector<Tensor>& in) { return probe(add(in[0], in[1]), 4); });
  add_case("sub", {rand_tensor({3, 4}, rng), rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(sub(in[0], in[1]), 5); });
  add_case("mul", {rand_tensor({3, 4}, rng), rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(mul(in[0], in[1]), 6); });
  add_case("mul_rowvec", {rand_tensor({3, 4}, rng), rand_tensor({4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(mul(in[0], in[1]), 7); });
  add_case("div", {rand_tensor({3, 4}, rng), rand_tensor({3, 4}, rng, 0.5, 2.0)},
           [](const std::vector<Tensor>& in) { return probe(div(in[0], in[1]), 8); });
  add_case("scale", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(scale(in[0], -1.7), 9); });
  add_case("transpose", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(transpose(in[0]), 10); });
  add_case("scale_rows", {rand_tensor({3, 4}, rng), rand_tensor({3}, rng)},
           [](const std::vector<Tensor>& in) { return probe(scale_rows(in[0], in[1]), 11); });
  add_case("exp", {rand_tensor({3, 4}, rng, -1.5, 1.5)},
           [](const std::vector<Tensor>& in) { return probe(exp(in[0]), 12); });
  add_case("log", {rand_tensor({3, 4}, rng, 0.1, 2.2)},
           [](const std::vector<Tensor>& in) { return probe(log(in[0]), 13); });
  add_case("log_floored", {rand_tensor({3, 4}, rng, 0.1, 2.2)},
           [](const std::vector<Tensor>& in) { return probe(log_floored(in[0], 1e-12), 14); });
  add_case("relu", {rand_tensor_nudged({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(relu(in[0]), 15); });
  add_case("sigmoid", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(sigmoid(in[0]), 16); });
  add_case("softplus", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(softplus(in[0]), 17); });
  add_case("softmax_rows", {rand_tensor({3, 5}, rng)},
           [](const std::vector<Tensor>& in) { return probe(softmax(in[0], 1), 18); });
  add_case("softmax_cols", {rand_tensor({3, 5}, rng)},
           [](const std::vector<Tensor>& in) { return probe(softmax(in[0], 0), 19); });
  add_case("softmax_vec", {rand_tensor({6}, rng)},
           [](const std::vector<Tensor>& in) { return probe(softmax(in[0], 0), 20); });
  add_case("sum", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return sum(in[0]); });
  add_case("sum_axis0", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(sum(in[0], 0), 21); });
  add_case("sum_axis1", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(sum(in[0], 1), 22); });
  add_case("mean_all", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return mean_all(in[0]); });
  add_case("mean_axis0", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(mean(in[0], 0), 23); });
  add_case("mean_axis1", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(mean(in[0], 1), 24); });
  add_case("reshape", {rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(reshape(in[0], {2, 6}), 25); });
  add_case("concat_vec", {rand_tensor({3}, rng), rand_tensor({4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(concat({in[0], in[1]}, 0), 26); });
  add_case("concat_rows", {rand_tensor({2, 4}, rng), rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(concat({in[0], in[1]}, 0), 27); });
  add_case("concat_cols", {rand_tensor({3, 2}, rng), rand_tensor({3, 4}, rng)},
           [](const std::vector<Tensor>& in) { return probe(concat({in[0], in[1]}, 1), 28); });
  add_case("gather_rows", {rand_tensor({5, 3}, rng)}, [](const std::vector<Tensor>& in) {
    return probe(gather_rows(in[0], {4, 0, 2, 0}), 29);
  });
  add_case("gather_cols", {rand_tensor({3, 5}, rng)}, [](const std::vector<Tensor>& in) {
    return probe(gather_cols(in[0], {1, 3, 1}), 30);
  });
  add_case("max_last_vec", {rand_tensor_nudged({6}, rng)},
           [](const std::vector<Tensor>& in) { return max_last(in[0]); });
  add_case("max_last_rows", {rand_tensor_nudged({3, 5}, rng)},
           [](const std::vector<Tensor>& in) { return probe(max_last(in[0]), 31); });
  add_case("l2_normalize_rows", {rand_tensor({3, 5}, rng)},
           [](const std::vector<Tensor>& in) { return probe(l2_normalize_rows(in[0]), 32); });

  // row_normalize over strictly positive entries; the zero-row convention
  // is a forward contract and unit-tested separately.
  add_case("row_normalize", {rand_tensor({4, 5}, rng, 0.05, 2.0)},
           [](const std::vector<Tensor>& in) { return probe(row_normalize_nonneg(in[0]), 33); });

  // log-softmax composition used by every cross-entropy
  add_case("log_softmax", {rand_tensor({5}, rng)},
           [](const std::vector<Tensor>& in) { return probe(log_softmax1d(in[0]), 34); });

  // adjacency pipeline: softplus(B) . R . A0 -> top-k -> row normalize.
  // Margins between kept and dropped entries are kept clear of the step.
  {
    int64_t M = 6, k_top = 2;
    Tensor B = rand_tensor({M, M}, rng);
    std::vector<double> mask_d(static_cast<size_t>(M * M), 1.0), prior_d(static_cast<size_t>(M * M));
    for (int64_t i = 0; i < M; ++i) mask_d[static_cast<size_t>(i * M + i)] = 0.0;
    for (auto& v : prior_d) v = rng.uniform(0.2, 2.0);
    Tensor R = Tensor::from_data({M, M}, mask_d, false);
    Tensor A0 = Tensor::from_data({M, M}, prior_d, false);
    Tensor H0 = rand_tensor({M, 3}, rng);
    Tensor Wself = rand_tensor({3, 3}, rng, -0.8, 0.8);
    Tensor Wneigh = rand_tensor({3, 3}, rng, -0.8, 0.8);
    auto f = [R, A0, k_top](const std::vector<Tensor>& in) {
      GraphParams gp;
      gp.b_scores = in[0];
      gp.k_top = k_top;
      gp.w_self = {in[2]};
      gp.w_neigh = {in[3]};
      Tensor adj = adjacency(gp, R, A0);
      return probe(propagate(in[1], adj, gp), 35);
    };
    // veto seeds whose top-k margins sit within the FD step
    for (int tries = 0; tries < 64; ++tries) {
      Tensor unnorm = edge_weights(B, R, A0);
      double min_margin = 1.0;
      for (int64_t i = 0; i < M; ++i) {
        std::vector<double> row;
        for (int64_t j = 0; j < M; ++j) row.push_back(unnorm.at(i, j));
        std::sort(row.begin(), row.end(), std::greater<>());
        min_margin = std::min(min_margin, row[static_cast<size_t>(k_top - 1)] -
                                              row[static_cast<size_t>(k_top)]);
      }
      if (min_margin > 1e-3) break;
      B = rand_tensor({M, M}, rng);
    }
    add_case("graph_pipeline", {B, H0, Wself, Wneigh}, f);
  }

  // attention blocks
  {
    int64_t M = 3, P = 4, d_v = 6;
    Tensor protos = rand_tensor({M, d_v}, rng, -1.0, 1.0);
    Tensor cls = rand_tensor({d_v}, rng, -1.0, 1.0);
    Tensor patches = rand_tensor({P, d_v}, rng, -1.0, 1.0);
    Tensor wq = rand_tensor({d_v, d_v}, rng, -0.6, 0.6);
    Tensor wk = rand_tensor({d_v, d_v}, rng, -0.6, 0.6);
    Tensor wv = rand_tensor({d_v, d_v}, rng, -0.6, 0.6);
    Tensor wo = rand_tensor({d_v, d_v}, rng, -0.6, 0.6);
    add_case("t2i_attention", {protos, cls, patches, wq, wk, wv, wo},
             [d_v](const std::vector<Tensor>& in) {
               MhaParams mp{in[3], in[4], in[5], in[6], 2};
               VisualTokens vt{in[1], in[2]};
               return probe(t2i_attention(in[0], vt, mp).evidence, 36);
             });
    Tensor keyp = rand_tensor({d_v, d_v}, rng, -0.6, 0.6);
    add_case("i2t_relevance", {cls, protos, keyp}, [](const std::vector<Tensor>& in) {
      return probe(i2t_relevance(in[0], in[1], in[2], 0.7), 37);
    });
  }

  cases.push_back({"composite_model", composite_model_check});
  return cases;
}

// End-to-end objective on a tiny model: every parameter coordinate against
// central differences, 2-sample batch.
GradCheckReport composite_model_check(bool corrupt) {
  auto start = std::chrono::steady_clock::now();
  GradCheckReport rep;
  rep.name = "composite_model";

  SyntheticSpec spec;
  spec.classes = 3;
  spec.values_per_concept = {2, 2};
  spec.rho = 0.4;
  spec.noise = 0.4;
  spec.patches = 4;
  spec.patch_width = 6;
  spec.seed = 91;
  spec.n_train = 6;
  spec.n_val = 1;
  spec.n_test = 1;
  DatasetBundle ds = generate(spec);

  ModelConfig cfg;
  cfg.d_t = 16;
  cfg.d_v = 8;
  cfg.heads = 2;
  cfg.graph_layers = 2;
  cfg.top_k = 2;
  cfg.encoder_seed = 5;
  Model model = [&] {
    HashTextEncoder enc(cfg.encoder_seed, cfg.d_t);
    PrototypeBank bank = build_prototypes(ds.schema, enc, PromptMode::kFull);
    PpmiPrior prior = build_ppmi(concept_label_table(ds.train), ds.schema, cfg.ppmi_smoothing);
    DataDims dims{spec.patches, spec.patch_width, spec.classes};
    return Model::create(ds.schema, cfg, bank, prior.matrix, dims, 1234);
  }();

  // Move every parameter to a generic point: zero-initialized heads would
  // leave entire paths at exactly zero gradient.
  Rng jitter(777);
  for (auto& p : model.parameters())
    for (auto& v : p.tensor.mutable_data()) v += jitter.uniform(-0.35, 0.35);

  ClassWeights weights = ClassWeights::balanced(diag_label_table(ds.train),
                                                concept_label_table(ds.train), ds.schema, spec.classes);
  LossWeights lw;
  const std::vector<SampleRecord> batch = {ds.train.samples[0], ds.train.samples[1]};

  // The alignment targets are detached in the objective, so the function
  // under finite differences holds them at their base-point values.
  std::vector<std::vector<double>> frozen(batch.size());
  {
    NoGradGuard ng;
    Model::Shared shared = model.shared_forward();
    for (size_t i = 0; i < batch.size(); ++i)
      frozen[i] = align_targets(model.forward(batch[i], shared).u);
  }

  auto eval_loss = [&]() {
    Model::Shared shared = model.shared_forward();
    Tensor acc;
    for (size_t i = 0; i < batch.size(); ++i) {
      ModelOutput out = model.forward(batch[i], shared);
      Tensor a = loss_align(out.alpha_k, out.u, &frozen[i]);
      Tensor c = loss_concept(out.u, batch[i].concept_labels, weights);
      Tensor k = loss_cons(out.u, out.alpha_k);
      Tensor d = loss_diag(out.o, batch[i].label, 0.05, weights);
      Tensor total = combine_losses(a, c, k, d, lw).total;
      acc = i == 0 ? total : add(acc, total);
    }
    return scale(acc, 1.0 / static_cast<double>(batch.size()));
  };

  model.zero_grad();
  Tensor loss = eval_loss();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& p : model.parameters())
    analytic.push_back(p.tensor.has_grad() ? p.tensor.grad()
                                           : std::vector<double>(p.tensor.data().size(), 0.0));
  if (corrupt) analytic[0][0] += 1e-2;

  for (size_t pi = 0; pi < model.parameters().size(); ++pi) {
    auto& data = model.parameters()[pi].tensor.mutable_data();
    for (size_t j = 0; j < data.size(); ++j) {
      double orig = data[j];
      data[j] = orig + kStep;
      double up = eval_loss().value();
      data[j] = orig - kStep;
      double down = eval_loss().value();
      data[j] = orig;
      double numeric = (up - down) / (2.0 * kStep);
      double e = rel_err(analytic[pi][j], numeric);
      ++rep.coords;
      if (e > rep.max_rel) {
        rep.max_rel = e;
        rep.worst = model.parameters()[pi].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  rep.pass = rep.max_rel < kTol;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& c : op_cases()) names.push_back(c.name);
  return names;
}

std::vector<GradCheckReport> run_gradchecks(const GradCheckOptions& opts) {
  std::vector<GradCheckReport> reports;
  bool matched = false;
  bool corrupt_pending = opts.corrupt;
  for (const auto& c : op_cases()) {
    if (!opts.only_op.empty() && c.name != opts.only_op) continue;
    matched = true;
    reports.push_back(c.run(corrupt_pending));
    corrupt_pending = false;  // damage only the first checked op
  }
  if (!opts.only_op.empty() && !matched)
    throw ConfigError("gradcheck: unknown op \"" + opts.only_op + "\"");
  return reports;
}

bool all_passed(const std::vector<GradCheckReport>& reports) {
  for (const auto& r : reports)
    if (!r.pass) return false;
  return !reports.empty();
}

}  // namespace dcg
