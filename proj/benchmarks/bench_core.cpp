// Microbenchmarks for the training-path hot spots. Run manually:
//   ./build/benchmarks/dcg_benchmarks

#include <benchmark/benchmark.h>

#include "dcg/attention.hpp"
#include "dcg/encoders.hpp"
#include "dcg/graph.hpp"
#include "dcg/losses.hpp"
#include "dcg/model.hpp"
#include "dcg/optim.hpp"
#include "dcg/synth.hpp"
#include "dcg/train.hpp"

using namespace dcg;

namespace {

Tensor rand_mat(int64_t m, int64_t n, Rng& rng, bool rg = false) {
  std::vector<double> d(static_cast<size_t>(m * n));
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return Tensor::from_data({m, n}, std::move(d), rg);
}

struct TrainFixture {
  DatasetBundle ds;
  Model model;
  ClassWeights weights;
  TrainConfig tcfg;

  static TrainFixture make() {
    SyntheticSpec spec;
    spec.classes = 4;
    spec.values_per_concept = {2, 3, 2, 3, 2};
    spec.rho = 0.6;
    spec.noise = 0.3;
    spec.patches = 16;
    spec.patch_width = 32;
    spec.seed = 1;
    spec.n_train = 64;
    spec.n_val = 8;
    spec.n_test = 8;
    DatasetBundle ds = generate(spec);
    ModelConfig cfg;
    HashTextEncoder enc(cfg.encoder_seed, cfg.d_t);
    PrototypeBank bank = build_prototypes(ds.schema, enc);
    PpmiPrior prior = build_ppmi(concept_label_table(ds.train), ds.schema, cfg.ppmi_smoothing);
    Model model = Model::create(ds.schema, cfg, bank, prior.matrix,
                                {spec.patches, spec.patch_width, spec.classes}, 1);
    ClassWeights w = ClassWeights::balanced(diag_label_table(ds.train),
                                            concept_label_table(ds.train), ds.schema, spec.classes);
    return {std::move(ds), std::move(model), std::move(w), {}};
  }
};

void BM_matmul_forward(benchmark::State& state) {
  Rng rng(1);
  int64_t n = state.range(0);
  Tensor a = rand_mat(n, n, rng);
  Tensor b = rand_mat(n, n, rng);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_matmul_forward)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_matmul_backward(benchmark::State& state) {
  Rng rng(2);
  int64_t n = state.range(0);
  Tensor a = rand_mat(n, n, rng, true);
  Tensor b = rand_mat(n, n, rng, true);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    sum(matmul(a, b)).backward();
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(BM_matmul_backward)->Arg(32)->Arg(64);

void BM_mha_forward(benchmark::State& state) {
  Rng rng(3);
  int64_t d = 64, M = 12, P = 16;
  Tensor protos = rand_mat(M, d, rng);
  VisualTokens tokens{Tensor::randn({d}, rng), rand_mat(P, d, rng)};
  MhaParams mha{rand_mat(d, d, rng), rand_mat(d, d, rng), rand_mat(d, d, rng),
                rand_mat(d, d, rng), 4};
  for (auto _ : state) {
    AttentionResult r = t2i_attention(protos, tokens, mha);
    benchmark::DoNotOptimize(r.evidence.data().data());
  }
}
BENCHMARK(BM_mha_forward);

void BM_adjacency_pipeline(benchmark::State& state) {
  Rng rng(4);
  int64_t M = state.range(0);
  GraphParams gp;
  gp.b_scores = rand_mat(M, M, rng, true);
  gp.k_top = 8;
  std::vector<double> mask_d(static_cast<size_t>(M * M), 1.0), prior_d(static_cast<size_t>(M * M));
  for (int64_t i = 0; i < M; ++i) mask_d[static_cast<size_t>(i * M + i)] = 0.0;
  for (auto& v : prior_d) v = rng.uniform(0.0, 2.0);
  Tensor mask = Tensor::from_data({M, M}, mask_d);
  Tensor prior = Tensor::from_data({M, M}, prior_d);
  for (auto _ : state) {
    Tensor adj = adjacency(gp, mask, prior);
    benchmark::DoNotOptimize(adj.data().data());
  }
}
BENCHMARK(BM_adjacency_pipeline)->Arg(12)->Arg(48);

void BM_ppmi_build(benchmark::State& state) {
  SyntheticSpec spec;
  spec.values_per_concept = {2, 3, 2, 3, 2};
  spec.n_train = state.range(0);
  spec.n_val = 1;
  spec.n_test = 1;
  spec.patches = 5;
  spec.patch_width = 8;
  DatasetBundle ds = generate(spec);
  auto labels = concept_label_table(ds.train);
  for (auto _ : state) {
    PpmiPrior p = build_ppmi(labels, ds.schema, 1.0);
    benchmark::DoNotOptimize(p.matrix.data().data());
  }
}
BENCHMARK(BM_ppmi_build)->Arg(1000)->Arg(4000);

void BM_sample_forward(benchmark::State& state) {
  auto fx = TrainFixture::make();
  NoGradGuard ng;
  Model::Shared shared = fx.model.shared_forward();
  for (auto _ : state) {
    ModelOutput out = fx.model.forward(fx.ds.train.samples[0], shared);
    benchmark::DoNotOptimize(out.o.data().data());
  }
}
BENCHMARK(BM_sample_forward);

void BM_train_step(benchmark::State& state) {
  auto fx = TrainFixture::make();
  AdamW opt(fx.model.parameters(), fx.tcfg.weight_decay);
  int64_t batch = 32;
  for (auto _ : state) {
    fx.model.zero_grad();
    Model::Shared shared = fx.model.shared_forward();
    Tensor acc;
    for (int64_t i = 0; i < batch; ++i) {
      const SampleRecord& s = fx.ds.train.samples[static_cast<size_t>(i)];
      ModelOutput out = fx.model.forward(s, shared);
      Tensor total =
          sample_losses(out, s, fx.weights, fx.tcfg.label_smoothing, fx.tcfg.loss_weights).total;
      acc = i == 0 ? total : add(acc, total);
    }
    scale(acc, 1.0 / static_cast<double>(batch)).backward();
    opt.step(1e-4);
    benchmark::DoNotOptimize(fx.model.parameters()[0].tensor.data().data());
  }
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
