#include <cmath>

#include <doctest.h>

#include "dcg/attention.hpp"
#include "test_util.hpp"

using namespace dcg;
using testutil::rand_tensor;

namespace {

Tensor identity(int64_t n) {
  std::vector<double> v(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i * n + i)] = 1.0;
  return Tensor::from_data({n, n}, std::move(v));
}

MhaParams identity_mha(int64_t d, int64_t heads) {
  return {identity(d), identity(d), identity(d), identity(d), heads};
}

}  // namespace

TEST_CASE("attention over identical tokens returns the token") {
  int64_t d = 4, P = 3, M = 5;
  std::vector<double> t = {0.5, -1.0, 2.0, 0.25};
  std::vector<double> patches;
  for (int64_t p = 0; p < P; ++p) patches.insert(patches.end(), t.begin(), t.end());
  VisualTokens tokens{Tensor::from_data({d}, t), Tensor::from_data({P, d}, patches)};
  Rng rng(1);
  Tensor protos = rand_tensor({M, d}, rng);
  AttentionResult res = t2i_attention(protos, tokens, identity_mha(d, 1));
  for (int64_t m = 0; m < M; ++m)
    for (int64_t j = 0; j < d; ++j)
      CHECK(res.evidence.at(m, j) == doctest::Approx(t[static_cast<size_t>(j)]).epsilon(1e-12));
}

TEST_CASE("single-head attention matches a closed-form oracle") {
  // 1 query, 2 keys (cls + one patch), identity projections
  int64_t d = 4;
  std::vector<double> q = {0.3, -0.7, 1.1, 0.2};
  std::vector<double> k0 = {1.0, 0.5, -0.25, 0.0};   // cls token
  std::vector<double> k1 = {-0.5, 0.75, 0.4, -1.0};  // patch token
  VisualTokens tokens{Tensor::from_data({d}, k0), Tensor::from_data({1, d}, k1)};
  Tensor protos = Tensor::from_data({1, d}, q);
  AttentionResult res = t2i_attention(protos, tokens, identity_mha(d, 1));

  // independent oracle in plain arithmetic
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  double s0 = dot(q, k0) / std::sqrt(4.0), s1 = dot(q, k1) / std::sqrt(4.0);
  double mx = std::max(s0, s1);
  double w0 = std::exp(s0 - mx), w1 = std::exp(s1 - mx);
  double z = w0 + w1;
  w0 /= z;
  w1 /= z;
  for (int64_t j = 0; j < d; ++j) {
    double expect = w0 * k0[static_cast<size_t>(j)] + w1 * k1[static_cast<size_t>(j)];
    CHECK(res.evidence.at(0, j) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(res.attn_full.at(0, 0) == doctest::Approx(w0).epsilon(1e-12));
  CHECK(res.attn_full.at(0, 1) == doctest::Approx(w1).epsilon(1e-12));
}

TEST_CASE("attention shape contract and head validation") {
  Rng rng(2);
  int64_t d = 8, M = 6, P = 5;
  VisualTokens tokens{rand_tensor({d}, rng), rand_tensor({P, d}, rng)};
  MhaParams mha{rand_tensor({d, d}, rng), rand_tensor({d, d}, rng), rand_tensor({d, d}, rng),
                rand_tensor({d, d}, rng), 4};
  AttentionResult res = t2i_attention(rand_tensor({M, d}, rng), tokens, mha, true);
  CHECK(res.evidence.shape() == Shape{M, d});
  CHECK(res.attn_full.shape() == Shape{M, P + 1});
  CHECK(res.attn_heads.size() == 4);

  mha.heads = 3;  // does not divide 8
  CHECK_THROWS_AS(t2i_attention(rand_tensor({M, d}, rng), tokens, mha), ConfigError);
}

TEST_CASE("exported patch maps are distributions over patches") {
  Rng rng(3);
  int64_t d = 8, M = 4, P = 6;
  VisualTokens tokens{rand_tensor({d}, rng), rand_tensor({P, d}, rng)};
  MhaParams mha{rand_tensor({d, d}, rng), rand_tensor({d, d}, rng), rand_tensor({d, d}, rng),
                rand_tensor({d, d}, rng), 2};
  AttentionResult res = t2i_attention(rand_tensor({M, d}, rng), tokens, mha);
  Tensor maps = export_patch_maps(res.attn_full);
  CHECK(maps.shape() == Shape{M, P});
  for (int64_t m = 0; m < M; ++m) {
    double s = 0.0;
    for (int64_t p = 0; p < P; ++p) s += maps.at(m, p);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("i2t relevance examples") {
  int64_t d = 2;
  Tensor protos = Tensor::from_data({2, d}, {1.0, 0.0, -1.0, 0.0});
  Tensor key_proj = identity(d);

  SUBCASE("zero cls gives 0.5 everywhere") {
    Tensor alpha = i2t_relevance(Tensor::zeros({d}), protos, key_proj, 1.0);
    CHECK(alpha.at(0) == 0.5);
    CHECK(alpha.at(1) == 0.5);
  }

  SUBCASE("hand case sigma(1), sigma(-1)") {
    Tensor alpha = i2t_relevance(Tensor::from_data({d}, {1.0, 0.0}), protos, key_proj, 1.0);
    CHECK(alpha.at(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(alpha.at(1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  }

  SUBCASE("tau changes values but never the ranking") {
    Rng rng(4);
    Tensor cls = rand_tensor({8}, rng);
    Tensor pr = rand_tensor({6, 8}, rng);
    Tensor kp = rand_tensor({8, 8}, rng);
    Tensor a1 = i2t_relevance(cls, pr, kp, 1.0);
    Tensor a2 = i2t_relevance(cls, pr, kp, 2.0);
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 6; ++j)
        CHECK((a1.at(i) < a1.at(j)) == (a2.at(i) < a2.at(j)));
  }

  SUBCASE("tau must be positive") {
    CHECK_THROWS_AS(i2t_relevance(Tensor::zeros({d}), protos, key_proj, 0.0), ConfigError);
    CHECK_THROWS_AS(i2t_relevance(Tensor::zeros({d}), protos, key_proj, -1.0), ConfigError);
  }
}

TEST_CASE("gated fusion") {
  Rng rng(5);
  Tensor evidence = rand_tensor({3, 4}, rng);
  Tensor alpha = Tensor::from_data({3}, {1.0, 0.0, 0.5});
  Tensor fused = fuse(evidence, alpha);
  for (int64_t j = 0; j < 4; ++j) {
    CHECK(fused.at(0, j) == evidence.at(0, j));  // alpha = 1 leaves the row
    CHECK(fused.at(1, j) == 0.0);                // alpha = 0 zeroes it
    CHECK(fused.at(2, j) == 0.5 * evidence.at(2, j));
  }
  // exact factorization: fused == diag(alpha) . evidence
  for (int64_t m = 0; m < 3; ++m)
    for (int64_t j = 0; j < 4; ++j) CHECK(fused.at(m, j) == alpha.at(m) * evidence.at(m, j));
}

TEST_CASE("concept heads") {
  // identical value-node rows pool to that row
  ConceptDictionary d({{"c", {"a", "b"}, {}}}, {});
  Tensor pool = concept_pool_matrix(d);
  Tensor h = Tensor::from_data({2, 3}, {1.0, 2.0, 3.0, 1.0, 2.0, 3.0});
  Tensor pooled = matmul(pool, h);
  CHECK(pooled.at(0, 0) == 1.0);
  CHECK(pooled.at(0, 1) == 2.0);
  CHECK(pooled.at(0, 2) == 3.0);

  // zero weights + bias -> logits equal the bias
  ConceptHeads heads;
  heads.w.push_back(Tensor::zeros({3, 2}));
  heads.b.push_back(Tensor::from_data({2}, {0.7, -0.3}));
  auto u = concept_logits(pooled, heads);
  CHECK(u[0].at(0) == 0.7);
  CHECK(u[0].at(1) == -0.3);

  // hand affine: identity weights, zero bias
  ConceptHeads id_heads;
  id_heads.w.push_back(Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  id_heads.b.push_back(Tensor::zeros({2}));
  Tensor c = Tensor::from_data({1, 2}, {1.0, 2.0});
  auto u2 = concept_logits(c, id_heads);
  CHECK(u2[0].at(0) == 1.0);
  CHECK(u2[0].at(1) == 2.0);
}

TEST_CASE("predicted value probabilities") {
  auto probs = predicted_value_probs({Tensor::from_data({2}, {0.0, 0.0}),
                                      Tensor::from_data({2}, {std::log(1.0), std::log(3.0)})});
  CHECK(probs[0].at(0) == 0.5);
  CHECK(probs[1].at(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(probs[1].at(1) == doctest::Approx(0.75).epsilon(1e-12));

  Rng rng(6);
  Tensor u = rand_tensor({5}, rng, -3.0, 3.0);
  Tensor p = predicted_value_probs({u})[0];
  int64_t arg_u = 0, arg_p = 0;
  for (int64_t i = 1; i < 5; ++i) {
    if (u.at(i) > u.at(arg_u)) arg_u = i;
    if (p.at(i) > p.at(arg_p)) arg_p = i;
  }
  CHECK(arg_u == arg_p);
}

TEST_CASE("patch permutation equivariance") {
  Rng rng(7);
  int64_t d = 8, M = 4, P = 5;
  Tensor cls = rand_tensor({d}, rng);
  Tensor patches = rand_tensor({P, d}, rng);
  Tensor protos = rand_tensor({M, d}, rng);
  MhaParams mha{rand_tensor({d, d}, rng), rand_tensor({d, d}, rng), rand_tensor({d, d}, rng),
                rand_tensor({d, d}, rng), 2};
  Tensor key_proj = rand_tensor({d, d}, rng);

  std::vector<int64_t> perm = {3, 0, 4, 1, 2};
  Tensor permuted = gather_rows(patches, perm);

  AttentionResult r1 = t2i_attention(protos, {cls, patches}, mha);
  AttentionResult r2 = t2i_attention(protos, {cls, permuted}, mha);

  for (int64_t m = 0; m < M; ++m)
    for (int64_t j = 0; j < d; ++j)
      CHECK(r1.evidence.at(m, j) == doctest::Approx(r2.evidence.at(m, j)).epsilon(1e-12));
  // exported columns permute identically
  Tensor m1 = export_patch_maps(r1.attn_full);
  Tensor m2 = export_patch_maps(r2.attn_full);
  for (int64_t m = 0; m < M; ++m)
    for (int64_t p = 0; p < P; ++p)
      CHECK(m2.at(m, p) == doctest::Approx(m1.at(m, perm[static_cast<size_t>(p)])).epsilon(1e-12));
  // relevance does not involve patches at all
  Tensor a1 = i2t_relevance(cls, protos, key_proj, 1.0);
  Tensor a2 = i2t_relevance(cls, protos, key_proj, 1.0);
  for (int64_t i = 0; i < M; ++i) CHECK(a1.at(i) == a2.at(i));
}
