#include <cmath>

#include <doctest.h>

#include "dcg/graph.hpp"
#include "test_util.hpp"

using namespace dcg;
using testutil::rand_tensor;

namespace {

ConceptDictionary two_by_two() {
  return ConceptDictionary({{"c0", {"a", "b"}, {}}, {"c1", {"x", "y"}, {}}}, {});
}

}  // namespace

TEST_CASE("ppmi: perfect co-occurrence gives ln 2") {
  // 4 samples; node (c0=a) and (c1=x) always appear together, twice
  ConceptDictionary d = two_by_two();
  std::vector<std::vector<int>> labels = {{0, 0}, {1, 1}, {0, 0}, {1, 1}};
  PpmiPrior prior = build_ppmi(labels, d, 0.0);
  int64_t a = d.node_id(0, 0), x = d.node_id(1, 0);
  CHECK(std::abs(prior.matrix.at(a, x) - std::log(2.0)) <= 1e-9);
  CHECK(prior.matrix.at(a, x) == prior.matrix.at(x, a));  // symmetric
  CHECK(prior.samples == 4);
}

TEST_CASE("ppmi: independent labels drift to zero") {
  ConceptDictionary d = two_by_two();
  Rng rng(99);
  std::vector<std::vector<int>> labels;
  for (int i = 0; i < 10000; ++i)
    labels.push_back({static_cast<int>(rng.uniform_int(2)), static_cast<int>(rng.uniform_int(2))});
  PpmiPrior prior = build_ppmi(labels, d, 0.0);
  double worst = 0.0;
  for (int64_t i = 0; i < d.node_count(); ++i)
    for (int64_t j = 0; j < d.node_count(); ++j) worst = std::max(worst, prior.matrix.at(i, j));
  CHECK(worst < 0.05);
}

TEST_CASE("ppmi: never co-occurring pairs clamp to zero") {
  ConceptDictionary d = two_by_two();
  // (c0=a) only with (c1=x); (c0=a, c1=y) never happens
  std::vector<std::vector<int>> labels = {{0, 0}, {0, 0}, {1, 1}, {1, 1}};
  PpmiPrior prior = build_ppmi(labels, d, 0.0);
  CHECK(prior.matrix.at(d.node_id(0, 0), d.node_id(1, 1)) == 0.0);
}

TEST_CASE("ppmi: diagonal zero, validation") {
  ConceptDictionary d = two_by_two();
  std::vector<std::vector<int>> labels = {{0, 1}};
  PpmiPrior prior = build_ppmi(labels, d, 1.0);
  for (int64_t i = 0; i < d.node_count(); ++i) CHECK(prior.matrix.at(i, i) == 0.0);
  CHECK_THROWS_AS(build_ppmi({}, d, 1.0), DataError);
  CHECK_THROWS_AS(build_ppmi(labels, d, -0.1), ConfigError);
  CHECK_THROWS_AS(build_ppmi({{0, 5}}, d, 1.0), DataError);
}

TEST_CASE("structural mask") {
  // one concept: only intra-concept pairs exist, everything masked
  ConceptDictionary solo({{"c", {"a", "b", "c3"}, {}}}, {});
  Tensor m1 = build_mask(solo);
  for (double v : m1.data()) CHECK(v == 0.0);

  // two concepts of two values: exactly 8 cross-concept ordered pairs
  Tensor m2 = build_mask(two_by_two());
  double ones = 0.0, trace = 0.0;
  for (int64_t i = 0; i < 4; ++i) {
    trace += m2.at(i, i);
    for (int64_t j = 0; j < 4; ++j) ones += m2.at(i, j);
  }
  CHECK(ones == 8.0);
  CHECK(trace == 0.0);
}

TEST_CASE("edge weights") {
  Tensor b = Tensor::zeros({1, 2}, true);
  Tensor r = Tensor::from_data({1, 2}, {1.0, 0.0});
  Tensor a0 = Tensor::from_data({1, 2}, {1.0, 1.0});
  Tensor w = edge_weights(b, r, a0);
  CHECK(w.at(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));  // softplus(0)
  CHECK(w.at(0, 1) == 0.0);  // mask absorbs regardless of B

  // prior zero blocks both value and gradient
  Tensor b2 = Tensor::from_data({1, 2}, {3.0, 3.0}, true);
  Tensor a0z = Tensor::from_data({1, 2}, {0.0, 2.0});
  Tensor ones = Tensor::from_data({1, 2}, {1.0, 1.0});
  Tensor w2 = edge_weights(b2, ones, a0z);
  CHECK(w2.at(0, 0) == 0.0);
  sum(w2).backward();
  CHECK(b2.grad()[0] == 0.0);  // permanently pruned by the prior
  CHECK(b2.grad()[1] > 0.0);
}

TEST_CASE("top-k sparsification") {
  SUBCASE("k >= row size keeps everything") {
    Rng rng(5);
    Tensor u = rand_tensor({3, 4}, rng, 0.0, 2.0, false);
    Tensor s = top_k_sparsify(u, 4);
    for (int64_t i = 0; i < 3; ++i)
      for (int64_t j = 0; j < 4; ++j) CHECK(s.at(i, j) == u.at(i, j));
  }
  SUBCASE("keeps the largest entry") {
    Tensor u = Tensor::from_data({1, 3}, {0.3, 0.1, 0.5});
    Tensor s = top_k_sparsify(u, 1);
    CHECK(s.at(0, 0) == 0.0);
    CHECK(s.at(0, 1) == 0.0);
    CHECK(s.at(0, 2) == 0.5);
  }
  SUBCASE("ties break toward the lower column index") {
    Tensor u = Tensor::from_data({1, 3}, {0.4, 0.4, 0.1});
    Tensor s = top_k_sparsify(u, 1);
    CHECK(s.at(0, 0) == 0.4);
    CHECK(s.at(0, 1) == 0.0);
  }
  SUBCASE("gradient flows through kept entries only") {
    Tensor u = Tensor::from_data({1, 3}, {0.3, 0.1, 0.5}, true);
    sum(top_k_sparsify(u, 1)).backward();
    CHECK(u.grad()[0] == 0.0);
    CHECK(u.grad()[1] == 0.0);
    CHECK(u.grad()[2] == 1.0);
  }
}

TEST_CASE("row normalization examples and property") {
  Tensor s = Tensor::from_data({2, 3}, {2.0, 2.0, 0.0, 0.0, 0.0, 0.0});
  Tensor n = row_normalize(s);
  CHECK(n.at(0, 0) == 0.5);
  CHECK(n.at(1, 1) == 0.0);

  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor m = rand_tensor({5, 5}, rng, 0.0, 3.0, false);
    Tensor r = row_normalize(m);
    for (int64_t i = 0; i < 5; ++i) {
      double total = 0.0;
      for (int64_t j = 0; j < 5; ++j) total += r.at(i, j);
      CHECK((std::abs(total - 1.0) <= 1e-9 || total == 0.0));
    }
  }
}

TEST_CASE("propagation examples") {
  SUBCASE("zero adjacency with identity self map is the identity on non-negative input") {
    GraphParams gp;
    gp.b_scores = Tensor::zeros({2, 2});
    gp.w_self = {Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1})};
    gp.w_neigh = {Tensor::from_data({3, 3}, {0.5, 0.1, 0, 0, 0.2, 0, 0, 0, 0.9})};
    Tensor h0 = Tensor::from_data({2, 3}, {1.0, 0.0, 2.0, 0.5, 3.0, 0.25});
    Tensor adj = Tensor::zeros({2, 2});
    Tensor h1 = propagate(h0, adj, gp);
    for (int64_t i = 0; i < 2; ++i)
      for (int64_t j = 0; j < 3; ++j) CHECK(h1.at(i, j) == h0.at(i, j));
  }
  SUBCASE("hand evaluation M=2 d=1") {
    GraphParams gp;
    gp.w_self = {Tensor::zeros({1, 1})};
    gp.w_neigh = {Tensor::from_data({1, 1}, {1.0})};
    Tensor adj = Tensor::from_data({2, 2}, {0.0, 1.0, 0.0, 0.0});
    Tensor h0 = Tensor::from_data({2, 1}, {3.0, 5.0});
    Tensor h1 = propagate(h0, adj, gp);
    CHECK(h1.at(0, 0) == 5.0);
    CHECK(h1.at(1, 0) == 0.0);
  }
  SUBCASE("zero input stays zero") {
    Rng rng(8);
    GraphParams gp;
    gp.w_self = {rand_tensor({3, 3}, rng), rand_tensor({3, 3}, rng)};
    gp.w_neigh = {rand_tensor({3, 3}, rng), rand_tensor({3, 3}, rng)};
    Tensor adj = row_normalize(rand_tensor({4, 4}, rng, 0.0, 1.0, false));
    Tensor hL = propagate(Tensor::zeros({4, 3}), adj, gp);
    for (double v : hL.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("adjacency pipeline invariants") {
  Rng rng(9);
  ConceptDictionary d({{"c0", {"a", "b"}, {}}, {"c1", {"x", "y"}, {}}, {"c2", {"p", "q", "r"}, {}}},
                      {});
  Tensor mask = build_mask(d);
  int64_t M = d.node_count();
  for (int trial = 0; trial < 25; ++trial) {
    GraphParams gp;
    gp.b_scores = rand_tensor({M, M}, rng, -2.0, 2.0);
    gp.k_top = 2;
    std::vector<double> pr(static_cast<size_t>(M * M));
    for (auto& v : pr) v = rng.uniform01() < 0.3 ? 0.0 : rng.uniform(0.1, 2.0);
    Tensor prior = Tensor::from_data({M, M}, pr, false);
    Tensor adj = adjacency(gp, mask, prior);

    for (int64_t i = 0; i < M; ++i) {
      double total = 0.0;
      int64_t nnz = 0;
      for (int64_t j = 0; j < M; ++j) {
        double w = adj.at(i, j);
        CHECK(w >= 0.0);
        if (w > 0.0) {
          ++nnz;
          // learned edges never escape the structural prior
          CHECK(mask.at(i, j) == 1.0);
          CHECK(prior.at(i, j) > 0.0);
        }
        total += w;
      }
      CHECK(nnz <= gp.k_top);
      CHECK((std::abs(total - 1.0) <= 1e-9 || total == 0.0));
    }
  }
}

TEST_CASE("prior is symmetric, learned adjacency need not be") {
  ConceptDictionary d = two_by_two();
  Rng rng(10);
  std::vector<std::vector<int>> labels;
  for (int i = 0; i < 200; ++i)
    labels.push_back({static_cast<int>(rng.uniform_int(2)), static_cast<int>(rng.uniform_int(2))});
  PpmiPrior prior = build_ppmi(labels, d, 1.0);
  int64_t M = d.node_count();
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < M; ++j) CHECK(prior.matrix.at(i, j) == prior.matrix.at(j, i));

  // engineer non-mutual top-1 selections: node 0 prefers node 2, but node 2
  // prefers node 1
  GraphParams gp;
  std::vector<double> b(static_cast<size_t>(M * M), 0.0);
  b[static_cast<size_t>(0 * M + 2)] = 4.0;
  b[static_cast<size_t>(2 * M + 1)] = 4.0;
  gp.b_scores = Tensor::from_data({M, M}, std::move(b), true);
  gp.k_top = 1;
  Tensor ones_prior = Tensor::full({M, M}, 1.0);
  Tensor adj = adjacency(gp, build_mask(d), ones_prior);
  CHECK(adj.at(0, 2) == 1.0);
  CHECK(adj.at(2, 0) == 0.0);  // top-k and B are row-independent
}

TEST_CASE("propagation matches a naive per-node loop") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    int64_t M = 2 + static_cast<int64_t>(rng.uniform_int(5));  // up to 6
    int64_t dv = 3;
    int64_t L = 1 + static_cast<int64_t>(rng.uniform_int(2));
    GraphParams gp;
    for (int64_t l = 0; l < L; ++l) {
      gp.w_self.push_back(rand_tensor({dv, dv}, rng, -1.0, 1.0, false));
      gp.w_neigh.push_back(rand_tensor({dv, dv}, rng, -1.0, 1.0, false));
    }
    Tensor adj = row_normalize(rand_tensor({M, M}, rng, 0.0, 1.0, false));
    Tensor h0 = rand_tensor({M, dv}, rng, -1.0, 1.0, false);
    Tensor fast = propagate(h0, adj, gp);

    // naive reference: explicit per-node neighbor loop
    std::vector<double> h(h0.data());
    for (int64_t l = 0; l < L; ++l) {
      std::vector<double> next(static_cast<size_t>(M * dv), 0.0);
      for (int64_t i = 0; i < M; ++i) {
        for (int64_t o = 0; o < dv; ++o) {
          double self_term = 0.0, neigh_term = 0.0;
          for (int64_t c = 0; c < dv; ++c) {
            self_term += h[static_cast<size_t>(i * dv + c)] * gp.w_self[static_cast<size_t>(l)].at(c, o);
            double agg = 0.0;
            for (int64_t j = 0; j < M; ++j)
              agg += adj.at(i, j) * h[static_cast<size_t>(j * dv + c)];
            neigh_term += agg * gp.w_neigh[static_cast<size_t>(l)].at(c, o);
          }
          double v = self_term + neigh_term;
          next[static_cast<size_t>(i * dv + o)] = v > 0.0 ? v : 0.0;
        }
      }
      h = std::move(next);
    }
    for (int64_t i = 0; i < M; ++i)
      for (int64_t o = 0; o < dv; ++o)
        CHECK(std::abs(fast.at(i, o) - h[static_cast<size_t>(i * dv + o)]) <= 1e-12);
  }
}
