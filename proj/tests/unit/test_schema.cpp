#include <cmath>
#include <fstream>

#include <doctest.h>

#include "dcg/encoders.hpp"
#include "dcg/io_util.hpp"
#include "dcg/schema.hpp"
#include "test_util.hpp"

using namespace dcg;

namespace {

ConceptDictionary small_dict() {
  ConceptSpec size{"cell_size", {"small", "large"}, {{"tiny"}, {"big", "enlarged"}}};
  ConceptSpec color{"color", {"pale", "dark"}, {{}, {}}};
  return ConceptDictionary({size, color}, {"a cell that is {}"});
}

}  // namespace

TEST_CASE("prompt construction examples") {
  // value "large", no synonyms, one template
  ConceptDictionary d({{"c", {"small", "large"}, {{}, {}}}}, {"a cell that is {}"});
  auto prompts = build_prompts(d, 0, 1);
  REQUIRE(prompts.size() == 2);
  CHECK(prompts[0] == "large");
  CHECK(prompts[1] == "a cell that is large");

  // 1 synonym, 2 templates -> (1+1)*(1+2) = 6 prompts
  ConceptDictionary d2({{"finding", {"none", "erythema"}, {{}, {"red lesion"}}}},
                       {"an image of {}", "skin with {}"});
  CHECK(build_prompts(d2, 0, 1).size() == 6);

  // duplicate synonym equal to the value name is removed; count matches the
  // synonym-free concept
  ConceptDictionary d3({{"c", {"a", "b"}, {{}, {"b"}}}}, {"x {}", "y {}"});
  ConceptDictionary d4({{"c", {"a", "b"}, {{}, {}}}}, {"x {}", "y {}"});
  CHECK(build_prompts(d3, 0, 1) == build_prompts(d4, 0, 1));
}

TEST_CASE("prompt list is pure and order-stable") {
  ConceptDictionary d = small_dict();
  CHECK(build_prompts(d, 0, 1) == build_prompts(d, 0, 1));
}

TEST_CASE("template validation") {
  CHECK_THROWS_AS(ConceptDictionary({{"c", {"a", "b"}, {}}}, {"no placeholder"}), SchemaError);
  CHECK_THROWS_AS(ConceptDictionary({{"c", {"a", "b"}, {}}}, {"{} and {}"}), SchemaError);
}

TEST_CASE("dictionary invariants") {
  CHECK_THROWS_AS(ConceptDictionary({{"c", {"only"}, {}}}, {}), SchemaError);  // M_k >= 2
  CHECK_THROWS_AS(ConceptDictionary({{"c", {"a", "a"}, {}}}, {}), SchemaError);
  CHECK_THROWS_AS(
      ConceptDictionary({{"c", {"a", "b"}, {}}, {"c", {"x", "y"}, {}}}, {}), SchemaError);

  ConceptDictionary d = small_dict();
  CHECK(d.node_count() == 4);
  for (int64_t id = 0; id < d.node_count(); ++id) {
    auto [k, m] = d.node_km(id);
    CHECK(d.node_id(k, m) == id);  // round trip
  }
  CHECK(d.node_name(1) == "cell_size=large");
}

TEST_CASE("schema json round trip and unknown keys") {
  ConceptDictionary d = small_dict();
  ConceptDictionary d2 = ConceptDictionary::from_json(d.to_json());
  CHECK(d2.schema_hash() == d.schema_hash());
  nlohmann::json bad = d.to_json();
  bad["extra"] = 1;
  CHECK_THROWS_AS(ConceptDictionary::from_json(bad), SchemaError);
}

TEST_CASE("prototypes: single prompt is a unit vector, means are not renormalized") {
  // encoder stub: returns fixed unit vectors
  struct Stub final : TextEncoder {
    int64_t width() const override { return 2; }
    std::vector<double> encode(const std::string& p) const override {
      if (p == "a") return {1.0, 0.0};
      if (p == "b") return {0.0, 1.0};
      return {3.0, 4.0};  // normalized internally to (0.6, 0.8)
    }
  };
  // no templates: prompts are just the bare names
  ConceptDictionary d({{"c", {"a", "b"}, {{}, {}}}}, {});
  Stub enc;
  PrototypeBank bank = build_prototypes(d, enc);
  CHECK(bank.norms[0] == doctest::Approx(1.0).epsilon(1e-12));

  // two prompts with orthogonal unit embeddings -> mean (0.5, 0.5), norm < 1
  ConceptDictionary d2({{"c", {"a", "z"}, {{"b"}, {}}}}, {});
  PrototypeBank bank2 = build_prototypes(d2, enc);
  CHECK(bank2.raw.at(0, 0) == 0.5);
  CHECK(bank2.raw.at(0, 1) == 0.5);
  CHECK(bank2.norms[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(bank2.norms[0] < 1.0);
}

TEST_CASE("prototype norms never exceed one") {
  SUBCASE("hash encoder across a real dictionary") {
    ConceptDictionary d = small_dict();
    HashTextEncoder enc(3, 64);
    PrototypeBank bank = build_prototypes(d, enc);
    for (double n : bank.norms) CHECK(n <= 1.0 + 1e-12);
  }
}

TEST_CASE("synonym order does not change the prototype") {
  ConceptSpec a{"c", {"x", "y"}, {{}, {"p", "q"}}};
  ConceptSpec b{"c", {"x", "y"}, {{}, {"q", "p"}}};
  HashTextEncoder enc(9, 32);
  PrototypeBank ba = build_prototypes(ConceptDictionary({a}, {"t {}"}), enc);
  PrototypeBank bb = build_prototypes(ConceptDictionary({b}, {"t {}"}), enc);
  for (int64_t j = 0; j < 32; ++j)
    CHECK(ba.raw.at(1, j) == doctest::Approx(bb.raw.at(1, j)).epsilon(1e-12));
}

TEST_CASE("zero embedding is a normalization error") {
  struct Zero final : TextEncoder {
    int64_t width() const override { return 4; }
    std::vector<double> encode(const std::string&) const override { return {0, 0, 0, 0}; }
  };
  ConceptDictionary d({{"c", {"a", "b"}, {}}}, {});
  Zero enc;
  CHECK_THROWS_AS(build_prototypes(d, enc), NumericError);
}

TEST_CASE("projection: identity, zero, gradient") {
  ConceptDictionary d({{"c", {"a", "b"}, {}}}, {});
  HashTextEncoder enc(1, 8);
  PrototypeBank bank = build_prototypes(d, enc);

  Tensor ident = Tensor::from_data({8, 8}, [] {
    std::vector<double> v(64, 0.0);
    for (int i = 0; i < 8; ++i) v[static_cast<size_t>(i * 8 + i)] = 1.0;
    return v;
  }());
  Tensor p = project(bank, ident);
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 8; ++j) CHECK(p.at(i, j) == bank.raw.at(i, j));

  Tensor zeros = Tensor::zeros({8, 8});
  Tensor pz = project(bank, zeros);
  for (double v : pz.data()) CHECK(v == 0.0);

  // gradient of sum(projected) wrt W_p equals column sums of raw
  Tensor w = Tensor::zeros({8, 8}, true);
  sum(project(bank, w)).backward();
  for (int64_t r = 0; r < 8; ++r) {
    double colsum = bank.raw.at(0, r) + bank.raw.at(1, r);
    for (int64_t c = 0; c < 8; ++c)
      CHECK(w.grad()[static_cast<size_t>(r * 8 + c)] == doctest::Approx(colsum).epsilon(1e-12));
  }
  double numeric = testutil::fd(w, 3, [&] { return sum(project(bank, w)).value(); });
  CHECK(std::abs(numeric - w.grad()[3]) < 1e-6);
}

TEST_CASE("hash encoder determinism, unit norm, spread") {
  auto a = hash_encode("erythema", 42, 128);
  auto b = hash_encode("erythema", 42, 128);
  CHECK(a == b);

  double nrm = 0.0;
  for (double v : a) nrm += v * v;
  CHECK(std::abs(std::sqrt(nrm) - 1.0) <= 1e-12);

  CHECK_THROWS_AS(hash_encode("x", 1, 4), ConfigError);  // d_t >= 8

  // 100 distinct prompts at d_t=128: max pairwise |cosine| < 0.5
  std::vector<std::vector<double>> vecs;
  for (int i = 0; i < 100; ++i) vecs.push_back(hash_encode("prompt " + std::to_string(i), 7, 128));
  double worst = 0.0;
  for (size_t i = 0; i < vecs.size(); ++i)
    for (size_t j = i + 1; j < vecs.size(); ++j) {
      double dot = 0.0;
      for (size_t t = 0; t < vecs[i].size(); ++t) dot += vecs[i][t] * vecs[j][t];
      worst = std::max(worst, std::abs(dot));
    }
  CHECK(worst < 0.5);
}

TEST_CASE("embedding file: load, validate, round trip") {
  testutil::TempDir tmp("emb");
  auto path = tmp.path / "vecs.tsv";

  SUBCASE("three prompts answer exactly") {
    write_embedding_file(path, {{"a", {1, 0, 0, 0}}, {"b", {0, 1, 0, 0}}, {"c d", {0, 0, 0.5, 0}}});
    FileTextEncoder enc = FileTextEncoder::load(path);
    CHECK(enc.width() == 4);
    CHECK(enc.size() == 3);
    CHECK(enc.encode("c d") == std::vector<double>{0, 0, 0.5, 0});
    CHECK_THROWS_AS(enc.encode("missing"), DataError);
  }

  SUBCASE("wrong width names the line") {
    std::ofstream out(path);
    out << "a\t1 2 3\nb\t1 2\n";
    out.close();
    try {
      FileTextEncoder::load(path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }

  SUBCASE("write-then-load reproduces hash_encode bit-exactly") {
    std::vector<std::pair<std::string, std::vector<double>>> recs;
    for (int i = 0; i < 5; ++i) {
      std::string p = "prompt " + std::to_string(i);
      recs.emplace_back(p, hash_encode(p, 11, 16));
    }
    write_embedding_file(path, recs);
    FileTextEncoder enc = FileTextEncoder::load(path);
    for (const auto& [p, v] : recs) CHECK(enc.encode(p) == v);
  }
}
