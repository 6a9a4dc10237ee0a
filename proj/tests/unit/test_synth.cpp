#include <cmath>
#include <fstream>
#include <set>

#include <doctest.h>

#include "dcg/dataset.hpp"
#include "dcg/graph.hpp"
#include "dcg/io_util.hpp"
#include "dcg/synth.hpp"
#include "test_util.hpp"

using namespace dcg;

namespace {

// Upper regularized incomplete gamma Q(a,x), series + continued fraction.
double gammq(double a, double x) {
  auto gser = [](double a_, double x_) {
    double ap = a_, sum = 1.0 / a_, del = sum;
    for (int n = 0; n < 200; ++n) {
      ap += 1.0;
      del *= x_ / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-14) break;
    }
    return sum * std::exp(-x_ + a_ * std::log(x_) - std::lgamma(a_));
  };
  auto gcf = [](double a_, double x_) {
    double b = x_ + 1.0 - a_, c = 1e308, d = 1.0 / b, h = d;
    for (int i = 1; i < 200; ++i) {
      double an = -i * (i - a_);
      b += 2.0;
      d = an * d + b;
      if (std::abs(d) < 1e-300) d = 1e-300;
      c = b + an / c;
      if (std::abs(c) < 1e-300) c = 1e-300;
      d = 1.0 / d;
      double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-14) break;
    }
    return std::exp(-x_ + a_ * std::log(x_) - std::lgamma(a_)) * h;
  };
  if (x <= 0.0) return 1.0;
  return x < a + 1.0 ? 1.0 - gser(a, x) : gcf(a, x);
}

SyntheticSpec base_spec() {
  SyntheticSpec s;
  s.classes = 4;
  s.values_per_concept = {2, 3, 2, 3, 2};
  s.table_sharpness = 0.95;
  s.rho = 0.5;
  s.noise = 0.3;
  s.patches = 16;
  s.patch_width = 32;
  s.seed = 21;
  s.n_train = 140;
  s.n_val = 30;
  s.n_test = 30;
  return s;
}

}  // namespace

TEST_CASE("noiseless separable spec records perfect Bayes accuracy") {
  SyntheticSpec s = base_spec();
  s.noise = 0.0;
  s.rho = 0.0;
  s.table_sharpness = 1.0;
  DatasetBundle ds = generate(s);
  REQUIRE(ds.bayes_accuracy.has_value());
  CHECK(*ds.bayes_accuracy == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fully correlated concepts produce positive aligned PPMI") {
  SyntheticSpec s;
  s.classes = 2;
  s.values_per_concept = {2, 2, 2, 2};
  s.table_sharpness = 0.95;
  s.rho = 1.0;
  s.noise = 0.1;
  s.patches = 8;
  s.patch_width = 8;
  s.seed = 5;
  s.n_train = 2000;
  s.n_val = 10;
  s.n_test = 10;
  DatasetBundle ds = generate(s);
  PpmiPrior prior = build_ppmi(concept_label_table(ds.train), ds.schema, 0.0);
  // aligned values of latent g: node (k, (g+k) mod 2)
  for (int g = 0; g < 2; ++g)
    for (int64_t k = 0; k < 4; ++k)
      for (int64_t k2 = k + 1; k2 < 4; ++k2) {
        int64_t i = ds.schema.node_id(k, (g + k) % 2);
        int64_t j = ds.schema.node_id(k2, (g + k2) % 2);
        CHECK(prior.matrix.at(i, j) > 0.2);
      }
}

TEST_CASE("same seed reproduces byte-identical dataset files") {
  testutil::TempDir tmp("synthdet");
  SyntheticSpec s = base_spec();
  write_dataset(generate(s), tmp.path / "a");
  write_dataset(generate(s), tmp.path / "b");
  for (const char* name : {"manifest", "train.records", "val.records", "test.records"}) {
    CHECK(read_text_file(tmp.path / "a" / name) == read_text_file(tmp.path / "b" / name));
  }
}

TEST_CASE("dataset write/read round trip is exact") {
  testutil::TempDir tmp("roundtrip");
  DatasetBundle ds = generate(base_spec());
  write_dataset(ds, tmp.path / "d");
  DatasetBundle back = read_dataset(tmp.path / "d");
  CHECK(back.schema.schema_hash() == ds.schema.schema_hash());
  CHECK(back.classes == ds.classes);
  CHECK(*back.bayes_accuracy == *ds.bayes_accuracy);
  REQUIRE(back.train.size() == ds.train.size());
  for (size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(back.train.samples[i].id == ds.train.samples[i].id);
    CHECK(back.train.samples[i].label == ds.train.samples[i].label);
    CHECK(back.train.samples[i].concept_labels == ds.train.samples[i].concept_labels);
    CHECK(back.train.samples[i].patches == ds.train.samples[i].patches);  // bit-exact floats
  }
}

TEST_CASE("corrupt records are rejected with split and line") {
  testutil::TempDir tmp("corrupt");
  DatasetBundle ds = generate(base_spec());
  write_dataset(ds, tmp.path / "d");

  SUBCASE("truncated last line") {
    auto path = tmp.path / "d" / "test.records";
    std::string text = read_text_file(path);
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        << text.substr(0, text.size() - 1);  // drop final newline
    try {
      read_dataset(tmp.path / "d");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      std::string msg = e.what();
      CHECK(msg.find("test.records line 30") != std::string::npos);
    }
  }

  SUBCASE("bad label") {
    auto path = tmp.path / "d" / "val.records";
    std::string text = read_text_file(path);
    size_t tab = text.find('\t');
    text.replace(tab + 1, 1, "9");
    std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
    try {
      read_dataset(tmp.path / "d");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("val.records line 1") != std::string::npos);
    }
  }

  SUBCASE("duplicate id across splits") {
    auto path = tmp.path / "d" / "val.records";
    std::string train_text = read_text_file(tmp.path / "d" / "train.records");
    std::string first_line = train_text.substr(0, train_text.find('\n') + 1);
    std::string val_text = read_text_file(path);
    // manifest checks sizes, so swap a line rather than appending
    std::string rest = val_text.substr(val_text.find('\n') + 1);
    std::ofstream(path, std::ios::binary | std::ios::trunc) << first_line << rest;
    CHECK_THROWS_AS(read_dataset(tmp.path / "d"), DataError);
  }
}

TEST_CASE("2000-sample dataset stays under the documented size bound") {
  testutil::TempDir tmp("sizebound");
  SyntheticSpec s = base_spec();
  s.n_train = 1400;
  s.n_val = 300;
  s.n_test = 300;
  write_dataset(generate(s), tmp.path / "d");
  uintmax_t total = 0;
  for (const char* name : {"manifest", "train.records", "val.records", "test.records"})
    total += std::filesystem::file_size(tmp.path / "d" / name);
  CHECK(total < 25ull * 1024 * 1024);
}

TEST_CASE("split ids are disjoint and ordered") {
  DatasetBundle ds = generate(base_spec());
  std::set<int64_t> seen;
  for (const Split* sp : {&ds.train, &ds.val, &ds.test}) {
    int64_t prev = -1;
    for (const auto& r : sp->samples) {
      CHECK(seen.insert(r.id).second);
      CHECK(r.id > prev);  // ordered by sample id
      prev = r.id;
    }
  }
  CHECK(seen.size() == 200);
}

TEST_CASE("concept slots partition the patch grid") {
  int64_t K = 5, P = 16;
  std::vector<int> owner(static_cast<size_t>(P), -1);
  for (int64_t k = 0; k < K; ++k)
    for (int64_t p : concept_slots(k, K, P)) {
      CHECK(owner[static_cast<size_t>(p)] == -1);
      owner[static_cast<size_t>(p)] = static_cast<int>(k);
    }
  for (int v : owner) CHECK(v >= 0);
  // every concept needs a slot
  SyntheticSpec bad = base_spec();
  bad.patches = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("noiseless patches are linearly decodable per concept") {
  SyntheticSpec s = base_spec();
  s.noise = 0.0;
  s.n_train = 200;
  DatasetBundle ds = generate(s);
  int64_t K = static_cast<int64_t>(s.values_per_concept.size());
  for (const auto& sample : ds.train.samples) {
    for (int64_t k = 0; k < K; ++k) {
      // template matching on the concept's first slot is a linear probe
      int64_t slot = concept_slots(k, K, s.patches)[0];
      int best = -1;
      double best_score = -1e300;
      for (int m = 0; m < s.values_per_concept[static_cast<size_t>(k)]; ++m) {
        auto sig = value_signature(s.seed, k, m, s.patch_width);
        double score = 0.0;
        for (int64_t d = 0; d < s.patch_width; ++d)
          score += sig[static_cast<size_t>(d)] *
                   sample.patches[static_cast<size_t>(slot * s.patch_width + d)];
        if (score > best_score) {
          best_score = score;
          best = m;
        }
      }
      CHECK(best == sample.concept_labels[static_cast<size_t>(k)]);
    }
  }
}

TEST_CASE("label marginals track the analytic distribution (chi-squared smoke)") {
  SyntheticSpec s = base_spec();
  s.n_train = 10000;
  s.n_val = 10;
  s.n_test = 10;
  s.seed = 33;
  DatasetBundle ds = generate(s);

  for (int y = 0; y < s.classes; ++y) {
    for (int64_t k = 0; k < static_cast<int64_t>(s.values_per_concept.size()); ++k) {
      std::vector<double> expect = value_marginal(s, y, k);
      std::vector<int64_t> observed(expect.size(), 0);
      int64_t n = 0;
      for (const auto& r : ds.train.samples) {
        if (r.label != y) continue;
        ++observed[static_cast<size_t>(r.concept_labels[static_cast<size_t>(k)])];
        ++n;
      }
      double chi2 = 0.0;
      for (size_t m = 0; m < expect.size(); ++m) {
        double e = expect[m] * static_cast<double>(n);
        if (e < 1e-12) continue;
        double d = static_cast<double>(observed[m]) - e;
        chi2 += d * d / e;
      }
      double p = gammq(static_cast<double>(expect.size() - 1) / 2.0, chi2 / 2.0);
      // smoke threshold per the documented sanity check
      CHECK(p > 0.001);
    }
  }
}

TEST_CASE("spec json validation") {
  nlohmann::json j = base_spec().to_json();
  CHECK_NOTHROW(SyntheticSpec::from_json(j));
  j["bogus"] = 1;
  CHECK_THROWS_AS(SyntheticSpec::from_json(j), ConfigError);

  SyntheticSpec bad = base_spec();
  bad.class_value_probs = {{{0.5, 0.6}}};  // wrong shape and sums
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
