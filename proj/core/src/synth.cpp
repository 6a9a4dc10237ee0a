#include "dcg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "dcg/error.hpp"
#include "dcg/rng.hpp"

namespace dcg {

void SyntheticSpec::validate() const {
  if (classes < 2) throw ConfigError("synth: classes must be >= 2");
  if (values_per_concept.empty()) throw ConfigError("synth: need at least one concept");
  for (int mk : values_per_concept)
    if (mk < 2) throw ConfigError("synth: every concept needs >= 2 values");
  if (table_sharpness <= 0.0 || table_sharpness > 1.0)
    throw ConfigError("synth: table_sharpness must be in (0,1]");
  if (rho < 0.0 || rho > 1.0) throw ConfigError("synth: rho must be in [0,1]");
  if (latent_noise < 0.0 || latent_noise >= 1.0) throw ConfigError("synth: latent_noise in [0,1)");
  if (noise < 0.0) throw ConfigError("synth: noise must be non-negative");
  if (patches < static_cast<int64_t>(values_per_concept.size()))
    throw ConfigError("synth: need patches >= concepts so every concept has a slot");
  if (patch_width < 1) throw ConfigError("synth: patch_width must be >= 1");
  if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("synth: all splits need >= 1 sample");

  if (!class_value_probs.empty()) {
    if (static_cast<int>(class_value_probs.size()) != classes)
      throw ConfigError("synth: class_value_probs must have one row set per class");
    for (int y = 0; y < classes; ++y) {
      const auto& per_class = class_value_probs[static_cast<size_t>(y)];
      if (per_class.size() != values_per_concept.size())
        throw ConfigError("synth: class_value_probs[" + std::to_string(y) + "] concept count mismatch");
      for (size_t k = 0; k < per_class.size(); ++k) {
        const auto& row = per_class[k];
        if (static_cast<int>(row.size()) != values_per_concept[k])
          throw ConfigError("synth: distribution row (" + std::to_string(y) + "," + std::to_string(k) +
                            ") has wrong length");
        double s = 0.0;
        for (double p : row) {
          if (p < 0.0) throw ConfigError("synth: negative probability in row (" + std::to_string(y) +
                                         "," + std::to_string(k) + ")");
          s += p;
        }
        if (std::abs(s - 1.0) > 1e-9)
          throw ConfigError("synth: distribution row (" + std::to_string(y) + "," + std::to_string(k) +
                            ") sums to " + std::to_string(s));
      }
    }
  }
}

std::vector<std::vector<std::vector<double>>> SyntheticSpec::tables() const {
  if (!class_value_probs.empty()) return class_value_probs;
  std::vector<std::vector<std::vector<double>>> t(static_cast<size_t>(classes));
  for (int y = 0; y < classes; ++y) {
    for (size_t k = 0; k < values_per_concept.size(); ++k) {
      int mk = values_per_concept[k];
      int target = static_cast<int>((static_cast<size_t>(y) + k) % static_cast<size_t>(mk));
      std::vector<double> row(static_cast<size_t>(mk), (1.0 - table_sharpness) / (mk - 1));
      row[static_cast<size_t>(target)] = table_sharpness;
      t[static_cast<size_t>(y)].push_back(std::move(row));
    }
  }
  return t;
}

ConceptDictionary SyntheticSpec::schema() const {
  std::vector<ConceptSpec> concepts;
  for (size_t k = 0; k < values_per_concept.size(); ++k) {
    ConceptSpec c;
    c.name = "c" + std::to_string(k);
    for (int m = 0; m < values_per_concept[k]; ++m) {
      c.values.push_back("c" + std::to_string(k) + "_v" + std::to_string(m));
      c.synonyms.push_back({"c" + std::to_string(k) + " variant " + std::to_string(m)});
    }
    concepts.push_back(std::move(c));
  }
  return ConceptDictionary(std::move(concepts), default_templates());
}

nlohmann::ordered_json SyntheticSpec::to_json() const {
  nlohmann::ordered_json j;
  j["classes"] = classes;
  j["values_per_concept"] = values_per_concept;
  j["table_sharpness"] = table_sharpness;
  if (!class_value_probs.empty()) j["class_value_probs"] = class_value_probs;
  j["rho"] = rho;
  j["latent_noise"] = latent_noise;
  j["noise"] = noise;
  j["patches"] = patches;
  j["patch_width"] = patch_width;
  j["seed"] = seed;
  j["split"] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
  return j;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  static const std::unordered_set<std::string> known = {
      "classes", "values_per_concept", "table_sharpness", "class_value_probs", "rho",
      "latent_noise", "noise", "patches", "patch_width", "seed", "split"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown synth spec key \"" + it.key() + "\"");
  SyntheticSpec s;
  s.classes = j.value("classes", s.classes);
  s.values_per_concept = j.value("values_per_concept", s.values_per_concept);
  s.table_sharpness = j.value("table_sharpness", s.table_sharpness);
  if (j.contains("class_value_probs"))
    s.class_value_probs = j.at("class_value_probs").get<std::vector<std::vector<std::vector<double>>>>();
  s.rho = j.value("rho", s.rho);
  s.latent_noise = j.value("latent_noise", s.latent_noise);
  s.noise = j.value("noise", s.noise);
  s.patches = j.value("patches", s.patches);
  s.patch_width = j.value("patch_width", s.patch_width);
  s.seed = j.value("seed", s.seed);
  if (j.contains("split")) {
    const auto& sp = j.at("split");
    for (auto it = sp.begin(); it != sp.end(); ++it)
      if (it.key() != "train" && it.key() != "val" && it.key() != "test")
        throw ConfigError("unknown split key \"" + it.key() + "\"");
    s.n_train = sp.value("train", s.n_train);
    s.n_val = sp.value("val", s.n_val);
    s.n_test = sp.value("test", s.n_test);
  }
  s.validate();
  return s;
}

std::vector<int64_t> concept_slots(int64_t k, int64_t concepts, int64_t patches) {
  std::vector<int64_t> slots;
  for (int64_t p = k % concepts; p < patches; p += concepts) slots.push_back(p);
  return slots;
}

std::vector<double> value_signature(uint64_t seed, int64_t k, int64_t m, int64_t width) {
  Rng rng = stream_rng(seed, "signature", static_cast<uint64_t>(k), static_cast<uint64_t>(m));
  std::vector<double> sig(static_cast<size_t>(width));
  for (auto& v : sig) v = rng.normal();
  return sig;
}

namespace {

// q_y over latent indices.
std::vector<double> latent_dist(const SyntheticSpec& spec, int y) {
  std::vector<double> q(static_cast<size_t>(spec.classes),
                        spec.classes > 1 ? spec.latent_noise / (spec.classes - 1) : 0.0);
  q[static_cast<size_t>(y)] = 1.0 - spec.latent_noise;
  return q;
}

int aligned_value(int g, size_t k, int mk) {
  return static_cast<int>((static_cast<size_t>(g) + k) % static_cast<size_t>(mk));
}

int sample_categorical(Rng& rng, const std::vector<double>& p) {
  double u = rng.uniform01();
  double c = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    c += p[i];
    if (u < c) return static_cast<int>(i);
  }
  return static_cast<int>(p.size() - 1);
}

}  // namespace

double exact_bayes_accuracy(const SyntheticSpec& spec) {
  spec.validate();
  auto t = spec.tables();
  size_t K = spec.values_per_concept.size();

  // enumerate all value assignments
  std::vector<int> a(K, 0);
  double acc = 0.0;
  double py = 1.0 / static_cast<double>(spec.classes);
  while (true) {
    double best = 0.0;
    for (int y = 0; y < spec.classes; ++y) {
      auto q = latent_dist(spec, y);
      double pa_y = 0.0;
      for (int g = 0; g < spec.classes; ++g) {
        double prod = q[static_cast<size_t>(g)];
        for (size_t k = 0; k < K && prod > 0.0; ++k) {
          int mk = spec.values_per_concept[k];
          double copy_p = a[k] == aligned_value(g, k, mk) ? spec.rho : 0.0;
          prod *= copy_p + (1.0 - spec.rho) * t[static_cast<size_t>(y)][k][static_cast<size_t>(a[k])];
        }
        pa_y += prod;
      }
      best = std::max(best, py * pa_y);
    }
    acc += best;

    size_t k = 0;
    while (k < K) {
      if (++a[k] < spec.values_per_concept[k]) break;
      a[k] = 0;
      ++k;
    }
    if (k == K) break;
  }
  return acc;
}

std::vector<double> value_marginal(const SyntheticSpec& spec, int y, int64_t k) {
  auto t = spec.tables();
  auto q = latent_dist(spec, y);
  int mk = spec.values_per_concept[static_cast<size_t>(k)];
  std::vector<double> p(static_cast<size_t>(mk), 0.0);
  for (int m = 0; m < mk; ++m) {
    double copy_mass = 0.0;
    for (int g = 0; g < spec.classes; ++g)
      if (aligned_value(g, static_cast<size_t>(k), mk) == m) copy_mass += q[static_cast<size_t>(g)];
    p[static_cast<size_t>(m)] = spec.rho * copy_mass +
                                (1.0 - spec.rho) * t[static_cast<size_t>(y)][static_cast<size_t>(k)][static_cast<size_t>(m)];
  }
  return p;
}

DatasetBundle generate(const SyntheticSpec& spec) {
  spec.validate();
  auto t = spec.tables();
  size_t K = spec.values_per_concept.size();
  int64_t N = spec.n_train + spec.n_val + spec.n_test;
  int64_t P = spec.patches, D = spec.patch_width;

  // Per-(k,m) signatures rendered into the concept's slots.
  std::vector<std::vector<std::vector<double>>> sigs(K);
  for (size_t k = 0; k < K; ++k)
    for (int m = 0; m < spec.values_per_concept[k]; ++m)
      sigs[k].push_back(value_signature(spec.seed, static_cast<int64_t>(k), m, D));

  std::vector<SampleRecord> all;
  all.reserve(static_cast<size_t>(N));
  for (int64_t id = 0; id < N; ++id) {
    // Per-sample stream keyed by id, so generation order never matters.
    Rng rng = stream_rng(spec.seed, "sample", static_cast<uint64_t>(id));
    SampleRecord r;
    r.id = id;
    r.label = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.classes)));

    int g = r.label;
    if (spec.latent_noise > 0.0) {
      double u = rng.uniform01();
      if (u >= 1.0 - spec.latent_noise)
        g = static_cast<int>((r.label + 1 + rng.uniform_int(static_cast<uint64_t>(spec.classes - 1))) %
                             spec.classes);
    }

    r.concept_labels.resize(K);
    for (size_t k = 0; k < K; ++k) {
      int mk = spec.values_per_concept[k];
      if (rng.uniform01() < spec.rho) {
        r.concept_labels[k] = aligned_value(g, k, mk);
      } else {
        r.concept_labels[k] = sample_categorical(rng, t[static_cast<size_t>(r.label)][k]);
      }
    }

    r.patches.resize(static_cast<size_t>(P * D));
    for (auto& v : r.patches) v = spec.noise * rng.normal();
    for (size_t k = 0; k < K; ++k) {
      const auto& sig = sigs[k][static_cast<size_t>(r.concept_labels[k])];
      for (int64_t p : concept_slots(static_cast<int64_t>(k), static_cast<int64_t>(K), P)) {
        double* row = r.patches.data() + p * D;
        for (int64_t d = 0; d < D; ++d) row[d] += sig[static_cast<size_t>(d)];
      }
    }
    all.push_back(std::move(r));
  }

  // Seeded-shuffle split, each split ordered by id.
  std::vector<int64_t> order(static_cast<size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = stream_rng(spec.seed, "split");
  split_rng.shuffle(order);

  DatasetBundle ds{spec.schema(), spec.to_json(), spec.classes, P, D,
                   exact_bayes_accuracy(spec),    {},           {}, {}};
  auto take = [&](int64_t from, int64_t count) {
    std::vector<int64_t> ids(order.begin() + from, order.begin() + from + count);
    std::sort(ids.begin(), ids.end());
    Split s;
    for (int64_t id : ids) s.samples.push_back(all[static_cast<size_t>(id)]);
    return s;
  };
  ds.train = take(0, spec.n_train);
  ds.val = take(spec.n_train, spec.n_val);
  ds.test = take(spec.n_train + spec.n_val, spec.n_test);
  return ds;
}

}  // namespace dcg
