#include "dcg/schema.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "dcg/encoders.hpp"
#include "dcg/error.hpp"
#include "dcg/rng.hpp"

namespace dcg {

namespace {

// Substitutes the single "{}" placeholder.
std::string instantiate(const std::string& tmpl, const std::string& name) {
  auto pos = tmpl.find("{}");
  std::string out = tmpl;
  out.replace(pos, 2, name);
  return out;
}

void validate_template(const std::string& tmpl) {
  auto first = tmpl.find("{}");
  if (first == std::string::npos)
    throw SchemaError("template \"" + tmpl + "\" has no {} placeholder");
  if (tmpl.find("{}", first + 2) != std::string::npos)
    throw SchemaError("template \"" + tmpl + "\" has more than one {} placeholder");
}

}  // namespace

ConceptDictionary::ConceptDictionary(std::vector<ConceptSpec> concepts,
                                     std::vector<std::string> templates)
    : concepts_(std::move(concepts)), templates_(std::move(templates)) {
  if (concepts_.empty()) throw SchemaError("dictionary has no concepts");
  std::unordered_set<std::string> cnames;
  for (auto& c : concepts_) {
    if (!cnames.insert(c.name).second) throw SchemaError("duplicate concept name \"" + c.name + "\"");
    if (c.values.size() < 2)
      throw SchemaError("concept \"" + c.name + "\" needs at least 2 values, has " +
                        std::to_string(c.values.size()));
    std::unordered_set<std::string> vnames;
    for (auto& v : c.values)
      if (!vnames.insert(v).second)
        throw SchemaError("duplicate value \"" + v + "\" in concept \"" + c.name + "\"");
    if (c.synonyms.empty()) c.synonyms.assign(c.values.size(), {});
    if (c.synonyms.size() != c.values.size())
      throw SchemaError("concept \"" + c.name + "\": synonym lists must align with values");
  }
  for (const auto& t : templates_) validate_template(t);

  for (size_t k = 0; k < concepts_.size(); ++k) {
    std::vector<int64_t> ids;
    for (size_t m = 0; m < concepts_[k].values.size(); ++m) {
      ids.push_back(node_count_);
      node_to_km_.emplace_back(static_cast<int64_t>(k), static_cast<int64_t>(m));
      ++node_count_;
    }
    concept_nodes_.push_back(std::move(ids));
  }
}

int64_t ConceptDictionary::value_count(int64_t k) const {
  if (k < 0 || k >= concept_count()) throw SchemaError("concept index out of range");
  return static_cast<int64_t>(concepts_[static_cast<size_t>(k)].values.size());
}

int64_t ConceptDictionary::node_id(int64_t k, int64_t m) const {
  if (k < 0 || k >= concept_count() || m < 0 || m >= value_count(k))
    throw SchemaError("node (" + std::to_string(k) + "," + std::to_string(m) + ") out of range");
  return concept_nodes_[static_cast<size_t>(k)][static_cast<size_t>(m)];
}

std::pair<int64_t, int64_t> ConceptDictionary::node_km(int64_t id) const {
  if (id < 0 || id >= node_count_) throw SchemaError("node id out of range");
  return node_to_km_[static_cast<size_t>(id)];
}

const std::vector<int64_t>& ConceptDictionary::concept_nodes(int64_t k) const {
  if (k < 0 || k >= concept_count()) throw SchemaError("concept index out of range");
  return concept_nodes_[static_cast<size_t>(k)];
}

std::string ConceptDictionary::node_name(int64_t id) const {
  auto [k, m] = node_km(id);
  return concepts_[static_cast<size_t>(k)].name + "=" +
         concepts_[static_cast<size_t>(k)].values[static_cast<size_t>(m)];
}

nlohmann::ordered_json ConceptDictionary::to_json() const {
  nlohmann::ordered_json j;
  j["concepts"] = nlohmann::ordered_json::array();
  for (const auto& c : concepts_) {
    nlohmann::ordered_json cj;
    cj["name"] = c.name;
    cj["values"] = c.values;
    cj["synonyms"] = c.synonyms;
    j["concepts"].push_back(std::move(cj));
  }
  j["templates"] = templates_;
  return j;
}

ConceptDictionary ConceptDictionary::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("concepts") || !j.contains("templates"))
    throw SchemaError("schema document needs \"concepts\" and \"templates\"");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "concepts" && it.key() != "templates")
      throw SchemaError("unknown schema key \"" + it.key() + "\"");
  std::vector<ConceptSpec> concepts;
  for (const auto& cj : j.at("concepts")) {
    ConceptSpec c;
    for (auto it = cj.begin(); it != cj.end(); ++it)
      if (it.key() != "name" && it.key() != "values" && it.key() != "synonyms")
        throw SchemaError("unknown concept key \"" + it.key() + "\"");
    c.name = cj.at("name").get<std::string>();
    c.values = cj.at("values").get<std::vector<std::string>>();
    if (cj.contains("synonyms"))
      c.synonyms = cj.at("synonyms").get<std::vector<std::vector<std::string>>>();
    concepts.push_back(std::move(c));
  }
  return ConceptDictionary(std::move(concepts), j.at("templates").get<std::vector<std::string>>());
}

uint64_t ConceptDictionary::schema_hash() const { return fnv1a64(to_json().dump()); }

std::vector<std::string> build_prompts(const ConceptDictionary& dict, int64_t k, int64_t m) {
  if (k < 0 || k >= dict.concept_count() || m < 0 || m >= dict.value_count(k))
    throw SchemaError("build_prompts: node (" + std::to_string(k) + "," + std::to_string(m) +
                      ") out of range");
  const ConceptSpec& c = dict.concepts()[static_cast<size_t>(k)];
  const std::string& value = c.values[static_cast<size_t>(m)];
  const auto& syns = c.synonyms[static_cast<size_t>(m)];

  std::vector<std::string> prompts;
  std::unordered_set<std::string> seen;
  auto push = [&](const std::string& p) {
    if (seen.insert(p).second) prompts.push_back(p);
  };

  push(value);
  for (const auto& s : syns) push(s);
  for (const auto& t : dict.templates()) {
    push(instantiate(t, value));
    for (const auto& s : syns) push(instantiate(t, s));
  }
  return prompts;
}

PrototypeBank build_prototypes(const ConceptDictionary& dict, const TextEncoder& encoder,
                               PromptMode mode) {
  int64_t M = dict.node_count();
  int64_t d_t = encoder.width();
  std::vector<double> raw(static_cast<size_t>(M * d_t), 0.0);
  std::vector<double> norms(static_cast<size_t>(M), 0.0);

  for (int64_t id = 0; id < M; ++id) {
    auto [k, m] = dict.node_km(id);
    std::vector<std::string> prompts;
    if (mode == PromptMode::kBareName) {
      prompts = {dict.concepts()[static_cast<size_t>(k)].values[static_cast<size_t>(m)]};
    } else {
      prompts = build_prompts(dict, k, m);
    }
    double* row = raw.data() + id * d_t;
    for (const auto& p : prompts) {
      std::vector<double> e = encoder.encode(p);
      if (static_cast<int64_t>(e.size()) != d_t)
        throw DataError("encoder returned width " + std::to_string(e.size()) + " for prompt \"" + p +
                        "\", expected " + std::to_string(d_t));
      double nrm = 0.0;
      for (double v : e) nrm += v * v;
      nrm = std::sqrt(nrm);
      if (nrm < 1e-150) throw NumericError("zero-vector embedding for prompt \"" + p + "\"");
      for (int64_t i = 0; i < d_t; ++i) row[i] += e[static_cast<size_t>(i)] / nrm;
    }
    double inv = 1.0 / static_cast<double>(prompts.size());
    double sq = 0.0;
    for (int64_t i = 0; i < d_t; ++i) {
      row[i] *= inv;
      sq += row[i] * row[i];
    }
    norms[static_cast<size_t>(id)] = std::sqrt(sq);
  }

  PrototypeBank bank;
  bank.raw = Tensor::from_data(Shape{M, d_t}, std::move(raw), false);
  bank.d_t = d_t;
  bank.norms = std::move(norms);
  return bank;
}

Tensor project(const PrototypeBank& bank, const Tensor& w_p) {
  return matmul(bank.raw, w_p);
}

const std::vector<std::string>& default_templates() {
  static const std::vector<std::string> kTemplates = {
      "an image showing {}",
      "a clinical photograph showing {}",
      "a specimen with {}",
      "a case presenting {}",
  };
  return kTemplates;
}

}  // namespace dcg
