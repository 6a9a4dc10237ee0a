#include "dcg/explain.hpp"

#include <algorithm>
#include <sstream>

#include "dcg/error.hpp"
#include "dcg/io_util.hpp"

namespace dcg {

namespace {

struct Contribution {
  int64_t k;
  double relevance, prob, contribution;
  int predicted;
};

}  // namespace

nlohmann::ordered_json build_report(const Model& model, const Model::Shared& shared,
                                    const ModelOutput& out, const SampleRecord& sample,
                                    const ExplainOptions& opts) {
  const ConceptDictionary& dict = model.dict();
  int64_t K = dict.concept_count();

  nlohmann::ordered_json rep;
  rep["sample_id"] = sample.id;

  int pred = 0;
  for (int c = 1; c < model.dims().classes; ++c)
    if (out.diag_probs.at(c) > out.diag_probs.at(pred)) pred = c;
  rep["prediction"] = {{"label", pred}, {"class_probs", out.diag_probs.data()}};
  rep["truth_label"] = sample.label;

  // Panel A: concept-value probabilities next to ground truth.
  nlohmann::ordered_json panel_a = nlohmann::ordered_json::array();
  std::vector<Contribution> contribs;
  for (int64_t k = 0; k < K; ++k) {
    const ConceptSpec& c = dict.concepts()[static_cast<size_t>(k)];
    const Tensor& p = out.probs[static_cast<size_t>(k)];
    int vpred = 0;
    for (int64_t m = 1; m < p.dim(0); ++m)
      if (p.at(m) > p.at(vpred)) vpred = static_cast<int>(m);
    std::vector<double> norms;
    for (int64_t id : dict.concept_nodes(k))
      norms.push_back(model.prototype_norms()[static_cast<size_t>(id)]);
    panel_a.push_back({{"concept", c.name},
                       {"values", c.values},
                       {"probs", p.data()},
                       {"label", sample.concept_labels[static_cast<size_t>(k)]},
                       {"prototype_norms", norms}});
    contribs.push_back({k, out.alpha_k.at(k), p.at(vpred), out.alpha_k.at(k) * p.at(vpred), vpred});
  }
  rep["panel_a"] = std::move(panel_a);

  // Panel B: contribution = relevance x predicted-value probability.
  std::stable_sort(contribs.begin(), contribs.end(), [](const Contribution& a, const Contribution& b) {
    if (a.contribution != b.contribution) return a.contribution > b.contribution;
    return a.k < b.k;
  });
  int64_t top_n = std::min<int64_t>(opts.top_n, K);

  nlohmann::ordered_json panel_b = nlohmann::ordered_json::array();
  for (int64_t t = 0; t < top_n; ++t) {
    const auto& c = contribs[static_cast<size_t>(t)];
    panel_b.push_back({{"concept", dict.concepts()[static_cast<size_t>(c.k)].name},
                       {"predicted_value",
                        dict.concepts()[static_cast<size_t>(c.k)].values[static_cast<size_t>(c.predicted)]},
                       {"relevance", c.relevance},
                       {"prob", c.prob},
                       {"contribution", c.contribution}});
  }
  rep["panel_b"] = std::move(panel_b);

  // Panel C: graph neighborhoods of the top concepts' value nodes.
  nlohmann::ordered_json panel_c = nlohmann::ordered_json::array();
  bool has_graph = shared.adjacency.defined();
  int64_t M = dict.node_count();
  for (int64_t t = 0; t < top_n; ++t) {
    int64_t k = contribs[static_cast<size_t>(t)].k;
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (int64_t id : dict.concept_nodes(k)) {
      nlohmann::ordered_json edges = nlohmann::ordered_json::array();
      if (has_graph) {
        std::vector<std::pair<double, int64_t>> row;
        for (int64_t j = 0; j < M; ++j) {
          double w = shared.adjacency.at(id, j);
          if (w > 0.0) row.emplace_back(w, j);
        }
        std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
          if (a.first != b.first) return a.first > b.first;
          return a.second < b.second;
        });
        int64_t limit = std::min<int64_t>(opts.edges_per_node, static_cast<int64_t>(row.size()));
        for (int64_t e = 0; e < limit; ++e)
          edges.push_back({{"to", row[static_cast<size_t>(e)].second},
                           {"to_name", dict.node_name(row[static_cast<size_t>(e)].second)},
                           {"weight", row[static_cast<size_t>(e)].first}});
      }
      nodes.push_back({{"node", id}, {"name", dict.node_name(id)}, {"edges", std::move(edges)}});
    }
    panel_c.push_back({{"concept", dict.concepts()[static_cast<size_t>(k)].name},
                       {"nodes", std::move(nodes)}});
  }
  rep["panel_c"] = std::move(panel_c);

  // Attention: top patch positions for each top concept's predicted node.
  nlohmann::ordered_json attn = nlohmann::ordered_json::array();
  int64_t P = out.attn_maps.dim(1);
  for (int64_t t = 0; t < top_n; ++t) {
    const Contribution& c = contribs[static_cast<size_t>(t)];
    int64_t node = dict.node_id(c.k, c.predicted);
    std::vector<int64_t> idx(static_cast<size_t>(P));
    for (int64_t j = 0; j < P; ++j) idx[static_cast<size_t>(j)] = j;
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
      double wa = out.attn_maps.at(node, a), wb = out.attn_maps.at(node, b);
      if (wa != wb) return wa > wb;
      return a < b;
    });
    int64_t limit = std::min<int64_t>(opts.top_patches, P);
    std::vector<int64_t> top(idx.begin(), idx.begin() + limit);
    attn.push_back({{"concept", dict.concepts()[static_cast<size_t>(c.k)].name},
                    {"node", node},
                    {"name", dict.node_name(node)},
                    {"top_patches", top}});
  }
  rep["attention"] = std::move(attn);
  return rep;
}

std::string render_pretty(const nlohmann::ordered_json& rep) {
  std::ostringstream os;
  os << "sample " << rep.at("sample_id").get<int64_t>() << "\n";
  os << "  predicted class " << rep.at("prediction").at("label").get<int>() << " (truth "
     << rep.at("truth_label").get<int>() << "), probs [";
  const auto& probs = rep.at("prediction").at("class_probs");
  for (size_t i = 0; i < probs.size(); ++i)
    os << (i ? " " : "") << format_double(probs[i].get<double>());
  os << "]\n";

  os << "  A) concept-value probabilities\n";
  for (const auto& a : rep.at("panel_a")) {
    os << "     " << a.at("concept").get<std::string>() << ": ";
    const auto& vals = a.at("values");
    const auto& ps = a.at("probs");
    int label = a.at("label").get<int>();
    for (size_t m = 0; m < vals.size(); ++m) {
      os << (m ? ", " : "") << vals[m].get<std::string>() << "="
         << format_double(ps[m].get<double>());
      if (static_cast<int>(m) == label) os << "*";
    }
    os << "\n";
  }

  os << "  B) contributions (relevance x predicted prob)\n";
  for (const auto& b : rep.at("panel_b"))
    os << "     " << b.at("concept").get<std::string>() << " -> "
       << b.at("predicted_value").get<std::string>() << ": "
       << format_double(b.at("contribution").get<double>()) << "\n";

  os << "  C) graph neighborhoods\n";
  for (const auto& c : rep.at("panel_c")) {
    os << "     " << c.at("concept").get<std::string>() << ":\n";
    for (const auto& nd : c.at("nodes")) {
      os << "       " << nd.at("name").get<std::string>() << " ->";
      if (nd.at("edges").empty()) os << " (no outgoing edges)";
      for (const auto& e : nd.at("edges"))
        os << " " << e.at("to_name").get<std::string>() << "("
           << format_double(e.at("weight").get<double>()) << ")";
      os << "\n";
    }
  }

  os << "  attention hot patches\n";
  for (const auto& a : rep.at("attention")) {
    os << "     " << a.at("name").get<std::string>() << ": [";
    const auto& tp = a.at("top_patches");
    for (size_t i = 0; i < tp.size(); ++i) os << (i ? " " : "") << tp[i].get<int64_t>();
    os << "]\n";
  }
  return os.str();
}

}  // namespace dcg
