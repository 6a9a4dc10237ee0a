#include "dcg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dcg/error.hpp"

namespace dcg {

namespace {
constexpr double kWeightLo = 0.1;
constexpr double kWeightHi = 10.0;

double clamp_weight(double w) { return std::min(kWeightHi, std::max(kWeightLo, w)); }

Tensor mean_of(std::vector<Tensor> terms) {
  Tensor s = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) s = add(s, terms[i]);
  return scale(s, 1.0 / static_cast<double>(terms.size()));
}
}  // namespace

ClassWeights ClassWeights::uniform(const ConceptDictionary& dict, int classes) {
  ClassWeights w;
  w.diagnosis.assign(static_cast<size_t>(classes), 1.0);
  for (int64_t k = 0; k < dict.concept_count(); ++k)
    w.concept_values.emplace_back(static_cast<size_t>(dict.value_count(k)), 1.0);
  return w;
}

ClassWeights ClassWeights::balanced(const std::vector<int>& diag_labels,
                                    const std::vector<std::vector<int>>& concept_labels,
                                    const ConceptDictionary& dict, int classes) {
  if (diag_labels.empty()) throw DataError("class weights: empty label set");
  ClassWeights w = uniform(dict, classes);
  double n = static_cast<double>(diag_labels.size());

  std::vector<int64_t> diag_counts(static_cast<size_t>(classes), 0);
  for (int y : diag_labels) {
    if (y < 0 || y >= classes) throw DataError("class weights: diagnosis label out of range");
    ++diag_counts[static_cast<size_t>(y)];
  }
  for (int c = 0; c < classes; ++c) {
    int64_t cnt = diag_counts[static_cast<size_t>(c)];
    w.diagnosis[static_cast<size_t>(c)] =
        cnt == 0 ? kWeightHi : clamp_weight(n / (static_cast<double>(classes) * static_cast<double>(cnt)));
  }

  for (int64_t k = 0; k < dict.concept_count(); ++k) {
    int64_t mk = dict.value_count(k);
    std::vector<int64_t> counts(static_cast<size_t>(mk), 0);
    for (const auto& row : concept_labels) ++counts[static_cast<size_t>(row[static_cast<size_t>(k)])];
    for (int64_t m = 0; m < mk; ++m) {
      int64_t cnt = counts[static_cast<size_t>(m)];
      w.concept_values[static_cast<size_t>(k)][static_cast<size_t>(m)] =
          cnt == 0 ? kWeightHi : clamp_weight(n / (static_cast<double>(mk) * static_cast<double>(cnt)));
    }
  }
  return w;
}

Tensor log_softmax1d(const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("log_softmax1d: expected a vector");
  double mx = x.at(0);
  for (int64_t i = 1; i < x.dim(0); ++i) mx = std::max(mx, x.at(i));
  Tensor shifted = sub(x, Tensor::scalar(mx));
  Tensor lse = log(sum(exp(shifted)));
  return sub(shifted, lse);
}

std::vector<double> align_targets(const std::vector<Tensor>& u) {
  std::vector<double> targets;
  targets.reserve(u.size());
  for (const auto& uk : u) {
    Tensor p = softmax(uk.detach(), 0);
    double best = p.at(0);
    for (int64_t i = 1; i < p.dim(0); ++i) best = std::max(best, p.at(i));
    targets.push_back(best);
  }
  return targets;
}

Tensor loss_align(const Tensor& alpha_k, const std::vector<Tensor>& u,
                  const std::vector<double>* frozen_targets) {
  int64_t K = alpha_k.dim(0);
  if (static_cast<int64_t>(u.size()) != K)
    throw ShapeError("loss_align: " + std::to_string(u.size()) + " logit vectors for K=" +
                     std::to_string(K));
  for (int64_t k = 0; k < K; ++k) {
    double a = alpha_k.at(k);
    if (!(a > 0.0 && a < 1.0))
      throw NumericError("loss_align: relevance " + std::to_string(a) + " outside (0,1) at concept " +
                         std::to_string(k));
  }
  std::vector<double> targets = frozen_targets ? *frozen_targets : align_targets(u);
  if (static_cast<int64_t>(targets.size()) != K)
    throw ShapeError("loss_align: target count does not match K");
  Tensor t = Tensor::from_data(Shape{K}, targets, false);
  Tensor one_minus_t = Tensor::from_data(Shape{K}, [&] {
    std::vector<double> v(targets);
    for (auto& x : v) x = 1.0 - x;
    return v;
  }(), false);
  Tensor ones = Tensor::full(Shape{K}, 1.0);
  Tensor bce = neg(add(mul(t, log(alpha_k)), mul(one_minus_t, log(sub(ones, alpha_k)))));
  return mean_all(bce);
}

Tensor loss_concept(const std::vector<Tensor>& u, const std::vector<int>& labels,
                    const ClassWeights& weights) {
  if (u.size() != labels.size()) throw ShapeError("loss_concept: labels do not match logits");
  std::vector<Tensor> terms;
  for (size_t k = 0; k < u.size(); ++k) {
    int64_t mk = u[k].dim(0);
    int a = labels[k];
    if (a < 0 || a >= mk)
      throw DataError("loss_concept: label " + std::to_string(a) + " out of range for concept " +
                      std::to_string(k));
    Tensor logp = log_softmax1d(u[k]);
    Tensor picked = reshape(gather_rows(logp, {static_cast<int64_t>(a)}), {});
    terms.push_back(scale(neg(picked), weights.concept_values[k][static_cast<size_t>(a)]));
  }
  return mean_of(std::move(terms));
}

Tensor skl_divergence(const Tensor& p, const Tensor& q, double eps) {
  if (p.shape() != q.shape()) throw ShapeError("skl: distributions must share a shape");
  auto kl = [eps](const Tensor& a, const Tensor& b) {
    return sum(mul(a, sub(log_floored(a, eps), log_floored(b, eps))));
  };
  return scale(add(kl(p, q), kl(q, p)), 0.5);
}

Tensor loss_cons(const std::vector<Tensor>& u, const Tensor& alpha_k, double eps) {
  int64_t K = alpha_k.dim(0);
  if (K < 2) throw ConfigError("loss_cons: needs K >= 2 concepts");
  if (static_cast<int64_t>(u.size()) != K) throw ShapeError("loss_cons: logits do not match K");

  std::vector<Tensor> scores;
  scores.reserve(u.size());
  for (const auto& uk : u) scores.push_back(reshape(max_last(uk), {1}));
  Tensor p_t2i = softmax(concat(scores, 0), 0);
  Tensor p_i2t = div(alpha_k, sum(alpha_k));
  return skl_divergence(p_t2i, p_i2t, eps);
}

Tensor loss_diag(const Tensor& o, int y, double smoothing, const ClassWeights& weights) {
  int64_t c = o.dim(0);
  if (y < 0 || y >= c)
    throw DataError("loss_diag: label " + std::to_string(y) + " out of range for " +
                    std::to_string(c) + " classes");
  if (smoothing < 0.0 || smoothing >= 0.5) throw ConfigError("loss_diag: smoothing must be in [0,0.5)");
  std::vector<double> q(static_cast<size_t>(c),
                        c > 1 ? smoothing / static_cast<double>(c - 1) : 0.0);
  q[static_cast<size_t>(y)] = 1.0 - smoothing;
  Tensor target = Tensor::from_data(Shape{c}, std::move(q), false);
  Tensor ce = neg(sum(mul(target, log_softmax1d(o))));
  return scale(ce, weights.diagnosis[static_cast<size_t>(y)]);
}

LossBreakdown combine_losses(Tensor align, Tensor concepts, Tensor cons, Tensor diag,
                             const LossWeights& w) {
  const char* names[] = {"align", "concept", "cons", "diag"};
  const Tensor* parts[] = {&align, &concepts, &cons, &diag};
  for (int i = 0; i < 4; ++i)
    if (!std::isfinite(parts[i]->value()))
      throw NumericError(std::string("loss component '") + names[i] + "' is not finite");
  LossBreakdown out;
  out.align = align;
  out.concepts = concepts;
  out.cons = cons;
  out.diag = diag;
  out.total = add(add(add(scale(align, w.align), scale(concepts, w.concepts)), scale(cons, w.cons)),
                  scale(diag, w.diag));
  return out;
}

}  // namespace dcg
