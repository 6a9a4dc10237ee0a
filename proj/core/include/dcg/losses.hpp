#pragma once
#include <vector>

#include "dcg/schema.hpp"
#include "dcg/tensor.hpp"

namespace dcg {

// Per-term multipliers on the training objective. The printed objective
// uses unit weights; overrides exist for experiments only.
struct LossWeights {
  double align = 1.0;
  double concepts = 1.0;
  double cons = 1.0;
  double diag = 1.0;
};

// Class-balanced weights for the diagnosis and concept cross-entropies,
// estimated on the training split and clamped to [0.1, 10].
struct ClassWeights {
  std::vector<double> diagnosis;                    // [C_y]
  std::vector<std::vector<double>> concept_values;  // [k][m]

  static ClassWeights uniform(const ConceptDictionary& dict, int classes);
  static ClassWeights balanced(const std::vector<int>& diag_labels,
                               const std::vector<std::vector<int>>& concept_labels,
                               const ConceptDictionary& dict, int classes);
};

// Numerically stable log-softmax of a vector: x - max(x) - ln(sum exp(x - max)).
Tensor log_softmax1d(const Tensor& x);

// Detached BCE targets: max softmax probability per concept.
std::vector<double> align_targets(const std::vector<Tensor>& u);

// Mean over concepts of BCE(alpha_k, t_k) where the target t_k is the
// detached max softmax probability of u_k. alpha outside (0,1) is a
// NumericError. `frozen_targets` substitutes precomputed targets (the
// finite-difference harness freezes them at the base point, since the
// detachment makes them constants of the gradient).
Tensor loss_align(const Tensor& alpha_k, const std::vector<Tensor>& u,
                  const std::vector<double>* frozen_targets = nullptr);

// Mean over concepts of class-weighted cross-entropy of u_k against the
// annotated value.
Tensor loss_concept(const std::vector<Tensor>& u, const std::vector<int>& labels,
                    const ClassWeights& weights);

// 0.5 [KL(p||q) + KL(q||p)] with logs floored at eps.
Tensor skl_divergence(const Tensor& p, const Tensor& q, double eps = 1e-12);

// Symmetrized KL between the concept distribution from T2I value logits
// (softmax over per-concept max logits) and the normalized relevance
// distribution. Logs are floored at eps.
Tensor loss_cons(const std::vector<Tensor>& u, const Tensor& alpha_k, double eps = 1e-12);

// Label-smoothed, class-weighted cross-entropy on diagnosis logits.
Tensor loss_diag(const Tensor& o, int y, double smoothing, const ClassWeights& weights);

struct LossBreakdown {
  Tensor align, concepts, cons, diag, total;
  double align_v() const { return align.value(); }
  double concept_v() const { return concepts.value(); }
  double cons_v() const { return cons.value(); }
  double diag_v() const { return diag.value(); }
  double total_v() const { return total.value(); }
};

// total = w_a*align + w_c*concept + w_k*cons + w_d*diag, summed in that
// order. A non-finite component aborts with the component's name.
LossBreakdown combine_losses(Tensor align, Tensor concepts, Tensor cons, Tensor diag,
                             const LossWeights& w);

}  // namespace dcg
