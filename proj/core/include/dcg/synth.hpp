#pragma once
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcg/dataset.hpp"

namespace dcg {

// Generator spec for concept-annotated synthetic datasets.
//
// Sampling model, per sample:
//   y ~ uniform over classes
//   g ~ q_y  (latent shared index over classes: q_y(y) = 1 - latent_noise,
//             the rest uniform)
//   per concept k, independently: with probability rho copy the latent
//   (a_k = (g + k) mod M_k), otherwise draw a_k from class_value_probs[y][k].
//   Patches are N(0, noise^2) plus, for each concept, a fixed pseudo-random
//   signature vector for (k, a_k) added into that concept's patch slots.
//
// With explicit tables absent, class y targets value (y + k) mod M_k with
// probability table_sharpness and spreads the rest uniformly.
struct SyntheticSpec {
  int classes = 4;
  std::vector<int> values_per_concept = {2, 3, 2, 3, 2};
  double table_sharpness = 0.95;
  std::vector<std::vector<std::vector<double>>> class_value_probs;  // optional [y][k][m]
  double rho = 0.5;
  double latent_noise = 0.0;
  double noise = 0.3;
  int64_t patches = 16;
  int64_t patch_width = 32;
  uint64_t seed = 1;
  int64_t n_train = 1400, n_val = 300, n_test = 300;

  void validate() const;
  std::vector<std::vector<std::vector<double>>> tables() const;  // explicit or built
  ConceptDictionary schema() const;

  nlohmann::ordered_json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);  // unknown keys are errors
};

// Patch slots owned by concept k: indices congruent to k modulo K. Generator
// validation requires patches >= concepts so every concept has a slot.
std::vector<int64_t> concept_slots(int64_t k, int64_t concepts, int64_t patches);

// Fixed signature vector rendered for value (k,m); entries are i.i.d.
// standard normal from a per-(seed,k,m) stream.
std::vector<double> value_signature(uint64_t seed, int64_t k, int64_t m, int64_t width);

// Exact accuracy of the Bayes-optimal classifier P(y|a) under the generative
// model, by enumeration over all value assignments.
double exact_bayes_accuracy(const SyntheticSpec& spec);

// Analytic per-concept value marginal P(a_k = m | y).
std::vector<double> value_marginal(const SyntheticSpec& spec, int y, int64_t k);

// Deterministic generation; the split assignment is a seeded shuffle and
// each split is ordered by sample id.
DatasetBundle generate(const SyntheticSpec& spec);

}  // namespace dcg
