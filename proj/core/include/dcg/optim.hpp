#pragma once
#include <cstdint>
#include <vector>

#include "dcg/tensor.hpp"

namespace dcg {

// Linear warmup to the peak over the first warmup_frac of total steps,
// then cosine decay toward zero. Step 0 gives 0 (unless warmup is empty);
// the warmup end gives exactly the peak.
double lr_at(int64_t step, int64_t total_steps, double peak_lr, double warmup_frac);

// Adam with decoupled weight decay (beta1=0.9, beta2=0.999, eps=1e-8).
// Decay is applied as theta *= (1 - lr * wd) before the moment update,
// so a zero-gradient step scales parameters by exactly that factor.
class AdamW {
 public:
  AdamW(std::vector<Parameter>& params, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);

  void step(double lr);
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<Parameter>* params_;
  double wd_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace dcg
