#include "dcg/optim.hpp"

#include <cmath>

#include "dcg/error.hpp"

namespace dcg {

double lr_at(int64_t step, int64_t total_steps, double peak_lr, double warmup_frac) {
  if (total_steps < 1) throw ConfigError("lr schedule: total_steps must be >= 1");
  if (warmup_frac < 0.0 || warmup_frac >= 1.0) throw ConfigError("lr schedule: warmup_frac in [0,1)");
  int64_t warmup = static_cast<int64_t>(std::llround(warmup_frac * static_cast<double>(total_steps)));
  if (step < warmup)
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return peak_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

AdamW::AdamW(std::vector<Parameter>& params, double weight_decay, double beta1, double beta2,
             double eps)
    : params_(&params), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.data().size(), 0.0);
    v_.emplace_back(p.tensor.data().size(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  double decay = 1.0 - lr * wd_;
  for (size_t pi = 0; pi < params_->size(); ++pi) {
    Parameter& p = (*params_)[pi];
    auto& theta = p.tensor.mutable_data();
    const bool has_grad = p.tensor.has_grad();
    const std::vector<double>* g = has_grad ? &p.tensor.grad() : nullptr;
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < theta.size(); ++i) {
      theta[i] *= decay;
      double gi = g ? (*g)[i] : 0.0;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace dcg
