#include "inflect/optim.hpp"

#include <cmath>

namespace inflect {

AdamW::AdamW(std::vector<Param*> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (Param* p : params_) {
    m_.push_back(Vector<double>::Zero(p->size()));
    v_.push_back(Vector<double>::Zero(p->size()));
  }
}

void AdamW::zero_grad() {
  for (Param* p : params_) p->value.zero_grad();
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    if (!p.trainable || !p.value.has_grad()) continue;
    auto& w = p.value.values();
    const auto& g = p.value.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (Index i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
      w[i] -= config_.lr * (update + config_.weight_decay * w[i]);
    }
  }
}

}  // namespace inflect
