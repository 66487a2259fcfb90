#include "tfcorr/optim.hpp"

#include <cmath>

namespace tfcorr {

AdamW::AdamW(nn::ParamStore& ps, AdamWConfig cfg) : ps_(&ps), cfg_(cfg) {
  for (const auto& [name, v] : ps.entries()) {
    m_.emplace_back(v->value.shape(), v->value.dtype());
    v_.emplace_back(v->value.shape(), v->value.dtype());
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto& entries = ps_->entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    ad::Node& node = *entries[i].second;
    const int64_t n = node.value.numel();
    const bool has_grad = node.grad.defined();
    for (int64_t j = 0; j < n; ++j) {
      const double g = has_grad ? node.grad.at(j) : 0.0;
      const double mj = cfg_.beta1 * m_[i].at(j) + (1.0 - cfg_.beta1) * g;
      const double vj = cfg_.beta2 * v_[i].at(j) + (1.0 - cfg_.beta2) * g * g;
      m_[i].set(j, mj);
      v_[i].set(j, vj);
      const double update = (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps);
      const double p = node.value.at(j);
      node.value.set(j, p - cfg_.lr * cfg_.weight_decay * p - cfg_.lr * update);
    }
  }
  ps_->zero_grad();
}

Tensor& AdamW::moment_m(const std::string& name) {
  const auto& entries = ps_->entries();
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].first == name) return m_[i];
  fail("AdamW: unknown parameter " + name);
}

Tensor& AdamW::moment_v(const std::string& name) {
  const auto& entries = ps_->entries();
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].first == name) return v_[i];
  fail("AdamW: unknown parameter " + name);
}

double LrSchedule::observe(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_ = 0;
  } else if (++bad_ >= 2) {
    lr_ *= factor_;
    bad_ = 0;
  }
  return lr_;
}

}  // namespace tfcorr
