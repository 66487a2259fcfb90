#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfcorr/nn.hpp"

namespace tfcorr {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

// Adam with decoupled weight decay and bias-corrected moments. Moments live
// in parameter registration order and are exposed by name for checkpointing.
class AdamW {
 public:
  explicit AdamW(nn::ParamStore& ps, AdamWConfig cfg = {});

  // One update from the currently accumulated gradients; missing gradients
  // count as zero (the parameter still decays). Clears all gradients after.
  void step();

  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  AdamWConfig& config() { return cfg_; }
  const AdamWConfig& config() const { return cfg_; }

  Tensor& moment_m(const std::string& name);
  Tensor& moment_v(const std::string& name);

 private:
  nn::ParamStore* ps_;
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Validation-driven decay: after every second consecutive observation that
// fails to improve on the best seen loss, the rate is multiplied by 0.8.
class LrSchedule {
 public:
  explicit LrSchedule(double lr0, double factor = 0.8)
      : lr_(lr0), factor_(factor) {}

  // Feed one validation loss; returns the rate to use from now on.
  double observe(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_;
  double factor_;
  double best_ = HUGE_VAL;
  int bad_ = 0;
};

}  // namespace tfcorr
