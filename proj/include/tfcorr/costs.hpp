#pragma once

#include <string>
#include <vector>

#include "tfcorr/model.hpp"

namespace tfcorr {

struct CostLine {
  std::string name;
  int64_t params = 0;
  double macs_per_s = 0.0;  // multiply-accumulates per second of input audio
};

// Analytic cost model. Parameter counts follow the registration exactly
// (cross-checked against the live store in tests). MACs count matmul, conv,
// attention, and filtering contractions; normalizations, gates' activations,
// pooling, and the STFT itself are excluded. Sequence lengths use
// sample_rate/hop frames per second; pooled lengths divide exactly rather
// than rounding up, so stage cost is strictly affine in R.
struct CostReport {
  std::vector<CostLine> lines;
  int64_t total_params = 0;
  double total_macs_per_s = 0.0;
};

CostReport count_costs(const ModelConfig& cfg);

}  // namespace tfcorr
