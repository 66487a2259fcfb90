#pragma once

#include <span>
#include <vector>

#include "tfcorr/tensor.hpp"

namespace tfcorr {

// Energy-ratio SDR in dB, capped at +60 (exact match) and floored at -60
// (zero estimate). Throws on an all-zero reference.
double sdr(std::span<const float> est, std::span<const float> ref);

// Scale-invariant SDR: the reference is replaced by its projection scaling
// before the ratio, so a rescaled perfect estimate still hits the cap.
double si_sdr(std::span<const float> est, std::span<const float> ref);

struct MetricReport {
  std::vector<int> permutation;  // slot k of the estimates matched ref perm[k]
  double sdr = 0.0;              // mean over sources, best permutation
  double si_sdr = 0.0;
  double sdr_mix = 0.0;  // mixture-as-estimate baseline, same targets
  double sdri = 0.0;     // sdr - sdr_mix
};

// Scores K estimated streams against K references under the assignment that
// maximizes mean SDR. `mixture` supplies the baseline for SDRi (typically the
// reference-microphone mixture, identical for every source slot).
MetricReport score_separation(const std::vector<std::vector<float>>& est,
                              const std::vector<std::vector<float>>& ref,
                              const std::vector<float>& mixture);

}  // namespace tfcorr
