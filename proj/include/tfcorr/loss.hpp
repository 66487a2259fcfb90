#pragma once

#include <utility>
#include <vector>

#include "tfcorr/autodiff.hpp"
#include "tfcorr/filters.hpp"

namespace tfcorr {

struct LossReport {
  double total = 0.0;
  double l_tf = 0.0;
  double l_wav = 0.0;
  double l_mc = 0.0;
  std::vector<int> chosen_permutation;
};

// Spectral L1 between one estimate/target pair: mean |mag difference| +
// mean |real difference| + mean |imag difference|. Magnitudes are clamped at
// eps so the gradient stays defined at silent bins.
ad::Var loss_tf_pair(const ad::Var& yre, const ad::Var& yim, const ad::Var& sre,
                     const ad::Var& sim, double eps = 1e-8);

// Mean L1 between equally shaped time signals.
ad::Var loss_wav_pair(const ad::Var& y, const ad::Var& s);

// Mean L1 between the per-element sums of the two stacks (axis 0 = source):
// zero whenever the estimates add up to the same total as the targets.
ad::Var loss_mc(const ad::Var& y, const ad::Var& s);

// Exhaustive assignment over permutations p of {0..K-1}: minimizes
// sum_k cost[k][p[k]]. cost must be square with K <= 6; ties resolve to the
// lexicographically first permutation.
std::pair<std::vector<int>, double> best_assignment(
    const std::vector<std::vector<double>>& cost);

struct PitOutcome {
  ad::Var total;      // scalar; gradients flow only through the winning pairing
  LossReport report;  // component values and the chosen permutation
};

// Permutation-invariant loss over est/ref spectra (K, Mout, T, F), K <= 4.
// est_wav/ref_wav optionally carry time renderings (K, ...), enabling the
// time-domain term (part of the assignment cost) and the mixture-constraint
// term (permutation-invariant, added after the assignment). Pass nullptr to
// run on the spectral term alone.
PitOutcome pit_loss(const SpectraSet& est, const SpectraSet& ref,
                    const ad::Var& est_wav = nullptr,
                    const ad::Var& ref_wav = nullptr);

}  // namespace tfcorr
