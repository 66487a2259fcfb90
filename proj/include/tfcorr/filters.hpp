#pragma once

#include "tfcorr/autodiff.hpp"

namespace tfcorr {

// Input spectra with +-L neighbouring frames stacked per bin: row l*M + m
// holds channel m delayed by l - L frames, zero padded at the clip edges.
struct StackedSpectra {
  ad::Var re, im;  // ((2L+1)*M, T, F)
  int64_t mics = 0;
  int taps = 0;  // 2L+1
};

StackedSpectra stack_taps(const ad::Var& re, const ad::Var& im, int L);

// Complex bin-wise filters, one row per stacked input channel.
struct FilterSet {
  ad::Var re, im;  // (K, M_out, (2L+1)*M, T, F)
};

// Complex spectra per separated source and output channel.
struct SpectraSet {
  ad::Var re, im;  // (K, M_out, T, F)
};

// y_{k,tf} = W_{k,tf} x_tf, expanded into four real contractions over the
// stacked channel axis.
SpectraSet apply_filters(const FilterSet& w, const StackedSpectra& x);

}  // namespace tfcorr
