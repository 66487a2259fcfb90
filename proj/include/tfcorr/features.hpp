#pragma once

#include <string>

#include "tfcorr/autodiff.hpp"
#include "tfcorr/nn.hpp"

namespace tfcorr {

// Per-frequency compression exponents, either learned through a sigmoid or
// held at an exact constant (the constant path supports exact 0 and 1).
class BetaParams {
 public:
  static BetaParams trainable(nn::ParamStore& ps, const std::string& name,
                              int64_t bins, double init_raw = 0.0);
  static BetaParams fixed(int64_t bins, double value, Dtype dtype);

  // (bins,) exponents; sigmoid(raw) when trainable, the constant otherwise.
  ad::Var values() const;
  bool is_trainable() const { return static_cast<bool>(raw_); }
  int64_t bins() const { return bins_; }

 private:
  ad::Var raw_;
  ad::Var fixed_;
  int64_t bins_ = 0;
};

// Inter-microphone correlations for the lexicographic pair list
// (0,0), (0,1), ..., (0,M-1), (1,1), ..., (M-1,M-1).
struct CorrelationTensor {
  ad::Var re, im;  // (pairs, T, F), pairs = M(M+1)/2
  int64_t mics = 0;

  int64_t pairs() const { return mics * (mics + 1) / 2; }
};

// Phi_{tf,mm'} = X_{tf,m} * conj(X_{tf,m'}) from (M, T, F) re/im planes.
// Diagonal entries have exactly zero imaginary part by construction.
CorrelationTensor pairwise_correlations(const ad::Var& re, const ad::Var& im);

// Phi' = Phi / |Phi|^beta with beta per frequency, computed as
// Phi * exp(-beta * log(max(|Phi|, eps))) so that beta == 0 is an exact
// identity and magnitudes below eps stop compressing rather than blowing up.
CorrelationTensor phat_beta(const CorrelationTensor& c, const ad::Var& beta,
                            double eps = 1e-8);

// (M(M+1), T, F): every pair's real plane, then every pair's imaginary plane.
ad::Var flatten_correlations(const CorrelationTensor& c);

// Ablation features sharing the (channels, T, F) layout:
// raw spectra, (2M, T, F): real planes then imaginary planes.
ad::Var raw_features(const ad::Var& re, const ad::Var& im);
// reference magnitude plus cos/sin inter-channel phase differences,
// (1 + 2(M-1), T, F).
ad::Var magipd_features(const ad::Var& re, const ad::Var& im, double eps = 1e-8);

}  // namespace tfcorr
