#pragma once

#include <string>
#include <vector>

#include "tfcorr/features.hpp"
#include "tfcorr/filters.hpp"
#include "tfcorr/nn.hpp"

namespace tfcorr {

struct ModelConfig {
  int sample_rate = 16000;
  int n_fft = 512;
  int hop = 256;
  int mics = 7;
  int sources = 2;
  int64_t C = 96;        // lattice width
  int64_t C_prime = 16;  // spectral module channel width
  int64_t F_prime = 96;  // spectral module frequency width
  int R = 4;             // stage count
  int heads = 4;
  int dconv_kernel = 65;
  int downsample = 4;  // pooling factor of the global units
  int taps_L = 1;      // frames of filter context on each side
  std::string head_mode = "miso";         // miso | mimo
  std::string input_mode = "corr";        // corr | raw | magipd
  std::string output_mode = "filtering";  // filtering | mapping
  // pre-sigmoid init in trainable mode; the exponent itself in fixed mode
  double beta_init = 0.0;
  std::string beta_mode = "trainable";  // trainable | fixed
  // zero the last projection of every residual unit so stages start as
  // identities; turn off to give every parameter a nonzero gradient path at
  // init (used by the wiring audit test)
  bool stable_init = true;

  int64_t freq_bins() const { return n_fft / 2 + 1; }
  int64_t out_channels() const { return head_mode == "miso" ? 1 : mics; }
  int64_t input_channels() const;
  void validate() const;
};

// The three residual units shared by both lattice directions. All of them map
// (B, N, D) -> (B, N, D) with a pre-norm residual path.

struct GatedAttention {
  nn::LayerNorm ln;
  nn::Mhsa attn;
  nn::Linear gate;
  int factor = 1;

  GatedAttention() = default;
  GatedAttention(nn::ParamStore& ps, const std::string& prefix, int64_t d,
                 int heads, int factor, bool stable);
  ad::Var operator()(const ad::Var& x) const;
};

struct GatedFfn {
  nn::LayerNorm ln;
  nn::Linear lin1;  // d -> 6d, halved by the gate
  nn::Linear lin2;  // 3d -> d
  nn::Linear gate;
  int factor = 1;

  GatedFfn() = default;
  GatedFfn(nn::ParamStore& ps, const std::string& prefix, int64_t d, int factor,
           bool stable);
  ad::Var operator()(const ad::Var& x) const;
};

struct LocalConv {
  nn::LayerNorm ln;
  nn::Linear pconv1;  // d -> 2d, halved by the gate
  ad::Var dconv_w, dconv_b;
  nn::Linear pconv2;

  LocalConv() = default;
  LocalConv(nn::ParamStore& ps, const std::string& prefix, int64_t d, int kernel,
            bool stable);
  ad::Var operator()(const ad::Var& x) const;
};

// attention + ffn at the pooled rate, then conv + ffn at the full rate
struct GlBlock {
  GatedAttention attn;
  GatedFfn ffn1;
  LocalConv conv;
  GatedFfn ffn2;

  GlBlock() = default;
  GlBlock(nn::ParamStore& ps, const std::string& prefix, int64_t d, int heads,
          int factor, int kernel, bool stable);
  ad::Var operator()(const ad::Var& x) const;
};

struct SpectralBranch {
  nn::Linear fproj;  // F -> F'
  GlBlock gl;        // sequences: C' rows of length T, width F'
  nn::Linear fback;  // F' -> F
};

// Residual module mixing information across the whole spectrum at once.
struct SpectralModule {
  nn::Linear in_proj;  // C -> 2C'
  SpectralBranch br0, br1;
  nn::Linear out1;  // C' -> C
  nn::Linear out2;  // C -> C
  int64_t C = 0, C_prime = 0;

  SpectralModule() = default;
  SpectralModule(nn::ParamStore& ps, const std::string& prefix,
                 const ModelConfig& cfg);
  ad::Var operator()(const ad::Var& h) const;  // (T, F, C)
};

struct Stage {
  GlBlock temporal;   // F sequences of length T
  GlBlock frequency;  // T sequences of length F
  SpectralModule spectral;

  ad::Var operator()(const ad::Var& h) const;  // (T, F, C)
};

class TfCorrNet {
 public:
  TfCorrNet(const ModelConfig& cfg, nn::ParamStore& ps);

  // Mixture spectra planes (M, T, F); returns per-source estimates
  // (K, M_out, T, F) at the reference channel(s).
  SpectraSet forward(const ad::Var& mix_re, const ad::Var& mix_im) const;

  // Input representation (input_channels, T, F).
  ad::Var features(const ad::Var& mix_re, const ad::Var& mix_im) const;

  const ModelConfig& config() const { return cfg_; }
  const BetaParams& beta() const { return beta_; }

 private:
  ad::Var encode(const ad::Var& z) const;  // -> (T, F, C)
  FilterSet filter_head(const ad::Var& h) const;
  SpectraSet mapping_head(const ad::Var& h) const;

  ModelConfig cfg_;
  BetaParams beta_;
  ad::Var enc_w, enc_b;
  nn::LayerNorm enc_ln;
  std::vector<Stage> stages_;
  nn::Linear head_lin;  // C -> K*C
  ad::Var head_conv_w, head_conv_b;
};

}  // namespace tfcorr
