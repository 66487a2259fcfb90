#include "tfcorr/costs.hpp"

namespace tfcorr {

namespace {

int64_t linear_params(int64_t din, int64_t dout) { return din * dout + dout; }

int64_t gl_params(int64_t d, int64_t kernel) {
  const int64_t attn = 2 * d + 4 * (d * d + d) + linear_params(d, d);
  const int64_t ffn =
      2 * d + linear_params(d, 6 * d) + linear_params(3 * d, d) + linear_params(d, d);
  const int64_t conv =
      2 * d + linear_params(d, 2 * d) + d * kernel + d + linear_params(d, d);
  return attn + 2 * ffn + conv;
}

double lin_macs(double n, double din, double dout) { return n * din * dout; }

// One block over `seqs` sequences of length n and width d, pooling by s.
double gl_macs(double seqs, double n, int64_t d, int s, int kernel) {
  const double dd = static_cast<double>(d);
  const double np = n / s;
  const double ega = lin_macs(n, dd, dd) + 4.0 * lin_macs(np, dd, dd) +
                     2.0 * np * np * dd;  // gate, q/k/v/o, scores + context
  const double efn =
      lin_macs(n, dd, dd) + lin_macs(np, dd, 6.0 * dd) + lin_macs(np, 3.0 * dd, dd);
  const double cla =
      lin_macs(n, dd, 2.0 * dd) + n * dd * kernel + lin_macs(n, dd, dd);
  return seqs * (ega + 2.0 * efn + cla);
}

}  // namespace

CostReport count_costs(const ModelConfig& cfg) {
  cfg.validate();
  CostReport rep;
  const int64_t F = cfg.freq_bins();
  const int64_t Cin = cfg.input_channels();
  const int64_t K = cfg.sources, Mout = cfg.out_channels();
  const int64_t J = (2 * cfg.taps_L + 1) * cfg.mics;
  const double fps = static_cast<double>(cfg.sample_rate) / cfg.hop;  // frames/s
  const double bins = static_cast<double>(F);
  const double tfs = fps * bins;  // time-frequency cells per second

  auto push = [&](std::string name, int64_t params, double macs) {
    rep.lines.push_back({std::move(name), params, macs});
    rep.total_params += params;
    rep.total_macs_per_s += macs;
  };

  if (cfg.input_mode == "corr") {
    const double pairs = static_cast<double>(cfg.mics) * (cfg.mics + 1) / 2.0;
    const int64_t beta = cfg.beta_mode == "trainable" ? F : 0;
    // 4 real multiplies per complex correlation, 2 more for the weighting
    push("features", beta, tfs * pairs * 6.0);
  }

  push("encoder", cfg.C * Cin * 9 + cfg.C + 2 * cfg.C,
       tfs * static_cast<double>(Cin) * static_cast<double>(cfg.C) * 9.0);

  const double temporal =
      gl_macs(bins, fps, cfg.C, cfg.downsample, cfg.dconv_kernel);
  const double frequency =
      gl_macs(fps, bins, cfg.C, cfg.downsample, cfg.dconv_kernel);
  double spectral = lin_macs(tfs, cfg.C, 2 * cfg.C_prime);
  spectral += 2.0 * (lin_macs(static_cast<double>(cfg.C_prime) * fps, bins, cfg.F_prime) +
                     gl_macs(static_cast<double>(cfg.C_prime), fps, cfg.F_prime,
                             cfg.downsample, cfg.dconv_kernel) +
                     lin_macs(static_cast<double>(cfg.C_prime) * fps, cfg.F_prime, bins));
  spectral += lin_macs(tfs, cfg.C_prime, cfg.C) + lin_macs(tfs, cfg.C, cfg.C);

  push("stages.temporal", cfg.R * gl_params(cfg.C, cfg.dconv_kernel),
       cfg.R * temporal);
  push("stages.frequency", cfg.R * gl_params(cfg.C, cfg.dconv_kernel),
       cfg.R * frequency);
  const int64_t spectral_params =
      linear_params(cfg.C, 2 * cfg.C_prime) +
      2 * (linear_params(F, cfg.F_prime) + gl_params(cfg.F_prime, cfg.dconv_kernel) +
           linear_params(cfg.F_prime, F)) +
      linear_params(cfg.C_prime, cfg.C) + linear_params(cfg.C, cfg.C);
  push("stages.spectral", cfg.R * spectral_params, cfg.R * spectral);

  push("head.lin", linear_params(cfg.C, K * cfg.C),
       lin_macs(tfs, cfg.C, static_cast<double>(K) * cfg.C));
  const int64_t out_ch = cfg.output_mode == "filtering" ? 2 * Mout * J : 2 * Mout;
  push("head.conv", out_ch * cfg.C * 9 + out_ch,
       static_cast<double>(K) * tfs * static_cast<double>(cfg.C) * out_ch * 9.0);
  if (cfg.output_mode == "filtering")
    push("filtering", 0, 4.0 * static_cast<double>(K * Mout * J) * tfs);
  return rep;
}

}  // namespace tfcorr
