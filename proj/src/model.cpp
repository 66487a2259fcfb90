#include "tfcorr/model.hpp"

#include <cmath>

namespace tfcorr {

int64_t ModelConfig::input_channels() const {
  if (input_mode == "corr") return static_cast<int64_t>(mics) * (mics + 1);
  if (input_mode == "raw") return 2 * static_cast<int64_t>(mics);
  if (input_mode == "magipd") return 1 + 2 * (static_cast<int64_t>(mics) - 1);
  fail("unknown input_mode: " + input_mode);
}

void ModelConfig::validate() const {
  TFC_CHECK(sample_rate > 0, "config: sample_rate must be positive");
  TFC_CHECK(n_fft >= 4 && (n_fft & (n_fft - 1)) == 0,
            "config: n_fft must be a power of two >= 4, got " << n_fft);
  TFC_CHECK(hop >= 1 && hop <= n_fft / 2, "config: hop must be in [1, n_fft/2]");
  TFC_CHECK(mics >= 1, "config: mics must be >= 1");
  TFC_CHECK(sources >= 1, "config: sources must be >= 1");
  TFC_CHECK(C >= 1 && C_prime >= 1 && F_prime >= 1, "config: widths must be >= 1");
  TFC_CHECK(R >= 1, "config: R must be >= 1");
  TFC_CHECK(heads >= 1 && C % heads == 0,
            "config: heads " << heads << " must divide C " << C);
  TFC_CHECK(F_prime % heads == 0,
            "config: heads " << heads << " must divide F_prime " << F_prime);
  TFC_CHECK(dconv_kernel >= 1 && dconv_kernel % 2 == 1,
            "config: dconv_kernel must be odd, got " << dconv_kernel);
  TFC_CHECK(downsample >= 1, "config: downsample must be >= 1");
  TFC_CHECK(taps_L >= 0, "config: taps_L must be >= 0");
  TFC_CHECK(head_mode == "miso" || head_mode == "mimo",
            "config: head_mode must be miso or mimo, got " << head_mode);
  TFC_CHECK(input_mode == "corr" || input_mode == "raw" || input_mode == "magipd",
            "config: input_mode must be corr, raw, or magipd, got " << input_mode);
  TFC_CHECK(output_mode == "filtering" || output_mode == "mapping",
            "config: output_mode must be filtering or mapping, got " << output_mode);
  TFC_CHECK(beta_mode == "trainable" || beta_mode == "fixed",
            "config: beta_mode must be trainable or fixed, got " << beta_mode);
  if (input_mode == "magipd") TFC_CHECK(mics >= 2, "config: magipd needs mics >= 2");
}

GatedAttention::GatedAttention(nn::ParamStore& ps, const std::string& prefix,
                               int64_t d, int heads, int factor, bool stable)
    : ln(ps, prefix + ".ln", d),
      attn(ps, prefix, d, heads, stable),
      gate(ps, prefix + ".gate", d, d),
      factor(factor) {}

ad::Var GatedAttention::operator()(const ad::Var& x) const {
  const int64_t n = x->value.extent(1);
  ad::Var u = ln(x);
  ad::Var g = ad::sigmoid(gate(u));
  ad::Var h = factor > 1 ? ad::pool_avg(u, factor, 1) : u;
  h = attn(h);
  if (factor > 1) h = ad::upsample_repeat(h, factor, 1, n);
  return ad::add(x, ad::mul(h, g));
}

GatedFfn::GatedFfn(nn::ParamStore& ps, const std::string& prefix, int64_t d,
                   int factor, bool stable)
    : ln(ps, prefix + ".ln", d),
      lin1(ps, prefix + ".lin1", d, 6 * d),
      lin2(ps, prefix + ".lin2", 3 * d, d, true, stable),
      gate(ps, prefix + ".gate", d, d),
      factor(factor) {}

ad::Var GatedFfn::operator()(const ad::Var& x) const {
  const int64_t n = x->value.extent(1);
  ad::Var u = ln(x);
  ad::Var g = ad::sigmoid(gate(u));
  ad::Var h = factor > 1 ? ad::pool_avg(u, factor, 1) : u;
  h = lin2(nn::glu_lastaxis(lin1(h)));
  if (factor > 1) h = ad::upsample_repeat(h, factor, 1, n);
  return ad::add(x, ad::mul(h, g));
}

LocalConv::LocalConv(nn::ParamStore& ps, const std::string& prefix, int64_t d,
                     int kernel, bool stable)
    : ln(ps, prefix + ".ln", d), pconv1(ps, prefix + ".pconv1", d, 2 * d) {
  const double limit = std::sqrt(3.0 / kernel);
  dconv_w = ps.uniform(prefix + ".dconv.W", {d, kernel}, -limit, limit);
  dconv_b = ps.zeros(prefix + ".dconv.b", {d});
  pconv2 = nn::Linear(ps, prefix + ".pconv2", d, d, true, stable);
}

ad::Var LocalConv::operator()(const ad::Var& x) const {
  ad::Var h = nn::glu_lastaxis(pconv1(ln(x)));       // (B, N, D)
  h = ad::permute(h, {0, 2, 1});                     // (B, D, N)
  h = ad::conv1d_depthwise(h, dconv_w, dconv_b);
  h = ad::permute(h, {0, 2, 1});
  return ad::add(x, pconv2(h));
}

GlBlock::GlBlock(nn::ParamStore& ps, const std::string& prefix, int64_t d,
                 int heads, int factor, int kernel, bool stable)
    : attn(ps, prefix + ".attn", d, heads, factor, stable),
      ffn1(ps, prefix + ".ffn1", d, factor, stable),
      conv(ps, prefix + ".conv", d, kernel, stable),
      ffn2(ps, prefix + ".ffn2", d, factor, stable) {}

ad::Var GlBlock::operator()(const ad::Var& x) const {
  return ffn2(conv(ffn1(attn(x))));
}

SpectralModule::SpectralModule(nn::ParamStore& ps, const std::string& prefix,
                               const ModelConfig& cfg)
    : C(cfg.C), C_prime(cfg.C_prime) {
  const int64_t F = cfg.freq_bins();
  in_proj = nn::Linear(ps, prefix + ".in_proj", C, 2 * C_prime);
  auto make_branch = [&](const std::string& bp) {
    SpectralBranch b;
    b.fproj = nn::Linear(ps, bp + ".fproj", F, cfg.F_prime);
    b.gl = GlBlock(ps, bp + ".gl", cfg.F_prime, cfg.heads, cfg.downsample,
                   cfg.dconv_kernel, cfg.stable_init);
    b.fback = nn::Linear(ps, bp + ".fback", cfg.F_prime, F);
    return b;
  };
  br0 = make_branch(prefix + ".branch0");
  br1 = make_branch(prefix + ".branch1");
  out1 = nn::Linear(ps, prefix + ".out1", C_prime, C);
  out2 = nn::Linear(ps, prefix + ".out2", C, C, true, cfg.stable_init);
}

ad::Var SpectralModule::operator()(const ad::Var& h) const {
  ad::Var u = in_proj(h);  // (T, F, 2C')
  auto parts = ad::split(u, -1, {C_prime, C_prime});
  auto run_branch = [&](const SpectralBranch& b, const ad::Var& p) {
    ad::Var q = ad::permute(p, {2, 0, 1});  // (C', T, F)
    q = b.fproj(q);                         // (C', T, F')
    q = b.gl(q);
    q = b.fback(q);                         // (C', T, F)
    return ad::permute(q, {1, 2, 0});       // (T, F, C')
  };
  ad::Var s = ad::add(run_branch(br0, parts[0]), run_branch(br1, parts[1]));
  return ad::add(h, out2(out1(s)));
}

ad::Var Stage::operator()(const ad::Var& h) const {
  // temporal: F sequences over T
  ad::Var t = ad::permute(h, {1, 0, 2});  // (F, T, C)
  t = temporal(t);
  t = ad::permute(t, {1, 0, 2});  // (T, F, C)
  // frequency: T sequences over F
  ad::Var f = frequency(t);
  return spectral(f);
}

TfCorrNet::TfCorrNet(const ModelConfig& cfg, nn::ParamStore& ps) : cfg_(cfg) {
  cfg_.validate();
  const int64_t F = cfg_.freq_bins();
  const int64_t Cin = cfg_.input_channels();

  if (cfg_.input_mode == "corr") {
    beta_ = cfg_.beta_mode == "trainable"
                ? BetaParams::trainable(ps, "beta.raw", F, cfg_.beta_init)
                : BetaParams::fixed(F, cfg_.beta_init, ps.dtype());
  }

  enc_w = ps.xavier("encoder.conv.W", {cfg_.C, Cin, 3, 3}, Cin * 9, cfg_.C * 9);
  enc_b = ps.zeros("encoder.conv.b", {cfg_.C});
  enc_ln = nn::LayerNorm(ps, "encoder.ln", cfg_.C);

  for (int r = 0; r < cfg_.R; ++r) {
    const std::string sp = "stage" + std::to_string(r);
    Stage st;
    st.temporal = GlBlock(ps, sp + ".temporal", cfg_.C, cfg_.heads, cfg_.downsample,
                          cfg_.dconv_kernel, cfg_.stable_init);
    st.frequency = GlBlock(ps, sp + ".frequency", cfg_.C, cfg_.heads,
                           cfg_.downsample, cfg_.dconv_kernel, cfg_.stable_init);
    st.spectral = SpectralModule(ps, sp + ".spectral", cfg_);
    stages_.push_back(std::move(st));
  }

  head_lin = nn::Linear(ps, "head.lin", cfg_.C, cfg_.sources * cfg_.C);
  const int64_t J = (2 * cfg_.taps_L + 1) * cfg_.mics;
  const int64_t out_ch = cfg_.output_mode == "filtering"
                             ? 2 * cfg_.out_channels() * J
                             : 2 * cfg_.out_channels();
  head_conv_w = ps.xavier("head.conv.W", {out_ch, cfg_.C, 3, 3}, cfg_.C * 9,
                          out_ch * 9);
  head_conv_b = ps.zeros("head.conv.b", {out_ch});
}

ad::Var TfCorrNet::features(const ad::Var& mix_re, const ad::Var& mix_im) const {
  TFC_CHECK(mix_re->value.rank() == 3 && mix_re->value.extent(0) == cfg_.mics,
            "forward: expected (" << cfg_.mics << ", T, F) mixture planes, got "
                                  << shape_str(mix_re->value.shape()));
  TFC_CHECK(mix_re->value.extent(2) == cfg_.freq_bins(),
            "forward: bin count mismatch: " << mix_re->value.extent(2) << " vs "
                                            << cfg_.freq_bins());
  if (cfg_.input_mode == "corr") {
    auto c = pairwise_correlations(mix_re, mix_im);
    return flatten_correlations(phat_beta(c, beta_.values()));
  }
  if (cfg_.input_mode == "raw") return raw_features(mix_re, mix_im);
  return magipd_features(mix_re, mix_im);
}

ad::Var TfCorrNet::encode(const ad::Var& z) const {
  ad::Var h = ad::conv2d(z, enc_w, enc_b);  // (C, T, F)
  h = ad::permute(h, {1, 2, 0});            // (T, F, C)
  return enc_ln(h);
}

FilterSet TfCorrNet::filter_head(const ad::Var& h) const {
  const int64_t T = h->value.extent(0), F = h->value.extent(1);
  const int64_t K = cfg_.sources, Mout = cfg_.out_channels();
  const int64_t J = (2 * cfg_.taps_L + 1) * cfg_.mics;

  ad::Var g = head_lin(h);                       // (T, F, K*C)
  g = ad::permute(g, {2, 0, 1});                 // (K*C, T, F)
  g = ad::reshape(g, {K, cfg_.C, T, F});
  auto per_source = ad::split(g, 0, std::vector<int64_t>(static_cast<size_t>(K), 1));
  std::vector<ad::Var> outs;
  for (int64_t k = 0; k < K; ++k) {
    ad::Var q = ad::reshape(per_source[static_cast<size_t>(k)], {cfg_.C, T, F});
    q = ad::conv2d(q, head_conv_w, head_conv_b);  // (2*Mout*J, T, F)
    outs.push_back(ad::reshape(q, {1, 2 * Mout * J, T, F}));
  }
  ad::Var all = ad::concat(outs, 0);  // (K, 2*Mout*J, T, F)
  auto halves = ad::split(all, 1, {Mout * J, Mout * J});
  FilterSet fs;
  fs.re = ad::reshape(halves[0], {K, Mout, J, T, F});
  fs.im = ad::reshape(halves[1], {K, Mout, J, T, F});
  return fs;
}

SpectraSet TfCorrNet::mapping_head(const ad::Var& h) const {
  const int64_t T = h->value.extent(0), F = h->value.extent(1);
  const int64_t K = cfg_.sources, Mout = cfg_.out_channels();

  ad::Var g = head_lin(h);
  g = ad::permute(g, {2, 0, 1});
  g = ad::reshape(g, {K, cfg_.C, T, F});
  auto per_source = ad::split(g, 0, std::vector<int64_t>(static_cast<size_t>(K), 1));
  std::vector<ad::Var> outs;
  for (int64_t k = 0; k < K; ++k) {
    ad::Var q = ad::reshape(per_source[static_cast<size_t>(k)], {cfg_.C, T, F});
    q = ad::conv2d(q, head_conv_w, head_conv_b);  // (2*Mout, T, F)
    outs.push_back(ad::reshape(q, {1, 2 * Mout, T, F}));
  }
  ad::Var all = ad::concat(outs, 0);
  auto halves = ad::split(all, 1, {Mout, Mout});
  SpectraSet out;
  out.re = halves[0];
  out.im = halves[1];
  return out;
}

SpectraSet TfCorrNet::forward(const ad::Var& mix_re, const ad::Var& mix_im) const {
  ad::Var h = encode(features(mix_re, mix_im));
  for (const auto& st : stages_) h = st(h);
  if (cfg_.output_mode == "mapping") return mapping_head(h);
  FilterSet fs = filter_head(h);
  StackedSpectra x = stack_taps(mix_re, mix_im, cfg_.taps_L);
  return apply_filters(fs, x);
}

}  // namespace tfcorr
