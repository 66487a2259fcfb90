#include "tfcorr/features.hpp"

namespace tfcorr {

namespace {

void check_planes(const ad::Var& re, const ad::Var& im, const char* op) {
  TFC_CHECK(re && im, op << ": null input");
  TFC_CHECK(re->value.rank() == 3 && re->value.shape() == im->value.shape(),
            op << ": re/im must be matching (M, T, F), got "
               << shape_str(re->value.shape()) << " and "
               << shape_str(im->value.shape()));
  TFC_CHECK(re->value.dtype() == im->value.dtype(), op << ": dtype mismatch");
}

// |v|^2 clamped away from zero so sqrt/log gradients stay finite.
ad::Var safe_magnitude(const ad::Var& re, const ad::Var& im, double eps) {
  auto sq = ad::add(ad::mul(re, re), ad::mul(im, im));
  return ad::sqrt_(ad::clamp_min(sq, eps * eps));
}

}  // namespace

BetaParams BetaParams::trainable(nn::ParamStore& ps, const std::string& name,
                                 int64_t bins, double init_raw) {
  BetaParams b;
  b.bins_ = bins;
  b.raw_ = ps.full(name, {bins}, init_raw);
  return b;
}

BetaParams BetaParams::fixed(int64_t bins, double value, Dtype dtype) {
  BetaParams b;
  b.bins_ = bins;
  b.fixed_ = ad::constant(Tensor::full({bins}, value, dtype));
  return b;
}

ad::Var BetaParams::values() const {
  TFC_CHECK(raw_ || fixed_, "beta: uninitialized");
  return raw_ ? ad::sigmoid(raw_) : fixed_;
}

CorrelationTensor pairwise_correlations(const ad::Var& re, const ad::Var& im) {
  check_planes(re, im, "pairwise_correlations");
  const int64_t M = re->value.extent(0);
  const std::vector<int64_t> ones(static_cast<size_t>(M), 1);
  auto res = ad::split(re, 0, ones);
  auto ims = ad::split(im, 0, ones);

  std::vector<ad::Var> pre, pim;
  for (int64_t m = 0; m < M; ++m)
    for (int64_t mp = m; mp < M; ++mp) {
      // (a+bi)(c-di) = (ac+bd) + i(bc-ad)
      pre.push_back(ad::add(ad::mul(res[static_cast<size_t>(m)], res[static_cast<size_t>(mp)]),
                            ad::mul(ims[static_cast<size_t>(m)], ims[static_cast<size_t>(mp)])));
      pim.push_back(ad::sub(ad::mul(ims[static_cast<size_t>(m)], res[static_cast<size_t>(mp)]),
                            ad::mul(res[static_cast<size_t>(m)], ims[static_cast<size_t>(mp)])));
    }

  CorrelationTensor c;
  c.mics = M;
  c.re = ad::concat(pre, 0);
  c.im = ad::concat(pim, 0);
  return c;
}

CorrelationTensor phat_beta(const CorrelationTensor& c, const ad::Var& beta,
                            double eps) {
  TFC_CHECK(c.re && c.im, "phat_beta: empty correlation tensor");
  const int64_t F = c.re->value.extent(-1);
  TFC_CHECK(beta && beta->value.numel() == F,
            "phat_beta: beta must have one entry per frequency bin (" << F << "), got "
                                                                      << beta->value.numel());
  auto log_mag = ad::log_(safe_magnitude(c.re, c.im, eps));
  auto weight = ad::exp_(ad::mul(ad::neg(ad::reshape(beta, {1, 1, F})), log_mag));
  CorrelationTensor out;
  out.mics = c.mics;
  out.re = ad::mul(c.re, weight);
  out.im = ad::mul(c.im, weight);
  return out;
}

ad::Var flatten_correlations(const CorrelationTensor& c) {
  TFC_CHECK(c.re && c.im, "flatten_correlations: empty correlation tensor");
  return ad::concat({c.re, c.im}, 0);
}

ad::Var raw_features(const ad::Var& re, const ad::Var& im) {
  check_planes(re, im, "raw_features");
  return ad::concat({re, im}, 0);
}

ad::Var magipd_features(const ad::Var& re, const ad::Var& im, double eps) {
  check_planes(re, im, "magipd_features");
  const int64_t M = re->value.extent(0);
  const std::vector<int64_t> ones(static_cast<size_t>(M), 1);
  auto res = ad::split(re, 0, ones);
  auto ims = ad::split(im, 0, ones);

  std::vector<ad::Var> chans;
  chans.push_back(safe_magnitude(res[0], ims[0], eps));
  for (int64_t m = 1; m < M; ++m) {
    // phase difference theta_m - theta_0 via X_m * conj(X_0), normalized
    auto cr = ad::add(ad::mul(res[static_cast<size_t>(m)], res[0]),
                      ad::mul(ims[static_cast<size_t>(m)], ims[0]));
    auto ci = ad::sub(ad::mul(ims[static_cast<size_t>(m)], res[0]),
                      ad::mul(res[static_cast<size_t>(m)], ims[0]));
    auto mag = safe_magnitude(cr, ci, eps);
    chans.push_back(ad::divide(cr, mag));
    chans.push_back(ad::divide(ci, mag));
  }
  return ad::concat(chans, 0);
}

}  // namespace tfcorr
