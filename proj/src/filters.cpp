#include "tfcorr/filters.hpp"

#include <cstdlib>

namespace tfcorr {

namespace {

// Shifts (M, T, F) planes along time by `shift` frames, padding with zeros:
// out[:, t, :] = x[:, t + shift, :] where valid.
ad::Var time_shift(const ad::Var& x, int64_t shift) {
  if (shift == 0) return x;
  const int64_t M = x->value.extent(0), T = x->value.extent(1), F = x->value.extent(2);
  TFC_CHECK(std::abs(shift) < T, "stack_taps: shift " << shift
                                                      << " exceeds frame count " << T);
  auto zeros = ad::constant(Tensor({M, std::abs(shift), F}, x->value.dtype()));
  if (shift > 0) {
    auto tail = ad::split(x, 1, {shift, T - shift})[1];
    return ad::concat({tail, zeros}, 1);
  }
  auto head = ad::split(x, 1, {T + shift, -shift})[0];
  return ad::concat({zeros, head}, 1);
}

}  // namespace

StackedSpectra stack_taps(const ad::Var& re, const ad::Var& im, int L) {
  TFC_CHECK(re && im && re->value.rank() == 3 &&
                re->value.shape() == im->value.shape(),
            "stack_taps: re/im must be matching (M, T, F)");
  TFC_CHECK(L >= 0, "stack_taps: negative context " << L);
  StackedSpectra s;
  s.mics = re->value.extent(0);
  s.taps = 2 * L + 1;
  if (L == 0) {
    s.re = re;
    s.im = im;
    return s;
  }
  std::vector<ad::Var> pre, pim;
  for (int l = 0; l < 2 * L + 1; ++l) {
    pre.push_back(time_shift(re, l - L));
    pim.push_back(time_shift(im, l - L));
  }
  s.re = ad::concat(pre, 0);
  s.im = ad::concat(pim, 0);
  return s;
}

SpectraSet apply_filters(const FilterSet& w, const StackedSpectra& x) {
  TFC_CHECK(w.re && w.im && w.re->value.rank() == 5 &&
                w.re->value.shape() == w.im->value.shape(),
            "apply_filters: filters must be matching (K, M_out, J, T, F)");
  const int64_t J = x.re->value.extent(0), T = x.re->value.extent(1),
                F = x.re->value.extent(2);
  TFC_CHECK(w.re->value.extent(2) == J && w.re->value.extent(3) == T &&
                w.re->value.extent(4) == F,
            "apply_filters: filter shape " << shape_str(w.re->value.shape())
                                           << " does not match stacked input "
                                           << shape_str(x.re->value.shape()));
  auto xre = ad::reshape(x.re, {1, 1, J, T, F});
  auto xim = ad::reshape(x.im, {1, 1, J, T, F});
  SpectraSet y;
  y.re = ad::reduce_sum(ad::sub(ad::mul(w.re, xre), ad::mul(w.im, xim)), 2, false);
  y.im = ad::reduce_sum(ad::add(ad::mul(w.re, xim), ad::mul(w.im, xre)), 2, false);
  return y;
}

}  // namespace tfcorr
