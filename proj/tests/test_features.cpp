#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "testutil.hpp"
#include "tfcorr/features.hpp"

using namespace tfcorr;
using namespace tfct;

namespace {

std::complex<double> at_c(const Tensor& re, const Tensor& im, int64_t flat) {
  return {re.at(flat), im.at(flat)};
}

}  // namespace

TEST_CASE("pairwise correlations match the complex oracle") {
  std::mt19937_64 rng(61);
  const int64_t M = 3, T = 2, F = 4;
  Tensor re = rand_tensor({M, T, F}, Dtype::F64, rng);
  Tensor im = rand_tensor({M, T, F}, Dtype::F64, rng);
  auto c = pairwise_correlations(ad::constant(re), ad::constant(im));
  REQUIRE(c.re->value.shape() == Shape{6, T, F});
  REQUIRE(c.pairs() == 6);

  int64_t p = 0;
  for (int64_t m = 0; m < M; ++m)
    for (int64_t mp = m; mp < M; ++mp, ++p)
      for (int64_t i = 0; i < T * F; ++i) {
        const auto want = at_c(re, im, m * T * F + i) *
                          std::conj(at_c(re, im, mp * T * F + i));
        CHECK(c.re->value.at(p * T * F + i) == doctest::Approx(want.real()).epsilon(1e-12));
        CHECK(c.im->value.at(p * T * F + i) == doctest::Approx(want.imag()).epsilon(1e-12));
      }
}

TEST_CASE("diagonal pairs carry exactly zero imaginary part") {
  std::mt19937_64 rng(62);
  const int64_t M = 4, T = 3, F = 5;
  Tensor re = rand_tensor({M, T, F}, Dtype::F32, rng);
  Tensor im = rand_tensor({M, T, F}, Dtype::F32, rng);
  auto c = pairwise_correlations(ad::constant(re), ad::constant(im));
  int64_t p = 0;
  for (int64_t m = 0; m < M; ++m)
    for (int64_t mp = m; mp < M; ++mp, ++p) {
      if (m != mp) continue;
      for (int64_t i = 0; i < T * F; ++i) CHECK(c.im->value.at(p * T * F + i) == 0.0f);
    }
}

TEST_CASE("flattened correlation width is M(M+1) for M in 1..8") {
  std::mt19937_64 rng(63);
  for (int64_t M = 1; M <= 8; ++M) {
    Tensor re = rand_tensor({M, 2, 3}, Dtype::F32, rng);
    Tensor im = rand_tensor({M, 2, 3}, Dtype::F32, rng);
    auto z = flatten_correlations(pairwise_correlations(ad::constant(re), ad::constant(im)));
    CHECK(z->value.shape() == Shape{M * (M + 1), 2, 3});
  }
}

TEST_CASE("phat with beta=0 is an exact identity") {
  std::mt19937_64 rng(64);
  const int64_t M = 2, T = 3, F = 4;
  Tensor re = rand_tensor({M, T, F}, Dtype::F32, rng, -2.0, 2.0);
  Tensor im = rand_tensor({M, T, F}, Dtype::F32, rng, -2.0, 2.0);
  // plant an exact zero to exercise the eps clamp path
  re.set(0, 0.0);
  im.set(0, 0.0);
  auto c = pairwise_correlations(ad::constant(re), ad::constant(im));
  auto beta = BetaParams::fixed(F, 0.0, Dtype::F32);
  auto out = phat_beta(c, beta.values());
  for (int64_t i = 0; i < c.re->value.numel(); ++i) {
    CHECK(out.re->value.at(i) == c.re->value.at(i));
    CHECK(out.im->value.at(i) == c.im->value.at(i));
  }
}

TEST_CASE("phat with beta=1 whitens magnitudes") {
  std::mt19937_64 rng(65);
  for (Dtype dt : {Dtype::F32, Dtype::F64}) {
    const int64_t M = 3, T = 4, F = 8;
    Tensor re = rand_tensor({M, T, F}, dt, rng, -1.0, 1.0);
    Tensor im = rand_tensor({M, T, F}, dt, rng, -1.0, 1.0);
    auto c = pairwise_correlations(ad::constant(re), ad::constant(im));
    auto out = phat_beta(c, BetaParams::fixed(F, 1.0, dt).values());
    for (int64_t i = 0; i < c.re->value.numel(); ++i) {
      const double mag = std::hypot(c.re->value.at(i), c.im->value.at(i));
      if (mag <= 1e-6) continue;
      const double mo = std::hypot(out.re->value.at(i), out.im->value.at(i));
      CHECK(std::fabs(mo - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("phat output scales as c^(2(1-beta)) when the input scales by c") {
  std::mt19937_64 rng(66);
  const int64_t M = 2, T = 2, F = 4;
  Tensor re = rand_tensor({M, T, F}, Dtype::F64, rng, 0.2, 1.0);
  Tensor im = rand_tensor({M, T, F}, Dtype::F64, rng, 0.2, 1.0);
  const double cscale = 3.7;
  Tensor res = re.clone(), ims = im.clone();
  for (int64_t i = 0; i < res.numel(); ++i) {
    res.set(i, res.at(i) * cscale);
    ims.set(i, ims.at(i) * cscale);
  }
  for (double b : {0.0, 0.5, 1.0}) {
    auto beta = BetaParams::fixed(F, b, Dtype::F64);
    auto base = phat_beta(pairwise_correlations(ad::constant(re), ad::constant(im)),
                          beta.values());
    auto scaled = phat_beta(pairwise_correlations(ad::constant(res), ad::constant(ims)),
                            beta.values());
    const double expect = std::pow(cscale, 2.0 * (1.0 - b));
    for (int64_t i = 0; i < base.re->value.numel(); ++i) {
      CHECK(scaled.re->value.at(i) ==
            doctest::Approx(base.re->value.at(i) * expect).epsilon(1e-10));
      CHECK(scaled.im->value.at(i) ==
            doctest::Approx(base.im->value.at(i) * expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("gradcheck through correlations, phat, and flatten") {
  std::mt19937_64 rng(67);
  const int64_t M = 2, T = 2, F = 3;
  Tensor re = rand_tensor({M, T, F}, Dtype::F64, rng, 0.3, 1.0);
  Tensor im = rand_tensor({M, T, F}, Dtype::F64, rng, 0.3, 1.0);
  Tensor raw({F}, Dtype::F64);  // sigmoid(0) = 0.5
  const double err = gradcheck(
      [&](const std::vector<ad::Var>& ps) {
        auto c = pairwise_correlations(ps[0], ps[1]);
        auto out = phat_beta(c, ad::sigmoid(ps[2]));
        return weighted_sum(flatten_correlations(out));
      },
      {re, im, raw});
  CHECK(err < 1e-4);
}

TEST_CASE("beta params: trainable inits to one half, fixed stays exact") {
  nn::ParamStore ps(5, Dtype::F32);
  auto b = BetaParams::trainable(ps, "beta.raw", 6);
  CHECK(b.is_trainable());
  CHECK(ps.has("beta.raw"));
  Tensor v = b.values()->value;
  REQUIRE(v.numel() == 6);
  for (int64_t i = 0; i < 6; ++i) CHECK(v.at(i) == 0.5f);

  auto f0 = BetaParams::fixed(4, 0.0, Dtype::F32);
  auto f1 = BetaParams::fixed(4, 1.0, Dtype::F32);
  CHECK_FALSE(f0.is_trainable());
  for (int64_t i = 0; i < 4; ++i) {
    CHECK(f0.values()->value.at(i) == 0.0f);
    CHECK(f1.values()->value.at(i) == 1.0f);
  }
}

TEST_CASE("raw features stack real planes then imaginary planes") {
  std::mt19937_64 rng(68);
  const int64_t M = 3, T = 2, F = 2;
  Tensor re = rand_tensor({M, T, F}, Dtype::F32, rng);
  Tensor im = rand_tensor({M, T, F}, Dtype::F32, rng);
  Tensor z = raw_features(ad::constant(re), ad::constant(im))->value;
  REQUIRE(z.shape() == Shape{2 * M, T, F});
  for (int64_t i = 0; i < M * T * F; ++i) {
    CHECK(z.at(i) == re.at(i));
    CHECK(z.at(M * T * F + i) == im.at(i));
  }
}

TEST_CASE("magipd features: magnitude channel plus unit-norm phase pairs") {
  std::mt19937_64 rng(69);
  const int64_t M = 4, T = 3, F = 2;
  Tensor re = rand_tensor({M, T, F}, Dtype::F64, rng, 0.2, 1.0);
  Tensor im = rand_tensor({M, T, F}, Dtype::F64, rng, 0.2, 1.0);
  Tensor z = magipd_features(ad::constant(re), ad::constant(im))->value;
  REQUIRE(z.shape() == Shape{1 + 2 * (M - 1), T, F});
  for (int64_t i = 0; i < T * F; ++i) {
    const double mag = std::hypot(re.at(i), im.at(i));
    CHECK(z.at(i) == doctest::Approx(mag).epsilon(1e-12));
  }
  for (int64_t m = 1; m < M; ++m)
    for (int64_t i = 0; i < T * F; ++i) {
      const double c = z.at((1 + 2 * (m - 1)) * T * F + i);
      const double s = z.at((2 + 2 * (m - 1)) * T * F + i);
      CHECK(c * c + s * s == doctest::Approx(1.0).epsilon(1e-9));
      // matches the phase difference of the underlying spectra
      const double want = std::arg(at_c(re, im, m * T * F + i)) -
                          std::arg(at_c(re, im, i));
      CHECK(std::atan2(s, c) ==
            doctest::Approx(std::remainder(want, 2 * std::numbers::pi)).epsilon(1e-9));
    }
}
