#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "doctest.h"
#include "testutil.hpp"
#include "tfcorr/filters.hpp"

using namespace tfcorr;
using namespace tfct;

TEST_CASE("stack_taps layout and zero padding match the direct construction") {
  std::mt19937_64 rng(71);
  const int64_t M = 2, T = 4, F = 3;
  const int L = 1;
  Tensor re = rand_tensor({M, T, F}, Dtype::F64, rng);
  Tensor im = rand_tensor({M, T, F}, Dtype::F64, rng);
  auto s = stack_taps(ad::constant(re), ad::constant(im), L);
  REQUIRE(s.re->value.shape() == Shape{(2 * L + 1) * M, T, F});
  CHECK(s.taps == 3);
  CHECK(s.mics == M);
  for (int l = 0; l < 2 * L + 1; ++l)
    for (int64_t m = 0; m < M; ++m)
      for (int64_t t = 0; t < T; ++t)
        for (int64_t f = 0; f < F; ++f) {
          const int64_t src_t = t + l - L;
          const double wre = (src_t >= 0 && src_t < T) ? re.at((m * T + src_t) * F + f) : 0.0;
          const double wim = (src_t >= 0 && src_t < T) ? im.at((m * T + src_t) * F + f) : 0.0;
          const int64_t row = l * M + m;
          CHECK(s.re->value.at((row * T + t) * F + f) == wre);
          CHECK(s.im->value.at((row * T + t) * F + f) == wim);
        }
}

TEST_CASE("stack_taps with L=0 passes the input through") {
  std::mt19937_64 rng(72);
  Tensor re = rand_tensor({3, 2, 2}, Dtype::F32, rng);
  Tensor im = rand_tensor({3, 2, 2}, Dtype::F32, rng);
  auto s = stack_taps(ad::constant(re), ad::constant(im), 0);
  CHECK(s.re->value.shape() == re.shape());
  for (int64_t i = 0; i < re.numel(); ++i) CHECK(s.re->value.at(i) == re.at(i));
}

TEST_CASE("center-tap selector filters reproduce the input exactly") {
  std::mt19937_64 rng(73);
  const int64_t M = 3, T = 5, F = 4, K = 2;
  const int L = 1;
  const int64_t J = (2 * L + 1) * M;
  Tensor re = rand_tensor({M, T, F}, Dtype::F64, rng);
  Tensor im = rand_tensor({M, T, F}, Dtype::F64, rng);
  auto x = stack_taps(ad::constant(re), ad::constant(im), L);

  for (int64_t ref = 0; ref < M; ++ref) {
    Tensor wre({K, 1, J, T, F}, Dtype::F64);
    Tensor wim({K, 1, J, T, F}, Dtype::F64);
    const int64_t row = static_cast<int64_t>(L) * M + ref;  // center tap, mic `ref`
    for (int64_t k = 0; k < K; ++k)
      for (int64_t i = 0; i < T * F; ++i)
        wre.set(((k * J + row) * T * F) + i, 1.0);
    FilterSet fs{ad::constant(wre), ad::constant(wim)};
    auto y = apply_filters(fs, x);
    REQUIRE(y.re->value.shape() == Shape{K, 1, T, F});
    for (int64_t k = 0; k < K; ++k)
      for (int64_t i = 0; i < T * F; ++i) {
        CHECK(std::fabs(y.re->value.at(k * T * F + i) - re.at(ref * T * F + i)) < 1e-10);
        CHECK(std::fabs(y.im->value.at(k * T * F + i) - im.at(ref * T * F + i)) < 1e-10);
      }
  }
}

TEST_CASE("apply_filters matches the triple-loop complex oracle") {
  std::mt19937_64 rng(74);
  const int64_t M = 2, T = 3, F = 4, K = 2, Mout = 2;
  const int L = 1;
  const int64_t J = (2 * L + 1) * M;
  Tensor re = rand_tensor({M, T, F}, Dtype::F64, rng);
  Tensor im = rand_tensor({M, T, F}, Dtype::F64, rng);
  Tensor wre = rand_tensor({K, Mout, J, T, F}, Dtype::F64, rng);
  Tensor wim = rand_tensor({K, Mout, J, T, F}, Dtype::F64, rng);

  auto x = stack_taps(ad::constant(re), ad::constant(im), L);
  auto y = apply_filters(FilterSet{ad::constant(wre), ad::constant(wim)}, x);

  for (int64_t k = 0; k < K; ++k)
    for (int64_t mo = 0; mo < Mout; ++mo)
      for (int64_t t = 0; t < T; ++t)
        for (int64_t f = 0; f < F; ++f) {
          std::complex<double> acc(0, 0);
          for (int l = 0; l < 2 * L + 1; ++l)
            for (int64_t m = 0; m < M; ++m) {
              const int64_t src_t = t + l - L;
              if (src_t < 0 || src_t >= T) continue;
              const std::complex<double> xv(re.at((m * T + src_t) * F + f),
                                            im.at((m * T + src_t) * F + f));
              const int64_t j = static_cast<int64_t>(l) * M + m;
              const int64_t wi = (((k * Mout + mo) * J + j) * T + t) * F + f;
              acc += std::complex<double>(wre.at(wi), wim.at(wi)) * xv;
            }
          const int64_t oi = ((k * Mout + mo) * T + t) * F + f;
          CHECK(y.re->value.at(oi) == doctest::Approx(acc.real()).epsilon(1e-12));
          CHECK(y.im->value.at(oi) == doctest::Approx(acc.imag()).epsilon(1e-12));
        }
}

TEST_CASE("gradcheck stack_taps and apply_filters") {
  std::mt19937_64 rng(75);
  const int64_t M = 2, T = 3, F = 2, K = 1, Mout = 1;
  const int L = 1;
  const int64_t J = (2 * L + 1) * M;
  Tensor re = rand_tensor({M, T, F}, Dtype::F64, rng);
  Tensor im = rand_tensor({M, T, F}, Dtype::F64, rng);
  Tensor wre = rand_tensor({K, Mout, J, T, F}, Dtype::F64, rng);
  Tensor wim = rand_tensor({K, Mout, J, T, F}, Dtype::F64, rng);
  const double err = gradcheck(
      [&](const std::vector<ad::Var>& ps) {
        auto x = stack_taps(ps[0], ps[1], L);
        auto y = apply_filters(FilterSet{ps[2], ps[3]}, x);
        return ad::add(weighted_sum(y.re, 3), weighted_sum(y.im, 4));
      },
      {re, im, wre, wim});
  CHECK(err < 1e-4);
}

TEST_CASE("apply_filters rejects mismatched shapes") {
  Tensor x({6, 3, 4}, Dtype::F32);
  auto s = stack_taps(ad::constant(Tensor({2, 3, 4}, Dtype::F32)),
                      ad::constant(Tensor({2, 3, 4}, Dtype::F32)), 1);
  FilterSet bad{ad::constant(Tensor({1, 1, 5, 3, 4}, Dtype::F32)),
                ad::constant(Tensor({1, 1, 5, 3, 4}, Dtype::F32))};
  CHECK_THROWS(apply_filters(bad, s));
}
