#include <cmath>
#include <random>

#include "doctest.h"
#include "testutil.hpp"
#include "tfcorr/nn.hpp"

using namespace tfcorr;
using namespace tfct;
namespace nn = tfcorr::nn;

TEST_CASE("param store registers, counts, and seeds deterministically") {
  nn::ParamStore a(123, Dtype::F32);
  auto w = a.xavier("w", {4, 3}, 4, 3);
  auto b = a.zeros("b", {3});
  CHECK(a.total_params() == 15);
  CHECK(a.has("w"));
  CHECK_FALSE(a.has("nope"));
  CHECK(a.get("b")->value.numel() == 3);
  CHECK_THROWS(a.zeros("w", {1}));
  CHECK_THROWS(a.get("missing"));

  nn::ParamStore c(123, Dtype::F32);
  auto w2 = c.xavier("w", {4, 3}, 4, 3);
  for (int64_t i = 0; i < 12; ++i) CHECK(w->value.at(i) == w2->value.at(i));

  const double limit = std::sqrt(6.0 / 7.0);
  bool any_nonzero = false;
  for (int64_t i = 0; i < 12; ++i) {
    CHECK(std::fabs(w->value.at(i)) <= limit);
    any_nonzero |= w->value.at(i) != 0.0;
  }
  CHECK(any_nonzero);

  ad::backward(ad::reduce_sum_all(ad::mul(w, w)));
  CHECK(w->grad.defined());
  a.zero_grad();
  CHECK_FALSE(w->grad.defined());
  CHECK_FALSE(b->grad.defined());
}

TEST_CASE("linear layer matches manual matmul and gradchecks") {
  nn::ParamStore ps(7, Dtype::F64);
  nn::Linear lin(ps, "lin", 4, 3);
  std::mt19937_64 rng(9);
  Tensor x = rand_tensor({2, 5, 4}, Dtype::F64, rng);
  Tensor y = lin(ad::constant(x))->value;
  REQUIRE(y.shape() == Shape{2, 5, 3});
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t n = 0; n < 5; ++n)
      for (int64_t o = 0; o < 3; ++o) {
        double acc = lin.b->value.at(o);
        for (int64_t i = 0; i < 4; ++i)
          acc += x.at((b * 5 + n) * 4 + i) * lin.W->value.at(i * 3 + o);
        CHECK(y.at((b * 5 + n) * 3 + o) == doctest::Approx(acc).epsilon(1e-12));
      }

  const double err = gradcheck(
      [&](const std::vector<ad::Var>& ps2) {
        nn::Linear l2;
        l2.W = ps2[0];
        l2.b = ps2[1];
        return weighted_sum(l2(ps2[2]));
      },
      {lin.W->value, lin.b->value, x});
  CHECK(err < 1e-4);
}

TEST_CASE("zero-init linear starts as the zero map") {
  nn::ParamStore ps(7, Dtype::F32);
  nn::Linear lin(ps, "out", 3, 2, true, true);
  std::mt19937_64 rng(10);
  Tensor x = rand_tensor({2, 3}, Dtype::F32, rng);
  Tensor y = lin(ad::constant(x))->value;
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == 0.0);
}

TEST_CASE("glu gates the top half onto the bottom half") {
  Tensor x = Tensor::from_values({1, 4}, {1.0, -2.0, 0.5, 3.0}, Dtype::F64);
  Tensor y = nn::glu_lastaxis(ad::constant(x))->value;
  REQUIRE(y.shape() == Shape{1, 2});
  CHECK(y.at(0) == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))));
  CHECK(y.at(1) == doctest::Approx(-2.0 / (1.0 + std::exp(-3.0))));
  CHECK_THROWS(nn::glu_lastaxis(ad::constant(Tensor({2, 3}, Dtype::F64))));

  std::mt19937_64 rng(11);
  Tensor r = rand_tensor({2, 3, 6}, Dtype::F64, rng);
  const double err = gradcheck(
      [&](const std::vector<ad::Var>& ps) { return weighted_sum(nn::glu_lastaxis(ps[0])); },
      {r});
  CHECK(err < 1e-4);
}

TEST_CASE("mhsa shape, permutation equivariance, gradcheck") {
  nn::ParamStore ps(21, Dtype::F64);
  nn::Mhsa attn(ps, "attn", 4, 2);
  std::mt19937_64 rng(12);
  Tensor x = rand_tensor({2, 3, 4}, Dtype::F64, rng);
  auto y = attn(ad::constant(x));
  REQUIRE(y->value.shape() == Shape{2, 3, 4});

  // no positional encoding: permuting sequence slots permutes outputs
  Tensor xp({2, 3, 4}, Dtype::F64);
  const int perm[3] = {2, 0, 1};
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t n = 0; n < 3; ++n)
      for (int64_t d = 0; d < 4; ++d)
        xp.set((b * 3 + n) * 4 + d, x.at((b * 3 + perm[n]) * 4 + d));
  auto yp = attn(ad::constant(xp));
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t n = 0; n < 3; ++n)
      for (int64_t d = 0; d < 4; ++d)
        CHECK(yp->value.at((b * 3 + n) * 4 + d) ==
              doctest::Approx(y->value.at((b * 3 + perm[n]) * 4 + d)).epsilon(1e-10));

  std::vector<Tensor> inits = {x};
  std::vector<std::string> names;
  for (const auto& entry : ps.entries()) {
    names.push_back(entry.first);
    inits.push_back(entry.second->value);
  }
  const double err = gradcheck(
      [&](const std::vector<ad::Var>& vs) {
        nn::Mhsa a2;
        a2.heads = 2;
        a2.d = 4;
        a2.wq.W = vs[1]; a2.wq.b = vs[2];
        a2.wk.W = vs[3]; a2.wk.b = vs[4];
        a2.wv.W = vs[5]; a2.wv.b = vs[6];
        a2.wo.W = vs[7]; a2.wo.b = vs[8];
        return weighted_sum(a2(vs[0]));
      },
      inits);
  CHECK(err < 1e-4);

  CHECK_THROWS(nn::Mhsa(ps, "bad", 5, 2));
}
