#include "tfcorr/nn.hpp"

#include <cmath>

namespace tfcorr::nn {

ParamStore::ParamStore(uint64_t seed, Dtype dtype) : rng_(seed), dtype_(dtype) {}

ad::Var ParamStore::insert(const std::string& name, Tensor t) {
  TFC_CHECK(!has(name), "duplicate parameter name: " << name);
  ad::Var v = ad::param(std::move(t));
  entries_.emplace_back(name, v);
  return v;
}

ad::Var ParamStore::zeros(const std::string& name, Shape shape) {
  return insert(name, Tensor(std::move(shape), dtype_));
}

ad::Var ParamStore::ones(const std::string& name, Shape shape) {
  return insert(name, Tensor::full(std::move(shape), 1.0, dtype_));
}

ad::Var ParamStore::full(const std::string& name, Shape shape, double value) {
  return insert(name, Tensor::full(std::move(shape), value, dtype_));
}

ad::Var ParamStore::uniform(const std::string& name, Shape shape, double lo,
                            double hi) {
  Tensor t(std::move(shape), dtype_);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, dist(rng_));
  return insert(name, std::move(t));
}

ad::Var ParamStore::xavier(const std::string& name, Shape shape, int64_t fan_in,
                           int64_t fan_out) {
  TFC_CHECK(fan_in > 0 && fan_out > 0, "xavier: fans must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform(name, std::move(shape), -limit, limit);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return true;
  return false;
}

ad::Var ParamStore::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  fail("unknown parameter: " + name);
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& [name, v] : entries_) n += v->value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : entries_) v->clear_grad();
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int64_t d_in,
               int64_t d_out, bool bias, bool zero_init) {
  W = zero_init ? ps.zeros(prefix + ".W", {d_in, d_out})
                : ps.xavier(prefix + ".W", {d_in, d_out}, d_in, d_out);
  if (bias) b = ps.zeros(prefix + ".b", {d_out});
}

ad::Var Linear::operator()(const ad::Var& x) const {
  ad::Var y = ad::matmul(x, W);
  if (b) {
    Shape bs(static_cast<size_t>(y->value.rank()), 1);
    bs.back() = b->value.numel();
    y = ad::add(y, ad::reshape(b, bs));
  }
  return y;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, int64_t d) {
  gamma = ps.ones(prefix + ".gamma", {d});
  beta = ps.zeros(prefix + ".beta", {d});
}

ad::Var glu_lastaxis(const ad::Var& x) {
  const int64_t d = x->value.extent(-1);
  TFC_CHECK(d % 2 == 0, "glu: last axis must be even, got " << d);
  auto parts = ad::split(x, -1, {d / 2, d / 2});
  return ad::mul(parts[0], ad::sigmoid(parts[1]));
}

Mhsa::Mhsa(ParamStore& ps, const std::string& prefix, int64_t d, int heads,
           bool zero_out)
    : heads(heads), d(d) {
  TFC_CHECK(heads >= 1 && d % heads == 0,
            "mhsa: width " << d << " not divisible by " << heads << " heads");
  wq = Linear(ps, prefix + ".q", d, d);
  wk = Linear(ps, prefix + ".k", d, d);
  wv = Linear(ps, prefix + ".v", d, d);
  wo = Linear(ps, prefix + ".o", d, d, true, zero_out);
}

ad::Var Mhsa::operator()(const ad::Var& x) const {
  TFC_CHECK(x->value.rank() == 3, "mhsa: expected (B,N,D), got "
                                      << shape_str(x->value.shape()));
  const int64_t B = x->value.extent(0), N = x->value.extent(1);
  TFC_CHECK(x->value.extent(2) == d, "mhsa: width mismatch");
  const int64_t dh = d / heads;

  auto split_heads = [&](const ad::Var& v) {
    return ad::reshape(ad::permute(ad::reshape(v, {B, N, heads, dh}), {0, 2, 1, 3}),
                       {B * heads, N, dh});
  };
  ad::Var q = split_heads(wq(x));
  ad::Var k = split_heads(wk(x));
  ad::Var v = split_heads(wv(x));

  ad::Var scores = ad::scale(ad::matmul(q, ad::permute(k, {0, 2, 1})),
                             1.0 / std::sqrt(static_cast<double>(dh)));
  ad::Var attn = ad::softmax_lastaxis(scores);
  ad::Var ctx = ad::matmul(attn, v);  // (B*heads, N, dh)
  ctx = ad::reshape(ad::permute(ad::reshape(ctx, {B, heads, N, dh}), {0, 2, 1, 3}),
                    {B, N, d});
  return wo(ctx);
}

}  // namespace tfcorr::nn
