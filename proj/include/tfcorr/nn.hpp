#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tfcorr/autodiff.hpp"

namespace tfcorr::nn {

// Owns every trainable tensor of a model, keyed by unique name. Registration
// order is the canonical parameter order (checkpoints, optimizer state, and
// init draws all follow it), so construction must be deterministic.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed, Dtype dtype = Dtype::F32);

  ad::Var zeros(const std::string& name, Shape shape);
  ad::Var ones(const std::string& name, Shape shape);
  ad::Var full(const std::string& name, Shape shape, double value);
  ad::Var uniform(const std::string& name, Shape shape, double lo, double hi);
  // Xavier/Glorot uniform with explicit fans (conv kernels fold their
  // receptive field into the fans).
  ad::Var xavier(const std::string& name, Shape shape, int64_t fan_in,
                 int64_t fan_out);

  bool has(const std::string& name) const;
  ad::Var get(const std::string& name) const;
  const std::vector<std::pair<std::string, ad::Var>>& entries() const {
    return entries_;
  }
  int64_t total_params() const;
  void zero_grad();
  Dtype dtype() const { return dtype_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  ad::Var insert(const std::string& name, Tensor t);

  std::mt19937_64 rng_;
  Dtype dtype_;
  std::vector<std::pair<std::string, ad::Var>> entries_;
};

// y = x W + b for x shaped (..., d_in); W is (d_in, d_out).
struct Linear {
  ad::Var W, b;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int64_t d_in, int64_t d_out,
         bool bias = true, bool zero_init = false);
  ad::Var operator()(const ad::Var& x) const;
};

struct LayerNorm {
  ad::Var gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& prefix, int64_t d);
  ad::Var operator()(const ad::Var& x) const {
    return ad::layernorm(x, gamma, beta);
  }
};

// Splits the last axis in half and gates: a * sigmoid(b).
ad::Var glu_lastaxis(const ad::Var& x);

// Multi-head self-attention over (B, N, D), no positional encoding.
struct Mhsa {
  int heads = 1;
  int64_t d = 0;
  Linear wq, wk, wv, wo;

  Mhsa() = default;
  Mhsa(ParamStore& ps, const std::string& prefix, int64_t d, int heads,
       bool zero_out = false);
  ad::Var operator()(const ad::Var& x) const;
};

}  // namespace tfcorr::nn
