#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tfcorr/tensor.hpp"

namespace tfcorr::ad {

struct Node;
using Var = std::shared_ptr<Node>;

// One vertex of a reverse-mode tape. Leaf gradients accumulate (+=) across
// backward() calls until explicitly cleared; the optimizer step is the
// designated place that clears them. Each backward() sweep is computed from
// zero and folded in with one add per element, so calling it twice on the
// same graph doubles leaf grads exactly. Intermediate node grads are released
// during the sweep and are not retained.
struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated, same shape/dtype as value
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents

  void accumulate(const Tensor& g);
  void clear_grad() { grad = Tensor(); }
};

Var constant(Tensor v);
Var param(Tensor v);  // requires_grad = true

// Escape hatch for ops with hand-written adjoints. `backward_fn` reads
// node.grad and must accumulate into the parents' grads itself. Finite checks
// and requires_grad propagation behave like the built-in ops.
Var custom(Tensor value, std::vector<Var> parents,
           std::function<void(Node&)> backward_fn, const char* opname = "custom");

// When enabled (default), every op output is scanned and a NaN/Inf raises an
// error naming the op instead of propagating.
bool& finite_checks();

// --- elementwise, broadcasting over size-1 axes (equal rank) ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);

Var neg(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var sqrt_(const Var& a);
Var abs_(const Var& a);  // subgradient 0 at 0

Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var clamp_min(const Var& a, double c);  // gradient passes where value > c

// --- shape movement ---
Var reshape(const Var& a, Shape s);                  // zero-copy
Var permute(const Var& a, std::vector<int> axes);    // materializing
Var concat(const std::vector<Var>& xs, int axis);
std::vector<Var> split(const Var& a, int axis, const std::vector<int64_t>& sizes);

// --- reductions ---
Var reduce_sum(const Var& a, int axis, bool keepdim);
Var reduce_mean(const Var& a, int axis, bool keepdim);
Var reduce_sum_all(const Var& a);   // shape {1}
Var reduce_mean_all(const Var& a);  // shape {1}

// --- contractions / nn primitives ---
// (..,p,q) x (..,q,r) -> (..,p,r). Batch axes broadcast; a rank-2 operand is
// shared across the other side's batch.
Var matmul(const Var& a, const Var& b);
Var softmax_lastaxis(const Var& a);
// Normalizes over the last axis (zero mean / unit variance, eps inside the
// sqrt), then applies affine gamma/beta shaped like that axis.
Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// x (B,C,L), kernel (C,k) with k odd, zero same-padding, optional bias (C).
Var conv1d_depthwise(const Var& x, const Var& kernel, const Var& bias = nullptr);
// x (Cin,T,F), kernel (Cout,Cin,kt,kf) with odd extents, zero same-padding,
// cross-correlation convention, optional bias (Cout).
Var conv2d(const Var& x, const Var& kernel, const Var& bias = nullptr);

// Mean over non-overlapping windows along `axis`; input is edge-replicated to
// a multiple of `factor` first. Output extent = ceil(n / factor).
Var pool_avg(const Var& a, int factor, int axis);
// Repeats each element `factor` times along `axis`, truncated to out_len.
Var upsample_repeat(const Var& a, int factor, int axis, int64_t out_len);

// Reverse-mode sweep from a scalar loss. Visits each node exactly once in
// reverse topological order; deterministic for a given graph.
void backward(const Var& loss);

}  // namespace tfcorr::ad
