#include "tfcorr/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace tfcorr::ad {

namespace {

template <class R>
using MatMap = Eigen::Map<Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class R>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

bool g_finite_checks = true;

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> bw, const char* opname) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p && p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  if (n->requires_grad) n->backward_fn = std::move(bw);
  if (g_finite_checks && !n->value.all_finite())
    fail(std::string("op '") + opname + "' produced non-finite values");
  return n;
}

// Strides with 0 on broadcast (size-1) axes, aligned to the output shape.
std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  auto st = strides_of(in);
  for (size_t i = 0; i < in.size(); ++i)
    if (in[i] == 1 && out[i] != 1) st[i] = 0;
  return st;
}

// Iterates the output space of a broadcast binary op, calling
// fn(out_flat, a_offset, b_offset). Serial and deterministic.
template <class Fn>
void for_each_bcast(const Shape& os, const Shape& as, const Shape& bs, Fn&& fn) {
  const int64_t n = numel_of(os);
  if (n == 0) return;
  const int r = static_cast<int>(os.size());
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  auto sa = bcast_strides(as, os);
  auto sb = bcast_strides(bs, os);
  std::vector<int64_t> idx(r, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t i = 0; i < n; ++i) {
    fn(i, oa, ob);
    for (int ax = r - 1; ax >= 0; --ax) {
      ++idx[ax];
      oa += sa[ax];
      ob += sb[ax];
      if (idx[ax] < os[ax]) break;
      idx[ax] = 0;
      oa -= sa[ax] * os[ax];
      ob -= sb[ax] * os[ax];
    }
  }
}

// (outer, n, inner) decomposition around `axis`.
struct AxisSplit {
  int64_t outer = 1, n = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit sp;
  sp.n = s[static_cast<size_t>(axis)];
  for (int i = 0; i < axis; ++i) sp.outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  TFC_CHECK(axis >= 0 && axis < rank, "axis out of range");
  return axis;
}

void check_same_dtype(const Var& a, const Var& b, const char* op) {
  TFC_CHECK(a->value.dtype() == b->value.dtype(),
            op << ": dtype mismatch (" << dtype_name(a->value.dtype()) << " vs "
               << dtype_name(b->value.dtype()) << ")");
}

// --- generic binary elementwise with broadcasting ---
template <class FwdF, class DaF, class DbF>
Var binary_op(const Var& a, const Var& b, const char* opname, FwdF fwd, DaF da,
              DbF db) {
  check_same_dtype(a, b, opname);
  Shape os = broadcast_shapes(a->value.shape(), b->value.shape());
  const Dtype dt = a->value.dtype();
  Tensor out(os, dt);
  dispatch(dt, [&](auto tag) {
    using R = decltype(tag);
    auto pa = a->value.data<R>();
    auto pb = b->value.data<R>();
    auto po = out.data<R>();
    if (a->value.shape() == b->value.shape()) {
      for (int64_t i = 0; i < out.numel(); ++i)
        po[i] = static_cast<R>(fwd(static_cast<double>(pa[i]), static_cast<double>(pb[i])));
    } else {
      for_each_bcast(os, a->value.shape(), b->value.shape(),
                     [&](int64_t i, int64_t oa, int64_t ob) {
                       po[i] = static_cast<R>(
                           fwd(static_cast<double>(pa[oa]), static_cast<double>(pb[ob])));
                     });
    }
  });
  auto bw = [da, db](Node& n) {
    const Var& a = n.parents[0];
    const Var& b = n.parents[1];
    const Shape& os = n.value.shape();
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto g = n.grad.data<R>();
      auto pa = a->value.data<R>();
      auto pb = b->value.data<R>();
      if (a->requires_grad) {
        if (!a->grad.defined()) a->grad = Tensor(a->value.shape(), n.value.dtype());
        auto ga = a->grad.data<R>();
        for_each_bcast(os, a->value.shape(), b->value.shape(),
                       [&](int64_t i, int64_t oa, int64_t ob) {
                         ga[oa] += static_cast<R>(
                             da(static_cast<double>(g[i]), static_cast<double>(pa[oa]),
                                static_cast<double>(pb[ob])));
                       });
      }
      if (b->requires_grad) {
        if (!b->grad.defined()) b->grad = Tensor(b->value.shape(), n.value.dtype());
        auto gb = b->grad.data<R>();
        for_each_bcast(os, a->value.shape(), b->value.shape(),
                       [&](int64_t i, int64_t oa, int64_t ob) {
                         gb[ob] += static_cast<R>(
                             db(static_cast<double>(g[i]), static_cast<double>(pa[oa]),
                                static_cast<double>(pb[ob])));
                       });
      }
    });
  };
  return make_node(std::move(out), {a, b}, bw, opname);
}

// --- generic unary elementwise; dfn(g, x, y) returns dL/dx contribution ---
template <class FwdF, class DF>
Var unary_op(const Var& a, const char* opname, FwdF fwd, DF dfn) {
  const Dtype dt = a->value.dtype();
  Tensor out(a->value.shape(), dt);
  dispatch(dt, [&](auto tag) {
    using R = decltype(tag);
    auto pa = a->value.data<R>();
    auto po = out.data<R>();
    for (int64_t i = 0; i < out.numel(); ++i)
      po[i] = static_cast<R>(fwd(static_cast<double>(pa[i])));
  });
  auto bw = [dfn](Node& n) {
    const Var& a = n.parents[0];
    if (!a->requires_grad) return;
    if (!a->grad.defined()) a->grad = Tensor(a->value.shape(), n.value.dtype());
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto g = n.grad.data<R>();
      auto px = a->value.data<R>();
      auto py = n.value.data<R>();
      auto ga = a->grad.data<R>();
      for (int64_t i = 0; i < n.value.numel(); ++i)
        ga[i] += static_cast<R>(dfn(static_cast<double>(g[i]), static_cast<double>(px[i]),
                                    static_cast<double>(py[i])));
    });
  };
  return make_node(std::move(out), {a}, bw, opname);
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  TFC_CHECK(g.shape() == value.shape() && g.dtype() == value.dtype(),
            "gradient shape/dtype mismatch: " << shape_str(g.shape()) << " vs "
                                              << shape_str(value.shape()));
  if (!grad.defined()) {
    grad = g.clone();
    return;
  }
  dispatch(value.dtype(), [&](auto tag) {
    using R = decltype(tag);
    auto d = grad.data<R>();
    auto s = g.data<R>();
    for (int64_t i = 0; i < value.numel(); ++i) d[i] += s[i];
  });
}

bool& finite_checks() { return g_finite_checks; }

Var constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

Var custom(Tensor value, std::vector<Var> parents,
           std::function<void(Node&)> backward_fn, const char* opname) {
  return make_node(std::move(value), std::move(parents), std::move(backward_fn), opname);
}

Var param(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

Var add(const Var& a, const Var& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Var sub(const Var& a, const Var& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Var mul(const Var& a, const Var& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Var divide(const Var& a, const Var& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Var neg(const Var& a) {
  return unary_op(
      a, "neg", [](double x) { return -x; },
      [](double g, double, double) { return -g; });
}

Var relu(const Var& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0 ? x : 0.0; },
      [](double g, double x, double) { return x > 0 ? g : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary_op(
      a, "sigmoid",
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                   : std::exp(x) / (1.0 + std::exp(x)); },
      [](double g, double, double y) { return g * y * (1.0 - y); });
}

Var tanh_(const Var& a) {
  return unary_op(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double g, double, double y) { return g * (1.0 - y * y); });
}

Var exp_(const Var& a) {
  return unary_op(
      a, "exp", [](double x) { return std::exp(x); },
      [](double g, double, double y) { return g * y; });
}

Var log_(const Var& a) {
  return unary_op(
      a, "log", [](double x) { return std::log(x); },
      [](double g, double x, double) { return g / x; });
}

Var sqrt_(const Var& a) {
  return unary_op(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double g, double, double y) { return 0.5 * g / y; });
}

Var abs_(const Var& a) {
  return unary_op(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double g, double x, double) { return x > 0 ? g : (x < 0 ? -g : 0.0); });
}

Var scale(const Var& a, double c) {
  return unary_op(
      a, "scale", [c](double x) { return c * x; },
      [c](double g, double, double) { return c * g; });
}

Var add_scalar(const Var& a, double c) {
  return unary_op(
      a, "add_scalar", [c](double x) { return x + c; },
      [](double g, double, double) { return g; });
}

Var clamp_min(const Var& a, double c) {
  return unary_op(
      a, "clamp_min", [c](double x) { return x > c ? x : c; },
      [c](double g, double x, double) { return x > c ? g : 0.0; });
}

Var reshape(const Var& a, Shape s) {
  Tensor out = a->value.reshaped(std::move(s));
  auto bw = [](Node& n) {
    const Var& a = n.parents[0];
    if (a->requires_grad) a->accumulate(n.grad.reshaped(a->value.shape()));
  };
  return make_node(std::move(out), {a}, bw, "reshape");
}

Var permute(const Var& a, std::vector<int> axes) {
  const int r = a->value.rank();
  TFC_CHECK(static_cast<int>(axes.size()) == r, "permute: axes size mismatch");
  std::vector<bool> seen(static_cast<size_t>(r), false);
  Shape os(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    int ax = normalize_axis(axes[static_cast<size_t>(i)], r);
    TFC_CHECK(!seen[static_cast<size_t>(ax)], "permute: duplicate axis");
    seen[static_cast<size_t>(ax)] = true;
    os[static_cast<size_t>(i)] = a->value.extent(ax);
    axes[static_cast<size_t>(i)] = ax;
  }
  auto copy_permuted = [](const Tensor& src, const std::vector<int>& ax, Tensor& dst) {
    const Shape& ss = src.shape();
    const int r = src.rank();
    auto sst = strides_of(ss);
    const Shape& ds = dst.shape();
    // output strides arranged along input axes: walking input axis ax[i]
    // advances the output along its i-th axis
    std::vector<int64_t> walk(static_cast<size_t>(r));
    auto dst_st = strides_of(ds);
    for (int i = 0; i < r; ++i) walk[static_cast<size_t>(ax[i])] = dst_st[static_cast<size_t>(i)];
    dispatch(src.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto ps = src.data<R>();
      auto pd = dst.data<R>();
      const int64_t n = src.numel();
      std::vector<int64_t> idx(static_cast<size_t>(r), 0);
      int64_t off = 0;
      for (int64_t i = 0; i < n; ++i) {
        pd[off] = ps[i];
        for (int axn = r - 1; axn >= 0; --axn) {
          ++idx[static_cast<size_t>(axn)];
          off += walk[static_cast<size_t>(axn)];
          if (idx[static_cast<size_t>(axn)] < ss[static_cast<size_t>(axn)]) break;
          idx[static_cast<size_t>(axn)] = 0;
          off -= walk[static_cast<size_t>(axn)] * ss[static_cast<size_t>(axn)];
        }
      }
    });
  };
  Tensor out(os, a->value.dtype());
  copy_permuted(a->value, axes, out);
  auto bw = [axes, copy_permuted](Node& n) {
    const Var& a = n.parents[0];
    if (!a->requires_grad) return;
    // inverse permutation
    std::vector<int> inv(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) inv[static_cast<size_t>(axes[i])] = static_cast<int>(i);
    Tensor ga(n.parents[0]->value.shape(), n.value.dtype());
    copy_permuted(n.grad, inv, ga);
    a->accumulate(ga);
  };
  return make_node(std::move(out), {a}, bw, "permute");
}

Var concat(const std::vector<Var>& xs, int axis) {
  TFC_CHECK(!xs.empty(), "concat: empty input list");
  const int r = xs[0]->value.rank();
  const int ax = normalize_axis(axis, r);
  const Dtype dt = xs[0]->value.dtype();
  Shape os = xs[0]->value.shape();
  int64_t total = 0;
  for (const auto& x : xs) {
    TFC_CHECK(x->value.rank() == r && x->value.dtype() == dt, "concat: rank/dtype mismatch");
    for (int i = 0; i < r; ++i)
      if (i != ax)
        TFC_CHECK(x->value.extent(i) == os[static_cast<size_t>(i)],
                  "concat: extent mismatch at axis " << i);
    total += x->value.extent(ax);
  }
  os[static_cast<size_t>(ax)] = total;
  Tensor out(os, dt);
  auto spo = split_axis(os, ax);
  dispatch(dt, [&](auto tag) {
    using R = decltype(tag);
    auto po = out.data<R>();
    int64_t off = 0;
    for (const auto& x : xs) {
      auto px = x->value.data<R>();
      auto spx = split_axis(x->value.shape(), ax);
      for (int64_t o = 0; o < spx.outer; ++o)
        std::memcpy(&po[(o * spo.n + off) * spo.inner], &px[o * spx.n * spx.inner],
                    static_cast<size_t>(spx.n * spx.inner) * sizeof(R));
      off += spx.n;
    }
  });
  auto bw = [ax](Node& n) {
    auto spo = split_axis(n.value.shape(), ax);
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto g = n.grad.data<R>();
      int64_t off = 0;
      for (const auto& x : n.parents) {
        auto spx = split_axis(x->value.shape(), ax);
        if (x->requires_grad) {
          if (!x->grad.defined()) x->grad = Tensor(x->value.shape(), n.value.dtype());
          auto gx = x->grad.data<R>();
          for (int64_t o = 0; o < spx.outer; ++o) {
            const R* src = &g[(o * spo.n + off) * spo.inner];
            R* dst = &gx[o * spx.n * spx.inner];
            for (int64_t i = 0; i < spx.n * spx.inner; ++i) dst[i] += src[i];
          }
        }
        off += spx.n;
      }
    });
  };
  return make_node(std::move(out), xs, bw, "concat");
}

std::vector<Var> split(const Var& a, int axis, const std::vector<int64_t>& sizes) {
  const int ax = normalize_axis(axis, a->value.rank());
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  TFC_CHECK(total == a->value.extent(ax),
            "split: sizes sum " << total << " != extent " << a->value.extent(ax));
  auto spa = split_axis(a->value.shape(), ax);
  std::vector<Var> outs;
  int64_t off = 0;
  for (int64_t sz : sizes) {
    Shape os = a->value.shape();
    os[static_cast<size_t>(ax)] = sz;
    Tensor out(os, a->value.dtype());
    dispatch(a->value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto pa = a->value.data<R>();
      auto po = out.data<R>();
      for (int64_t o = 0; o < spa.outer; ++o)
        std::memcpy(&po[o * sz * spa.inner], &pa[(o * spa.n + off) * spa.inner],
                    static_cast<size_t>(sz * spa.inner) * sizeof(R));
    });
    const int64_t off_here = off;
    auto bw = [ax, off_here, sz](Node& n) {
      const Var& a = n.parents[0];
      if (!a->requires_grad) return;
      if (!a->grad.defined()) a->grad = Tensor(a->value.shape(), n.value.dtype());
      auto spa = split_axis(a->value.shape(), ax);
      dispatch(n.value.dtype(), [&](auto tag) {
        using R = decltype(tag);
        auto g = n.grad.data<R>();
        auto ga = a->grad.data<R>();
        for (int64_t o = 0; o < spa.outer; ++o) {
          const R* src = &g[o * sz * spa.inner];
          R* dst = &ga[(o * spa.n + off_here) * spa.inner];
          for (int64_t i = 0; i < sz * spa.inner; ++i) dst[i] += src[i];
        }
      });
    };
    outs.push_back(make_node(std::move(out), {a}, bw, "split"));
    off += sz;
  }
  return outs;
}

Var reduce_sum(const Var& a, int axis, bool keepdim) {
  const int ax = normalize_axis(axis, a->value.rank());
  auto sp = split_axis(a->value.shape(), ax);
  Shape os = a->value.shape();
  if (keepdim)
    os[static_cast<size_t>(ax)] = 1;
  else
    os.erase(os.begin() + ax);
  Tensor out(os, a->value.dtype());
  dispatch(a->value.dtype(), [&](auto tag) {
    using R = decltype(tag);
    auto pa = a->value.data<R>();
    auto po = out.data<R>();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t i = 0; i < sp.n; ++i) {
        const R* src = &pa[(o * sp.n + i) * sp.inner];
        R* dst = &po[o * sp.inner];
        for (int64_t k = 0; k < sp.inner; ++k) dst[k] += src[k];
      }
  });
  auto bw = [ax](Node& n) {
    const Var& a = n.parents[0];
    if (!a->requires_grad) return;
    if (!a->grad.defined()) a->grad = Tensor(a->value.shape(), n.value.dtype());
    auto sp = split_axis(a->value.shape(), ax);
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto g = n.grad.data<R>();
      auto ga = a->grad.data<R>();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t i = 0; i < sp.n; ++i) {
          R* dst = &ga[(o * sp.n + i) * sp.inner];
          const R* src = &g[o * sp.inner];
          for (int64_t k = 0; k < sp.inner; ++k) dst[k] += src[k];
        }
    });
  };
  return make_node(std::move(out), {a}, bw, "reduce_sum");
}

Var reduce_mean(const Var& a, int axis, bool keepdim) {
  const int ax = normalize_axis(axis, a->value.rank());
  const double inv = 1.0 / static_cast<double>(a->value.extent(ax));
  return scale(reduce_sum(a, ax, keepdim), inv);
}

Var reduce_sum_all(const Var& a) {
  Tensor out({1}, a->value.dtype());
  dispatch(a->value.dtype(), [&](auto tag) {
    using R = decltype(tag);
    auto pa = a->value.data<R>();
    R acc = 0;
    for (int64_t i = 0; i < a->value.numel(); ++i) acc += pa[i];
    out.data<R>()[0] = acc;
  });
  auto bw = [](Node& n) {
    const Var& a = n.parents[0];
    if (!a->requires_grad) return;
    if (!a->grad.defined()) a->grad = Tensor(a->value.shape(), n.value.dtype());
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      const R g = n.grad.data<R>()[0];
      auto ga = a->grad.data<R>();
      for (int64_t i = 0; i < a->value.numel(); ++i) ga[i] += g;
    });
  };
  return make_node(std::move(out), {a}, bw, "reduce_sum_all");
}

Var reduce_mean_all(const Var& a) {
  return scale(reduce_sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

namespace {

struct MatmulDims {
  Shape batch;          // output batch shape
  Shape abatch, bbatch; // promoted operand batch shapes (rank == batch.rank)
  int64_t p, q, r;
};

MatmulDims matmul_dims(const Shape& as, const Shape& bs) {
  TFC_CHECK(as.size() >= 2 && bs.size() >= 2,
            "matmul: operands must be at least rank 2, got " << shape_str(as)
                                                             << " and " << shape_str(bs));
  MatmulDims d;
  d.p = as[as.size() - 2];
  d.q = as[as.size() - 1];
  const int64_t q2 = bs[bs.size() - 2];
  d.r = bs[bs.size() - 1];
  TFC_CHECK(d.q == q2, "matmul: inner extents differ: " << shape_str(as) << " x "
                                                        << shape_str(bs));
  Shape ab(as.begin(), as.end() - 2), bb(bs.begin(), bs.end() - 2);
  const size_t nb = std::max(ab.size(), bb.size());
  while (ab.size() < nb) ab.insert(ab.begin(), 1);
  while (bb.size() < nb) bb.insert(bb.begin(), 1);
  d.batch = broadcast_shapes(ab, bb);
  d.abatch = ab;
  d.bbatch = bb;
  return d;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  check_same_dtype(a, b, "matmul");
  MatmulDims d = matmul_dims(a->value.shape(), b->value.shape());
  Shape os = d.batch;
  os.push_back(d.p);
  os.push_back(d.r);
  Tensor out(os, a->value.dtype());
  const int64_t amat = d.p * d.q, bmat = d.q * d.r, omat = d.p * d.r;
  dispatch(a->value.dtype(), [&](auto tag) {
    using R = decltype(tag);
    auto pa = a->value.data<R>();
    auto pb = b->value.data<R>();
    auto po = out.data<R>();
    for_each_bcast(d.batch, d.abatch, d.bbatch, [&](int64_t i, int64_t oa, int64_t ob) {
      ConstMatMap<R> A(&pa[oa * amat], d.p, d.q);
      ConstMatMap<R> B(&pb[ob * bmat], d.q, d.r);
      MatMap<R> O(&po[i * omat], d.p, d.r);
      O.noalias() = A * B;
    });
  });
  auto bw = [d, amat, bmat, omat](Node& n) {
    const Var& a = n.parents[0];
    const Var& b = n.parents[1];
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto g = n.grad.data<R>();
      auto pa = a->value.data<R>();
      auto pb = b->value.data<R>();
      if (a->requires_grad && !a->grad.defined())
        a->grad = Tensor(a->value.shape(), n.value.dtype());
      if (b->requires_grad && !b->grad.defined())
        b->grad = Tensor(b->value.shape(), n.value.dtype());
      for_each_bcast(d.batch, d.abatch, d.bbatch, [&](int64_t i, int64_t oa, int64_t ob) {
        ConstMatMap<R> G(&g[i * omat], d.p, d.r);
        if (a->requires_grad) {
          ConstMatMap<R> B(&pb[ob * bmat], d.q, d.r);
          MatMap<R> GA(&a->grad.data<R>()[oa * amat], d.p, d.q);
          GA.noalias() += G * B.transpose();
        }
        if (b->requires_grad) {
          ConstMatMap<R> A(&pa[oa * amat], d.p, d.q);
          MatMap<R> GB(&b->grad.data<R>()[ob * bmat], d.q, d.r);
          GB.noalias() += A.transpose() * G;
        }
      });
    });
  };
  return make_node(std::move(out), {a, b}, bw, "matmul");
}

Var softmax_lastaxis(const Var& a) {
  TFC_CHECK(a->value.rank() >= 1, "softmax: rank >= 1 required");
  const int64_t dlen = a->value.extent(-1);
  const int64_t rows = a->value.numel() / std::max<int64_t>(dlen, 1);
  Tensor out(a->value.shape(), a->value.dtype());
  dispatch(a->value.dtype(), [&](auto tag) {
    using R = decltype(tag);
    auto pa = a->value.data<R>();
    auto po = out.data<R>();
    for (int64_t rI = 0; rI < rows; ++rI) {
      const R* x = &pa[rI * dlen];
      R* y = &po[rI * dlen];
      R m = x[0];
      for (int64_t i = 1; i < dlen; ++i) m = std::max(m, x[i]);
      double s = 0;
      for (int64_t i = 0; i < dlen; ++i) {
        const double e = std::exp(static_cast<double>(x[i] - m));
        y[i] = static_cast<R>(e);
        s += e;
      }
      const double inv = 1.0 / s;
      for (int64_t i = 0; i < dlen; ++i) y[i] = static_cast<R>(y[i] * inv);
    }
  });
  auto bw = [dlen, rows](Node& n) {
    const Var& a = n.parents[0];
    if (!a->requires_grad) return;
    if (!a->grad.defined()) a->grad = Tensor(a->value.shape(), n.value.dtype());
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto g = n.grad.data<R>();
      auto py = n.value.data<R>();
      auto ga = a->grad.data<R>();
      for (int64_t rI = 0; rI < rows; ++rI) {
        const R* gr = &g[rI * dlen];
        const R* y = &py[rI * dlen];
        R* d = &ga[rI * dlen];
        double dot = 0;
        for (int64_t i = 0; i < dlen; ++i) dot += static_cast<double>(gr[i]) * y[i];
        for (int64_t i = 0; i < dlen; ++i)
          d[i] += static_cast<R>(y[i] * (static_cast<double>(gr[i]) - dot));
      }
    });
  };
  return make_node(std::move(out), {a}, bw, "softmax");
}

Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int r = x->value.rank();
  const int64_t dlen = x->value.extent(-1);
  TFC_CHECK(gamma->value.numel() == dlen && beta->value.numel() == dlen,
            "layernorm: gamma/beta must match the normalized axis ("
                << dlen << "), got " << gamma->value.numel());
  Shape affine(static_cast<size_t>(r), 1);
  affine[static_cast<size_t>(r - 1)] = dlen;
  auto mu = reduce_mean(x, -1, true);
  auto xc = sub(x, mu);
  auto var = reduce_mean(mul(xc, xc), -1, true);
  auto rstd = exp_(scale(log_(add_scalar(var, eps)), -0.5));
  auto norm = mul(xc, rstd);
  return add(mul(norm, reshape(gamma, affine)), reshape(beta, affine));
}

Var conv1d_depthwise(const Var& x, const Var& kernel, const Var& bias) {
  TFC_CHECK(x->value.rank() == 3, "conv1d_depthwise: x must be (B,C,L), got "
                                      << shape_str(x->value.shape()));
  TFC_CHECK(kernel->value.rank() == 2, "conv1d_depthwise: kernel must be (C,k)");
  const int64_t B = x->value.extent(0), C = x->value.extent(1), L = x->value.extent(2);
  const int64_t k = kernel->value.extent(1);
  TFC_CHECK(kernel->value.extent(0) == C, "conv1d_depthwise: channel mismatch");
  TFC_CHECK(k % 2 == 1, "conv1d_depthwise: kernel size must be odd, got " << k);
  if (bias) {
    check_same_dtype(x, bias, "conv1d_depthwise");
    TFC_CHECK(bias->value.numel() == C, "conv1d_depthwise: bias size mismatch");
  }
  check_same_dtype(x, kernel, "conv1d_depthwise");
  const int64_t half = k / 2;
  Tensor out(x->value.shape(), x->value.dtype());
  dispatch(x->value.dtype(), [&](auto tag) {
    using R = decltype(tag);
    auto px = x->value.data<R>();
    auto pw = kernel->value.data<R>();
    auto po = out.data<R>();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const R* xs = &px[(b * C + c) * L];
        const R* w = &pw[c * k];
        R* ys = &po[(b * C + c) * L];
        const R bias_v = bias ? bias->value.data<R>()[c] : static_cast<R>(0);
        for (int64_t l = 0; l < L; ++l) {
          double acc = bias_v;
          const int64_t j0 = std::max<int64_t>(0, half - l);
          const int64_t j1 = std::min<int64_t>(k, L + half - l);
          for (int64_t j = j0; j < j1; ++j) acc += static_cast<double>(xs[l + j - half]) * w[j];
          ys[l] = static_cast<R>(acc);
        }
      }
  });
  std::vector<Var> parents{x, kernel};
  if (bias) parents.push_back(bias);
  auto bw = [B, C, L, k, half](Node& n) {
    const Var& x = n.parents[0];
    const Var& kernel = n.parents[1];
    const Var bias = n.parents.size() > 2 ? n.parents[2] : nullptr;
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto g = n.grad.data<R>();
      auto px = x->value.data<R>();
      auto pw = kernel->value.data<R>();
      if (x->requires_grad && !x->grad.defined())
        x->grad = Tensor(x->value.shape(), n.value.dtype());
      if (kernel->requires_grad && !kernel->grad.defined())
        kernel->grad = Tensor(kernel->value.shape(), n.value.dtype());
      if (bias && bias->requires_grad && !bias->grad.defined())
        bias->grad = Tensor(bias->value.shape(), n.value.dtype());
      for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
          const R* gs = &g[(b * C + c) * L];
          const R* xs = &px[(b * C + c) * L];
          const R* w = &pw[c * k];
          for (int64_t l = 0; l < L; ++l) {
            const int64_t j0 = std::max<int64_t>(0, half - l);
            const int64_t j1 = std::min<int64_t>(k, L + half - l);
            if (x->requires_grad) {
              R* gx = &x->grad.data<R>()[(b * C + c) * L];
              for (int64_t j = j0; j < j1; ++j) gx[l + j - half] += gs[l] * w[j];
            }
            if (kernel->requires_grad) {
              R* gw = &kernel->grad.data<R>()[c * k];
              for (int64_t j = j0; j < j1; ++j) gw[j] += gs[l] * xs[l + j - half];
            }
          }
          if (bias && bias->requires_grad) {
            R acc = 0;
            for (int64_t l = 0; l < L; ++l) acc += gs[l];
            bias->grad.data<R>()[c] += acc;
          }
        }
    });
  };
  return make_node(std::move(out), std::move(parents), bw, "conv1d_depthwise");
}

namespace {

// im2col for (Cin,T,F) with odd (kt,kf) and zero same-padding:
// cols is (Cin*kt*kf, T*F), written row by row.
template <class R>
void im2col(std::span<const R> x, int64_t Cin, int64_t T, int64_t F, int64_t kt,
            int64_t kf, std::vector<R>& cols) {
  const int64_t ht = kt / 2, hf = kf / 2;
  cols.assign(static_cast<size_t>(Cin * kt * kf * T * F), R(0));
  int64_t row = 0;
  for (int64_t c = 0; c < Cin; ++c)
    for (int64_t dt = -ht; dt <= ht; ++dt)
      for (int64_t df = -hf; df <= hf; ++df, ++row) {
        R* dst = &cols[static_cast<size_t>(row * T * F)];
        const R* src = &x[static_cast<size_t>(c * T * F)];
        for (int64_t t = 0; t < T; ++t) {
          const int64_t ts = t + dt;
          if (ts < 0 || ts >= T) continue;
          const int64_t f0 = std::max<int64_t>(0, -df);
          const int64_t f1 = std::min<int64_t>(F, F - df);
          for (int64_t f = f0; f < f1; ++f) dst[t * F + f] = src[ts * F + f + df];
        }
      }
}

template <class R>
void col2im_add(const std::vector<R>& cols, int64_t Cin, int64_t T, int64_t F,
                int64_t kt, int64_t kf, std::span<R> gx) {
  const int64_t ht = kt / 2, hf = kf / 2;
  int64_t row = 0;
  for (int64_t c = 0; c < Cin; ++c)
    for (int64_t dt = -ht; dt <= ht; ++dt)
      for (int64_t df = -hf; df <= hf; ++df, ++row) {
        const R* src = &cols[static_cast<size_t>(row * T * F)];
        R* dst = &gx[static_cast<size_t>(c * T * F)];
        for (int64_t t = 0; t < T; ++t) {
          const int64_t ts = t + dt;
          if (ts < 0 || ts >= T) continue;
          const int64_t f0 = std::max<int64_t>(0, -df);
          const int64_t f1 = std::min<int64_t>(F, F - df);
          for (int64_t f = f0; f < f1; ++f) dst[ts * F + f + df] += src[t * F + f];
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& kernel, const Var& bias) {
  TFC_CHECK(x->value.rank() == 3, "conv2d: x must be (Cin,T,F), got "
                                      << shape_str(x->value.shape()));
  TFC_CHECK(kernel->value.rank() == 4, "conv2d: kernel must be (Cout,Cin,kt,kf)");
  const int64_t Cin = x->value.extent(0), T = x->value.extent(1), F = x->value.extent(2);
  const int64_t Cout = kernel->value.extent(0);
  const int64_t kt = kernel->value.extent(2), kf = kernel->value.extent(3);
  TFC_CHECK(kernel->value.extent(1) == Cin, "conv2d: Cin mismatch ("
                                                << kernel->value.extent(1) << " vs "
                                                << Cin << ")");
  TFC_CHECK(kt % 2 == 1 && kf % 2 == 1, "conv2d: kernel extents must be odd, got ("
                                            << kt << "," << kf << ")");
  check_same_dtype(x, kernel, "conv2d");
  if (bias) TFC_CHECK(bias->value.numel() == Cout, "conv2d: bias size mismatch");
  Tensor out({Cout, T, F}, x->value.dtype());
  dispatch(x->value.dtype(), [&](auto tag) {
    using R = decltype(tag);
    std::vector<R> cols;
    im2col<R>(x->value.data<R>(), Cin, T, F, kt, kf, cols);
    ConstMatMap<R> W(kernel->value.data<R>().data(), Cout, Cin * kt * kf);
    ConstMatMap<R> Cm(cols.data(), Cin * kt * kf, T * F);
    MatMap<R> O(out.data<R>().data(), Cout, T * F);
    O.noalias() = W * Cm;
    if (bias) {
      auto pb = bias->value.data<R>();
      auto po = out.data<R>();
      for (int64_t c = 0; c < Cout; ++c)
        for (int64_t i = 0; i < T * F; ++i) po[c * T * F + i] += pb[c];
    }
  });
  std::vector<Var> parents{x, kernel};
  if (bias) parents.push_back(bias);
  auto bw = [Cin, T, F, Cout, kt, kf](Node& n) {
    const Var& x = n.parents[0];
    const Var& kernel = n.parents[1];
    const Var bias = n.parents.size() > 2 ? n.parents[2] : nullptr;
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      ConstMatMap<R> G(n.grad.data<R>().data(), Cout, T * F);
      if (kernel->requires_grad) {
        if (!kernel->grad.defined())
          kernel->grad = Tensor(kernel->value.shape(), n.value.dtype());
        std::vector<R> cols;
        im2col<R>(x->value.data<R>(), Cin, T, F, kt, kf, cols);
        ConstMatMap<R> Cm(cols.data(), Cin * kt * kf, T * F);
        MatMap<R> GW(kernel->grad.data<R>().data(), Cout, Cin * kt * kf);
        GW.noalias() += G * Cm.transpose();
      }
      if (x->requires_grad) {
        if (!x->grad.defined()) x->grad = Tensor(x->value.shape(), n.value.dtype());
        std::vector<R> gcols(static_cast<size_t>(Cin * kt * kf * T * F));
        ConstMatMap<R> W(kernel->value.data<R>().data(), Cout, Cin * kt * kf);
        MatMap<R> GC(gcols.data(), Cin * kt * kf, T * F);
        GC.noalias() = W.transpose() * G;
        col2im_add<R>(gcols, Cin, T, F, kt, kf, x->grad.data<R>());
      }
      if (bias && bias->requires_grad) {
        if (!bias->grad.defined()) bias->grad = Tensor(bias->value.shape(), n.value.dtype());
        auto g = n.grad.data<R>();
        auto gb = bias->grad.data<R>();
        for (int64_t c = 0; c < Cout; ++c) {
          R acc = 0;
          for (int64_t i = 0; i < T * F; ++i) acc += g[c * T * F + i];
          gb[c] += acc;
        }
      }
    });
  };
  return make_node(std::move(out), std::move(parents), bw, "conv2d");
}

Var pool_avg(const Var& a, int factor, int axis) {
  TFC_CHECK(factor >= 1, "pool_avg: factor must be >= 1, got " << factor);
  const int ax = normalize_axis(axis, a->value.rank());
  auto sp = split_axis(a->value.shape(), ax);
  const int64_t out_n = (sp.n + factor - 1) / factor;
  Shape os = a->value.shape();
  os[static_cast<size_t>(ax)] = out_n;
  Tensor out(os, a->value.dtype());
  const double inv = 1.0 / factor;
  dispatch(a->value.dtype(), [&](auto tag) {
    using R = decltype(tag);
    auto pa = a->value.data<R>();
    auto po = out.data<R>();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t i = 0; i < out_n; ++i) {
        R* dst = &po[(o * out_n + i) * sp.inner];
        for (int64_t j = 0; j < factor; ++j) {
          // edge-replicate past the end
          const int64_t src_i = std::min<int64_t>(i * factor + j, sp.n - 1);
          const R* src = &pa[(o * sp.n + src_i) * sp.inner];
          for (int64_t k = 0; k < sp.inner; ++k)
            dst[k] += static_cast<R>(src[k] * inv);
        }
      }
  });
  auto bw = [ax, factor, out_n, inv](Node& n) {
    const Var& a = n.parents[0];
    if (!a->requires_grad) return;
    if (!a->grad.defined()) a->grad = Tensor(a->value.shape(), n.value.dtype());
    auto sp = split_axis(a->value.shape(), ax);
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto g = n.grad.data<R>();
      auto ga = a->grad.data<R>();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t i = 0; i < out_n; ++i) {
          const R* src = &g[(o * out_n + i) * sp.inner];
          for (int64_t j = 0; j < factor; ++j) {
            const int64_t src_i = std::min<int64_t>(i * factor + j, sp.n - 1);
            R* dst = &ga[(o * sp.n + src_i) * sp.inner];
            for (int64_t k = 0; k < sp.inner; ++k)
              dst[k] += static_cast<R>(src[k] * inv);
          }
        }
    });
  };
  return make_node(std::move(out), {a}, bw, "pool_avg");
}

Var upsample_repeat(const Var& a, int factor, int axis, int64_t out_len) {
  TFC_CHECK(factor >= 1, "upsample_repeat: factor must be >= 1, got " << factor);
  const int ax = normalize_axis(axis, a->value.rank());
  auto sp = split_axis(a->value.shape(), ax);
  TFC_CHECK(out_len >= 1 && out_len <= sp.n * factor,
            "upsample_repeat: out_len " << out_len << " not in [1, " << sp.n * factor
                                        << "]");
  Shape os = a->value.shape();
  os[static_cast<size_t>(ax)] = out_len;
  Tensor out(os, a->value.dtype());
  dispatch(a->value.dtype(), [&](auto tag) {
    using R = decltype(tag);
    auto pa = a->value.data<R>();
    auto po = out.data<R>();
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t i = 0; i < out_len; ++i)
        std::memcpy(&po[(o * out_len + i) * sp.inner],
                    &pa[(o * sp.n + i / factor) * sp.inner],
                    static_cast<size_t>(sp.inner) * sizeof(R));
  });
  auto bw = [ax, factor, out_len](Node& n) {
    const Var& a = n.parents[0];
    if (!a->requires_grad) return;
    if (!a->grad.defined()) a->grad = Tensor(a->value.shape(), n.value.dtype());
    auto sp = split_axis(a->value.shape(), ax);
    dispatch(n.value.dtype(), [&](auto tag) {
      using R = decltype(tag);
      auto g = n.grad.data<R>();
      auto ga = a->grad.data<R>();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t i = 0; i < out_len; ++i) {
          const R* src = &g[(o * out_len + i) * sp.inner];
          R* dst = &ga[(o * sp.n + i / factor) * sp.inner];
          for (int64_t k = 0; k < sp.inner; ++k) dst[k] += src[k];
        }
    });
  };
  return make_node(std::move(out), {a}, bw, "upsample_repeat");
}

void backward(const Var& loss) {
  TFC_CHECK(loss, "backward: null loss");
  TFC_CHECK(loss->value.numel() == 1,
            "backward: loss must be scalar, got " << shape_str(loss->value.shape()));
  if (!loss->requires_grad) return;

  // reverse topological order via iterative DFS over grad-requiring nodes
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.get(), 0});
  visited.insert(loss.get());
  while (!stack.empty()) {
    Frame& fr = stack.back();
    if (fr.next < fr.n->parents.size()) {
      Node* p = fr.n->parents[fr.next++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(fr.n);
      stack.pop_back();
    }
  }

  // Sweep from zero, then fold previously accumulated gradients back in with
  // one add per element. A repeated backward call replays identical float ops,
  // so grads double exactly.
  std::vector<std::pair<Node*, Tensor>> saved;
  for (Node* n : order)
    if (n->grad.defined()) {
      saved.emplace_back(n, n->grad);
      n->clear_grad();
    }

  loss->accumulate(Tensor::full(loss->value.shape(), 1.0, loss->value.dtype()));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
    // Intermediate gradients are released as the sweep passes; only leaf
    // gradients persist (and accumulate across backward calls).
    if (!n->parents.empty()) n->clear_grad();
  }
  for (auto& [n, g] : saved)
    if (n->grad.defined()) n->accumulate(g);
}

}  // namespace tfcorr::ad
