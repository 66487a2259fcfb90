#include "tfcorr/tensor.hpp"

#include <cmath>

namespace tfcorr {

void fail(const std::string& msg) { throw std::runtime_error(msg); }

int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    TFC_CHECK(e >= 0, "negative extent in shape " << shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream oss;
  oss << "(";
  for (size_t i = 0; i < s.size(); ++i) oss << (i ? "," : "") << s[i];
  oss << ")";
  return oss.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  TFC_CHECK(a.size() == b.size(), "broadcast rank mismatch: " << shape_str(a)
                                  << " vs " << shape_str(b));
  Shape out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      out[i] = a[i];
    } else if (a[i] == 1 || b[i] == 1) {
      out[i] = std::max(a[i], b[i]);
    } else {
      TFC_CHECK(false, "shapes not broadcastable: " << shape_str(a) << " vs "
                       << shape_str(b));
    }
  }
  return out;
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

Tensor::Tensor(Shape shape, Dtype dtype) : shape_(std::move(shape)), dtype_(dtype) {
  const int64_t n = numel_of(shape_);
  buf_ = std::make_shared<std::vector<std::byte>>(
      static_cast<size_t>(n) * dtype_size(dtype_), std::byte{0});
}

Tensor Tensor::zeros(Shape shape, Dtype dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, Dtype dtype) {
  Tensor t(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using R = decltype(tag);
    for (R& x : t.data<R>()) x = static_cast<R>(value);
  });
  return t;
}

Tensor Tensor::scalar(double value, Dtype dtype) { return full({1}, value, dtype); }

Tensor Tensor::from_values(Shape shape, const std::vector<double>& v, Dtype dtype) {
  Tensor t(std::move(shape), dtype);
  TFC_CHECK(static_cast<int64_t>(v.size()) == t.numel(),
            "from_values: got " << v.size() << " values for shape "
                                << shape_str(t.shape()));
  dispatch(dtype, [&](auto tag) {
    using R = decltype(tag);
    auto d = t.data<R>();
    for (size_t i = 0; i < v.size(); ++i) d[i] = static_cast<R>(v[i]);
  });
  return t;
}

int64_t Tensor::extent(int axis) const {
  if (axis < 0) axis += rank();
  TFC_CHECK(axis >= 0 && axis < rank(), "axis " << axis << " out of range for "
                                                << shape_str(shape_));
  return shape_[axis];
}

double Tensor::at(int64_t flat) const {
  TFC_CHECK(flat >= 0 && flat < numel(), "flat index out of range");
  return dispatch(dtype_, [&](auto tag) -> double {
    using R = decltype(tag);
    return static_cast<double>(data<R>()[static_cast<size_t>(flat)]);
  });
}

void Tensor::set(int64_t flat, double v) {
  TFC_CHECK(flat >= 0 && flat < numel(), "flat index out of range");
  dispatch(dtype_, [&](auto tag) {
    using R = decltype(tag);
    data<R>()[static_cast<size_t>(flat)] = static_cast<R>(v);
  });
}

Tensor Tensor::clone() const {
  if (!defined()) return {};
  Tensor t(shape_, dtype_);
  std::memcpy(t.buf_->data(), buf_->data(), buf_->size());
  return t;
}

Tensor Tensor::astype(Dtype dt) const {
  if (dt == dtype_) return *this;
  Tensor t(shape_, dt);
  const int64_t n = numel();
  if (dtype_ == Dtype::F32) {
    auto s = data<float>();
    auto d = t.data<double>();
    for (int64_t i = 0; i < n; ++i) d[i] = static_cast<double>(s[i]);
  } else {
    auto s = data<double>();
    auto d = t.data<float>();
    for (int64_t i = 0; i < n; ++i) d[i] = static_cast<float>(s[i]);
  }
  return t;
}

Tensor Tensor::reshaped(Shape s) const {
  TFC_CHECK(numel_of(s) == numel(), "reshape " << shape_str(shape_) << " -> "
                                               << shape_str(s) << ": numel mismatch");
  Tensor t = *this;
  t.shape_ = std::move(s);
  return t;
}

bool Tensor::all_finite() const {
  return dispatch(dtype_, [&](auto tag) {
    using R = decltype(tag);
    for (R x : data<R>())
      if (!std::isfinite(x)) return false;
    return true;
  });
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<size_t>(numel()));
  dispatch(dtype_, [&](auto tag) {
    using R = decltype(tag);
    auto s = data<R>();
    for (size_t i = 0; i < s.size(); ++i) out[i] = static_cast<double>(s[i]);
  });
  return out;
}

}  // namespace tfcorr
