#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfcorr {

[[noreturn]] void fail(const std::string& msg);

// Error checking used across the library. Throws std::runtime_error.
#define TFC_CHECK(cond, msg)                                  \
  do {                                                        \
    if (!(cond)) {                                            \
      std::ostringstream tfc_oss_;                            \
      tfc_oss_ << "check failed (" #cond "): " << msg;        \
      ::tfcorr::fail(tfc_oss_.str());                         \
    }                                                         \
  } while (0)

enum class Dtype : uint8_t { F32 = 0, F64 = 1 };

inline size_t dtype_size(Dtype dt) { return dt == Dtype::F32 ? 4 : 8; }
inline const char* dtype_name(Dtype dt) { return dt == Dtype::F32 ? "f32" : "f64"; }

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

// Shapes broadcast only along size-1 axes; ranks must match.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Row-major strides for a shape.
std::vector<int64_t> strides_of(const Shape& s);

// Dense row-major real tensor. Storage is shared between copies; treat a
// tensor as immutable once an operation has produced it. dtype is a per-tensor
// property (f32 for training, f64 for gradient checks).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Dtype dtype);  // zero-filled

  static Tensor zeros(Shape shape, Dtype dtype = Dtype::F32);
  static Tensor full(Shape shape, double value, Dtype dtype = Dtype::F32);
  static Tensor scalar(double value, Dtype dtype = Dtype::F32);
  static Tensor from_values(Shape shape, const std::vector<double>& v,
                            Dtype dtype = Dtype::F32);

  bool defined() const { return static_cast<bool>(buf_); }
  Dtype dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t extent(int axis) const;
  int64_t numel() const { return defined() ? numel_of(shape_) : 0; }

  template <class R>
  std::span<R> data() {
    check_dtype<R>();
    return {reinterpret_cast<R*>(buf_->data()), static_cast<size_t>(numel())};
  }
  template <class R>
  std::span<const R> data() const {
    check_dtype<R>();
    return {reinterpret_cast<const R*>(buf_->data()),
            static_cast<size_t>(numel())};
  }

  // dtype-agnostic element access (test/tooling convenience, not a hot path)
  double at(int64_t flat) const;
  void set(int64_t flat, double v);

  Tensor clone() const;
  Tensor astype(Dtype dt) const;
  // Shares storage; only the shape changes. numel must match.
  Tensor reshaped(Shape s) const;

  bool all_finite() const;
  std::vector<double> to_vector() const;

 private:
  template <class R>
  void check_dtype() const {
    static_assert(std::is_same_v<R, float> || std::is_same_v<R, double>);
    TFC_CHECK(defined(), "tensor is undefined");
    if constexpr (std::is_same_v<R, float>)
      TFC_CHECK(dtype_ == Dtype::F32, "dtype mismatch: tensor is f64");
    else
      TFC_CHECK(dtype_ == Dtype::F64, "dtype mismatch: tensor is f32");
  }

  Shape shape_;
  Dtype dtype_ = Dtype::F32;
  std::shared_ptr<std::vector<std::byte>> buf_;
};

// Calls f with a value of the scalar type selected by dt: f(float{}) or f(double{}).
template <class F>
decltype(auto) dispatch(Dtype dt, F&& f) {
  if (dt == Dtype::F32) return f(float{});
  return f(double{});
}

}  // namespace tfcorr
