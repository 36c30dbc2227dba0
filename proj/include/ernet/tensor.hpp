#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ernet/error.hpp"
#include "ernet/rng.hpp"

namespace ernet {

using Extent = std::int64_t;
using Shape = std::vector<Extent>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

inline std::size_t shape_volume(const Shape& shape) {
  std::size_t n = 1;
  for (Extent e : shape) {
    if (e < 1) throw ShapeError("extent must be >= 1 in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

/// Dense row-major tensor. 4-D tensors are laid out (batch, height, width,
/// channels); weights of a k×k convolution are (kh, kw, in_ch, out_ch).
///
/// A default-constructed tensor is the empty sentinel (rank 0, no storage);
/// every constructed tensor has extents >= 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {
    if (shape_.empty()) throw ShapeError("tensor needs at least one extent");
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) throw ShapeError("tensor needs at least one extent");
    if (shape_volume(shape_) != data_.size())
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
  }

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  Extent dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Flat offset of a coordinate vector; bounds-checked.
  std::size_t offset(std::span<const Extent> coords) const {
    if (coords.size() != shape_.size())
      throw ShapeError("coordinate rank mismatch for shape " + shape_str(shape_));
    std::size_t flat = 0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (coords[i] < 0 || coords[i] >= shape_[i])
        throw ShapeError("coordinate out of range for shape " + shape_str(shape_));
      flat = flat * static_cast<std::size_t>(shape_[i]) + static_cast<std::size_t>(coords[i]);
    }
    return flat;
  }

  std::vector<Extent> coords(std::size_t flat) const {
    if (flat >= data_.size()) throw ShapeError("flat index out of range");
    std::vector<Extent> c(shape_.size());
    for (std::size_t i = shape_.size(); i-- > 0;) {
      c[i] = static_cast<Extent>(flat % static_cast<std::size_t>(shape_[i]));
      flat /= static_cast<std::size_t>(shape_[i]);
    }
    return c;
  }

  template <typename... I>
  T& at(I... idx) {
    const Extent c[] = {static_cast<Extent>(idx)...};
    return data_[offset(c)];
  }
  template <typename... I>
  const T& at(I... idx) const {
    const Extent c[] = {static_cast<Extent>(idx)...};
    return data_[offset(c)];
  }

  /// Same storage viewed under a new shape of equal volume.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T> new_tensor(const Shape& shape, T fill) {
  return Tensor<T>(shape, fill);
}

/// He-normal initialisation: N(0, 2 / fan_in).
template <typename T>
Tensor<T> he_normal_init(const Shape& shape, Extent fan_in, Rng& rng) {
  if (fan_in < 1) throw ArgumentError("he_normal_init: fan_in must be >= 1");
  Tensor<T> t(shape);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.normal() * stddev);
  return t;
}

enum class ElementwiseOp { add, mul, scale, relu_mask };

namespace detail {
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}
}  // namespace detail

/// Tensor-tensor elementwise op. relu_mask keeps a where b > 0 and zeroes it
/// elsewhere (the ReLU backward rule with b as the forward input).
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "elementwise");
  Tensor<T> out(a.shape());
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      break;
    case ElementwiseOp::relu_mask:
      for (std::size_t i = 0; i < n; ++i) po[i] = pb[i] > T(0) ? pa[i] : T(0);
      break;
    case ElementwiseOp::scale:
      throw ArgumentError("elementwise: scale takes a scalar operand");
  }
  return out;
}

/// Tensor-scalar elementwise op (scale and mul multiply, add offsets).
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, T b) {
  Tensor<T> out(a.shape());
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b;
      break;
    case ElementwiseOp::mul:
    case ElementwiseOp::scale:
      for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b;
      break;
    case ElementwiseOp::relu_mask:
      for (std::size_t i = 0; i < n; ++i) out[i] = b > T(0) ? a[i] : T(0);
      break;
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseOp::add, a, b);
}
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return elementwise(ElementwiseOp::scale, a, s);
}

/// In-place a += b; used by gradient accumulation and the optimizer.
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add_inplace");
  T* pa = a.raw();
  const T* pb = b.raw();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

struct Padding {
  Extent top = 0, bottom = 0, left = 0, right = 0;
};

template <typename T>
Tensor<T> pad_spatial(const Tensor<T>& x, Padding pad, T value) {
  if (x.rank() != 4) throw ShapeError("pad_spatial expects a 4-D tensor, got " + shape_str(x.shape()));
  if (pad.top < 0 || pad.bottom < 0 || pad.left < 0 || pad.right < 0)
    throw ArgumentError("pad_spatial: negative padding");
  const Extent n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const Extent oh = h + pad.top + pad.bottom, ow = w + pad.left + pad.right;
  Tensor<T> out({n, oh, ow, c}, value);
  for (Extent b = 0; b < n; ++b)
    for (Extent y = 0; y < h; ++y) {
      const T* src = x.raw() + ((b * h + y) * w) * c;
      T* dst = out.raw() + ((b * oh + y + pad.top) * ow + pad.left) * c;
      std::copy(src, src + w * c, dst);
    }
  return out;
}

/// Inverse of pad_spatial: removes the given border.
template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, Padding crop) {
  if (x.rank() != 4) throw ShapeError("crop_spatial expects a 4-D tensor, got " + shape_str(x.shape()));
  const Extent n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const Extent oh = h - crop.top - crop.bottom, ow = w - crop.left - crop.right;
  if (oh < 1 || ow < 1) throw ShapeError("crop_spatial removes the whole map");
  Tensor<T> out({n, oh, ow, c});
  for (Extent b = 0; b < n; ++b)
    for (Extent y = 0; y < oh; ++y) {
      const T* src = x.raw() + ((b * h + y + crop.top) * w + crop.left) * c;
      std::copy(src, src + ow * c, out.raw() + ((b * oh + y) * ow) * c);
    }
  return out;
}

}  // namespace ernet
