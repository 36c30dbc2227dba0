#include "ernet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ernet/parallel.hpp"

namespace ernet {
namespace {

struct Geometry {
  Extent n, h, w, c;
};

template <typename T>
Geometry geometry4(const Tensor<T>& x, const char* what) {
  if (x.empty()) throw ArgumentError(std::string(what) + ": empty input");
  if (x.rank() != 4) throw ShapeError(std::string(what) + ": expected 4-D input, got " + shape_str(x.shape()));
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

template <typename T>
void require_upstream(const Tensor<T>& upstream, const Shape& expected, const char* what) {
  if (upstream.empty()) throw ArgumentError(std::string(what) + ": backward needs an upstream gradient");
  if (upstream.shape() != expected)
    throw ShapeError(std::string(what) + ": upstream shape " + shape_str(upstream.shape()) +
                     " does not match output shape " + shape_str(expected));
}

// Offsets and output extent of a stride-1 window along one axis.
struct Window {
  Extent before;
  Extent out;
};

Window window(Extent in, Extent k, PaddingMode mode, const char* what) {
  if (mode == PaddingMode::same) return {(k - 1) / 2, in};
  const Extent out = in - k + 1;
  if (out < 1) throw ShapeError(std::string(what) + ": kernel larger than input under valid padding");
  return {0, out};
}

template <typename T>
inline T dot(const T* a, const T* b, Extent n) {
  T acc = 0;
  for (Extent i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, Extent n) {
  for (Extent i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

// ---- parameter validation -------------------------------------------------

template <typename T>
void ConvParams<T>::validate() const {
  if (weights.rank() != 4) throw ShapeError("conv weights must be (kh, kw, in_ch, out_ch)");
  if (kernel_h() % 2 == 0 || kernel_w() % 2 == 0) throw ShapeError("conv kernel extents must be odd");
  if (bias.rank() != 1 || bias.dim(0) != out_channels())
    throw ShapeError("conv bias length must equal out_ch");
  if (stride != 1) throw ArgumentError("only stride-1 convolution is supported");
}

template <typename T>
void DepthwiseParams<T>::validate() const {
  if (weights.rank() != 3) throw ShapeError("depthwise weights must be (kh, kw, ch)");
  if (weights.dim(0) % 2 == 0 || weights.dim(1) % 2 == 0)
    throw ShapeError("depthwise kernel extents must be odd");
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != channels()))
    throw ShapeError("depthwise bias length must equal channel count");
  if (stride != 1) throw ArgumentError("only stride-1 convolution is supported");
}

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(Extent channels) {
  BatchNormParams<T> p;
  p.scale = Tensor<T>({channels}, T(1));
  p.shift = Tensor<T>({channels}, T(0));
  p.running_mean = Tensor<T>({channels}, T(0));
  p.running_var = Tensor<T>({channels}, T(1));
  return p;
}

template <typename T>
void BatchNormParams<T>::validate() const {
  const Shape s = scale.shape();
  if (s.size() != 1 || shift.shape() != s || running_mean.shape() != s || running_var.shape() != s)
    throw ShapeError("batch-norm parameters must be four vectors of equal length");
  if (!(momentum > 0.0 && momentum < 1.0)) throw ArgumentError("batch-norm momentum must be in (0,1)");
  if (!(epsilon > 0.0)) throw ArgumentError("batch-norm epsilon must be positive");
}

// ---- conv2d ---------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  p.validate();
  const auto [n, h, w, ic] = geometry4(x, "conv2d");
  if (ic != p.in_channels())
    throw ShapeError("conv2d: input has " + std::to_string(ic) + " channels, kernel expects " +
                     std::to_string(p.in_channels()));
  const Extent kh = p.kernel_h(), kw = p.kernel_w(), oc = p.out_channels();
  const Window wy = window(h, kh, p.padding, "conv2d");
  const Window wx = window(w, kw, p.padding, "conv2d");
  const Extent oh = wy.out, ow = wx.out;
  Tensor<T> out({n, oh, ow, oc});
  const T* px = x.raw();
  const T* pw = p.weights.raw();
  const T* pb = p.bias.raw();
  T* po = out.raw();

  parallel_for(0, static_cast<std::size_t>(n * oh), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t row = lo; row < hi; ++row) {
      const Extent b = static_cast<Extent>(row) / oh, oy = static_cast<Extent>(row) % oh;
      for (Extent ox = 0; ox < ow; ++ox) {
        T* dst = po + ((b * oh + oy) * ow + ox) * oc;
        std::copy(pb, pb + oc, dst);
        for (Extent ky = 0; ky < kh; ++ky) {
          const Extent iy = oy + ky - wy.before;
          if (iy < 0 || iy >= h) continue;
          for (Extent kx = 0; kx < kw; ++kx) {
            const Extent ix = ox + kx - wx.before;
            if (ix < 0 || ix >= w) continue;
            const T* src = px + ((b * h + iy) * w + ix) * ic;
            const T* wk = pw + (ky * kw + kx) * ic * oc;
            for (Extent c = 0; c < ic; ++c) axpy(src[c], wk + c * oc, dst, oc);
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
GradBundle<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& upstream) {
  p.validate();
  const auto [n, h, w, ic] = geometry4(x, "conv2d");
  if (ic != p.in_channels()) throw ShapeError("conv2d: channel mismatch");
  const Extent kh = p.kernel_h(), kw = p.kernel_w(), oc = p.out_channels();
  const Window wy = window(h, kh, p.padding, "conv2d");
  const Window wx = window(w, kw, p.padding, "conv2d");
  const Extent oh = wy.out, ow = wx.out;
  require_upstream(upstream, {n, oh, ow, oc}, "conv2d");

  GradBundle<T> g;
  g.d_input = Tensor<T>(x.shape());
  Tensor<T> dw(p.weights.shape());
  Tensor<T> db({oc});
  const T* px = x.raw();
  const T* pw = p.weights.raw();
  const T* pu = upstream.raw();

  // d_input, gathered per input row so threads write disjoint rows.
  T* pdx = g.d_input.raw();
  parallel_for(0, static_cast<std::size_t>(n * h), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t row = lo; row < hi; ++row) {
      const Extent b = static_cast<Extent>(row) / h, iy = static_cast<Extent>(row) % h;
      for (Extent ix = 0; ix < w; ++ix) {
        T* dst = pdx + ((b * h + iy) * w + ix) * ic;
        for (Extent ky = 0; ky < kh; ++ky) {
          const Extent oy = iy - ky + wy.before;
          if (oy < 0 || oy >= oh) continue;
          for (Extent kx = 0; kx < kw; ++kx) {
            const Extent ox = ix - kx + wx.before;
            if (ox < 0 || ox >= ow) continue;
            const T* grad = pu + ((b * oh + oy) * ow + ox) * oc;
            const T* wk = pw + (ky * kw + kx) * ic * oc;
            for (Extent c = 0; c < ic; ++c) dst[c] += dot(wk + c * oc, grad, oc);
          }
        }
      }
    }
  });

  // d_weights, partitioned over (ky, kx, ic) slices; each slice sums pixels
  // in a fixed order.
  T* pdw = dw.raw();
  parallel_for(0, static_cast<std::size_t>(kh * kw * ic), [&](std::size_t lo, std::size_t hi) {
    for (Extent b = 0; b < n; ++b)
      for (Extent oy = 0; oy < oh; ++oy)
        for (Extent ox = 0; ox < ow; ++ox) {
          const T* grad = pu + ((b * oh + oy) * ow + ox) * oc;
          for (std::size_t s = lo; s < hi; ++s) {
            const Extent c = static_cast<Extent>(s) % ic;
            const Extent k = static_cast<Extent>(s) / ic;
            const Extent iy = oy + k / kw - wy.before;
            const Extent ix = ox + k % kw - wx.before;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            axpy(px[((b * h + iy) * w + ix) * ic + c], grad, pdw + s * oc, oc);
          }
        }
  });

  T* pdb = db.raw();
  for (std::size_t i = 0; i < static_cast<std::size_t>(n * oh * ow); ++i) axpy(T(1), pu + i * oc, pdb, oc);

  g.d_params.push_back(std::move(dw));
  g.d_params.push_back(std::move(db));
  return g;
}

// ---- depthwise ------------------------------------------------------------

template <typename T>
Tensor<T> depthwise_conv_forward(const Tensor<T>& x, const DepthwiseParams<T>& p) {
  p.validate();
  const auto [n, h, w, c] = geometry4(x, "depthwise_conv");
  if (c != p.channels())
    throw ShapeError("depthwise_conv: input has " + std::to_string(c) + " channels, filter has " +
                     std::to_string(p.channels()));
  const Extent kh = p.weights.dim(0), kw = p.weights.dim(1);
  const Window wy = window(h, kh, p.padding, "depthwise_conv");
  const Window wx = window(w, kw, p.padding, "depthwise_conv");
  const Extent oh = wy.out, ow = wx.out;
  Tensor<T> out({n, oh, ow, c});
  const T* px = x.raw();
  const T* pw = p.weights.raw();
  T* po = out.raw();
  const bool has_bias = !p.bias.empty();

  parallel_for(0, static_cast<std::size_t>(n * oh), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t row = lo; row < hi; ++row) {
      const Extent b = static_cast<Extent>(row) / oh, oy = static_cast<Extent>(row) % oh;
      for (Extent ox = 0; ox < ow; ++ox) {
        T* dst = po + ((b * oh + oy) * ow + ox) * c;
        if (has_bias) std::copy(p.bias.raw(), p.bias.raw() + c, dst);
        for (Extent ky = 0; ky < kh; ++ky) {
          const Extent iy = oy + ky - wy.before;
          if (iy < 0 || iy >= h) continue;
          for (Extent kx = 0; kx < kw; ++kx) {
            const Extent ix = ox + kx - wx.before;
            if (ix < 0 || ix >= w) continue;
            const T* src = px + ((b * h + iy) * w + ix) * c;
            const T* wk = pw + (ky * kw + kx) * c;
            for (Extent ch = 0; ch < c; ++ch) dst[ch] += src[ch] * wk[ch];
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
GradBundle<T> depthwise_conv_backward(const Tensor<T>& x, const DepthwiseParams<T>& p,
                                      const Tensor<T>& upstream) {
  p.validate();
  const auto [n, h, w, c] = geometry4(x, "depthwise_conv");
  if (c != p.channels()) throw ShapeError("depthwise_conv: channel mismatch");
  const Extent kh = p.weights.dim(0), kw = p.weights.dim(1);
  const Window wy = window(h, kh, p.padding, "depthwise_conv");
  const Window wx = window(w, kw, p.padding, "depthwise_conv");
  const Extent oh = wy.out, ow = wx.out;
  require_upstream(upstream, {n, oh, ow, c}, "depthwise_conv");

  GradBundle<T> g;
  g.d_input = Tensor<T>(x.shape());
  Tensor<T> dw(p.weights.shape());
  const T* px = x.raw();
  const T* pw = p.weights.raw();
  const T* pu = upstream.raw();
  T* pdx = g.d_input.raw();

  parallel_for(0, static_cast<std::size_t>(n * h), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t row = lo; row < hi; ++row) {
      const Extent b = static_cast<Extent>(row) / h, iy = static_cast<Extent>(row) % h;
      for (Extent ix = 0; ix < w; ++ix) {
        T* dst = pdx + ((b * h + iy) * w + ix) * c;
        for (Extent ky = 0; ky < kh; ++ky) {
          const Extent oy = iy - ky + wy.before;
          if (oy < 0 || oy >= oh) continue;
          for (Extent kx = 0; kx < kw; ++kx) {
            const Extent ox = ix - kx + wx.before;
            if (ox < 0 || ox >= ow) continue;
            const T* grad = pu + ((b * oh + oy) * ow + ox) * c;
            const T* wk = pw + (ky * kw + kx) * c;
            for (Extent ch = 0; ch < c; ++ch) dst[ch] += grad[ch] * wk[ch];
          }
        }
      }
    }
  });

  T* pdw = dw.raw();
  parallel_for(0, static_cast<std::size_t>(kh * kw), [&](std::size_t lo, std::size_t hi) {
    for (Extent b = 0; b < n; ++b)
      for (Extent oy = 0; oy < oh; ++oy)
        for (Extent ox = 0; ox < ow; ++ox) {
          const T* grad = pu + ((b * oh + oy) * ow + ox) * c;
          for (std::size_t k = lo; k < hi; ++k) {
            const Extent iy = oy + static_cast<Extent>(k) / kw - wy.before;
            const Extent ix = ox + static_cast<Extent>(k) % kw - wx.before;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            const T* src = px + ((b * h + iy) * w + ix) * c;
            T* dst = pdw + k * c;
            for (Extent ch = 0; ch < c; ++ch) dst[ch] += src[ch] * grad[ch];
          }
        }
  });
  g.d_params.push_back(std::move(dw));

  if (!p.bias.empty()) {
    Tensor<T> db({c});
    for (std::size_t i = 0; i < static_cast<std::size_t>(n * oh * ow); ++i) axpy(T(1), pu + i * c, db.raw(), c);
    g.d_params.push_back(std::move(db));
  }
  return g;
}

// ---- separable ------------------------------------------------------------

namespace {
template <typename T>
void check_separable(const DepthwiseParams<T>& dw, const ConvParams<T>& pw) {
  pw.validate();
  if (pw.kernel_h() != 1 || pw.kernel_w() != 1) throw ShapeError("separable_conv: pointwise kernel must be 1x1");
  if (pw.in_channels() != dw.channels())
    throw ShapeError("separable_conv: pointwise in_ch must equal depthwise channel count");
}
}  // namespace

template <typename T>
Tensor<T> separable_conv_forward(const Tensor<T>& x, const DepthwiseParams<T>& dw, const ConvParams<T>& pw) {
  check_separable(dw, pw);
  return conv2d_forward(depthwise_conv_forward(x, dw), pw);
}

template <typename T>
GradBundle<T> separable_conv_backward(const Tensor<T>& x, const DepthwiseParams<T>& dw, const ConvParams<T>& pw,
                                      const Tensor<T>& upstream) {
  check_separable(dw, pw);
  const Tensor<T> mid = depthwise_conv_forward(x, dw);
  GradBundle<T> gp = conv2d_backward(mid, pw, upstream);
  GradBundle<T> gd = depthwise_conv_backward(x, dw, gp.d_input);
  GradBundle<T> g;
  g.d_input = std::move(gd.d_input);
  for (auto& t : gd.d_params) g.d_params.push_back(std::move(t));
  for (auto& t : gp.d_params) g.d_params.push_back(std::move(t));
  return g;
}

// ---- pooling --------------------------------------------------------------

template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x) {
  const auto [n, h, w, c] = geometry4(x, "maxpool2");
  if (h < 2 || w < 2) throw ShapeError("maxpool2: spatial extent must be >= 2, got " + shape_str(x.shape()));
  const Extent oh = h / 2, ow = w / 2;
  Tensor<T> out({n, oh, ow, c});
  const T* px = x.raw();
  T* po = out.raw();
  for (Extent b = 0; b < n; ++b)
    for (Extent oy = 0; oy < oh; ++oy)
      for (Extent ox = 0; ox < ow; ++ox) {
        const T* a = px + ((b * h + 2 * oy) * w + 2 * ox) * c;
        const T* bb = a + c;
        const T* cc = a + w * c;
        const T* d = cc + c;
        T* dst = po + ((b * oh + oy) * ow + ox) * c;
        for (Extent ch = 0; ch < c; ++ch) dst[ch] = std::max(std::max(a[ch], bb[ch]), std::max(cc[ch], d[ch]));
      }
  return out;
}

template <typename T>
GradBundle<T> maxpool2_backward(const Tensor<T>& x, const Tensor<T>& upstream) {
  const auto [n, h, w, c] = geometry4(x, "maxpool2");
  if (h < 2 || w < 2) throw ShapeError("maxpool2: spatial extent must be >= 2");
  const Extent oh = h / 2, ow = w / 2;
  require_upstream(upstream, {n, oh, ow, c}, "maxpool2");
  GradBundle<T> g;
  g.d_input = Tensor<T>(x.shape());
  const T* px = x.raw();
  const T* pu = upstream.raw();
  T* pdx = g.d_input.raw();
  for (Extent b = 0; b < n; ++b)
    for (Extent oy = 0; oy < oh; ++oy)
      for (Extent ox = 0; ox < ow; ++ox) {
        const std::size_t base = static_cast<std::size_t>(((b * h + 2 * oy) * w + 2 * ox) * c);
        const std::size_t offs[4] = {0, static_cast<std::size_t>(c), static_cast<std::size_t>(w * c),
                                     static_cast<std::size_t>((w + 1) * c)};
        const T* grad = pu + ((b * oh + oy) * ow + ox) * c;
        for (Extent ch = 0; ch < c; ++ch) {
          std::size_t best = base + offs[0] + ch;
          for (int k = 1; k < 4; ++k) {
            const std::size_t cand = base + offs[k] + ch;
            if (px[cand] > px[best]) best = cand;
          }
          pdx[best] += grad[ch];
        }
      }
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] <= T(0) ? T(0) : x[i];  // NaN passes through
  return out;
}

template <typename T>
GradBundle<T> relu_backward(const Tensor<T>& x, const Tensor<T>& upstream) {
  require_upstream(upstream, x.shape(), "relu");
  return {elementwise(ElementwiseOp::relu_mask, upstream, x), {}};
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  const auto [n, h, w, c] = geometry4(x, "global_avg_pool");
  Tensor<T> out({n, 1, 1, c});
  const T inv = T(1) / static_cast<T>(h * w);
  for (Extent b = 0; b < n; ++b) {
    T* dst = out.raw() + b * c;
    for (Extent i = 0; i < h * w; ++i) axpy(T(1), x.raw() + (b * h * w + i) * c, dst, c);
    for (Extent ch = 0; ch < c; ++ch) dst[ch] *= inv;
  }
  return out;
}

template <typename T>
GradBundle<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& upstream) {
  if (input_shape.size() != 4) throw ShapeError("global_avg_pool: expected 4-D input shape");
  const Extent n = input_shape[0], h = input_shape[1], w = input_shape[2], c = input_shape[3];
  require_upstream(upstream, {n, 1, 1, c}, "global_avg_pool");
  GradBundle<T> g;
  g.d_input = Tensor<T>(input_shape);
  const T inv = T(1) / static_cast<T>(h * w);
  for (Extent b = 0; b < n; ++b)
    for (Extent i = 0; i < h * w; ++i) {
      T* dst = g.d_input.raw() + (b * h * w + i) * c;
      const T* src = upstream.raw() + b * c;
      for (Extent ch = 0; ch < c; ++ch) dst[ch] = src[ch] * inv;
    }
  return g;
}

// ---- batch norm -----------------------------------------------------------

template <typename T>
Tensor<T> batch_norm_forward(const Tensor<T>& x, BatchNormParams<T>& p, Phase phase, BatchNormCache<T>* cache) {
  p.validate();
  if (x.empty()) throw ArgumentError("batch_norm: empty batch");
  const Extent c = x.dim(x.rank() - 1);
  if (c != p.channels()) throw ShapeError("batch_norm: channel count does not match parameters");
  const std::size_t count = x.size() / static_cast<std::size_t>(c);
  std::vector<T> mean(c, T(0)), inv_std(c, T(0));

  if (phase == Phase::train) {
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      const T* row = x.raw() + i * c;
      for (Extent ch = 0; ch < c; ++ch) sum[ch] += row[ch];
    }
    for (Extent ch = 0; ch < c; ++ch) mean[ch] = static_cast<T>(sum[ch] / static_cast<double>(count));
    for (std::size_t i = 0; i < count; ++i) {
      const T* row = x.raw() + i * c;
      for (Extent ch = 0; ch < c; ++ch) {
        const double d = static_cast<double>(row[ch]) - static_cast<double>(mean[ch]);
        sq[ch] += d * d;
      }
    }
    const T m = static_cast<T>(p.momentum);
    for (Extent ch = 0; ch < c; ++ch) {
      const double var = sq[ch] / static_cast<double>(count);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + p.epsilon));
      p.running_mean[ch] = m * p.running_mean[ch] + (T(1) - m) * mean[ch];
      p.running_var[ch] = m * p.running_var[ch] + (T(1) - m) * static_cast<T>(var);
    }
  } else {
    for (Extent ch = 0; ch < c; ++ch) {
      mean[ch] = p.running_mean[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(p.running_var[ch]) + p.epsilon));
    }
  }

  std::vector<T> a(c), bshift(c);
  for (Extent ch = 0; ch < c; ++ch) {
    a[ch] = p.scale[ch] * inv_std[ch];
    bshift[ch] = p.shift[ch] - mean[ch] * a[ch];
  }
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < count; ++i) {
    const T* src = x.raw() + i * c;
    T* dst = out.raw() + i * c;
    for (Extent ch = 0; ch < c; ++ch) dst[ch] = src[ch] * a[ch] + bshift[ch];
  }
  if (cache) {
    cache->phase = phase;
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
GradBundle<T> batch_norm_backward(const Tensor<T>& x, const BatchNormParams<T>& p, const BatchNormCache<T>& cache,
                                  const Tensor<T>& upstream) {
  require_upstream(upstream, x.shape(), "batch_norm");
  const Extent c = x.dim(x.rank() - 1);
  if (c != p.channels() || cache.mean.size() != static_cast<std::size_t>(c))
    throw ShapeError("batch_norm: cache does not match input");
  const std::size_t count = x.size() / static_cast<std::size_t>(c);

  std::vector<T> sum_dy(c, T(0)), sum_dy_xhat(c, T(0));
  for (std::size_t i = 0; i < count; ++i) {
    const T* xs = x.raw() + i * c;
    const T* dy = upstream.raw() + i * c;
    for (Extent ch = 0; ch < c; ++ch) {
      sum_dy[ch] += dy[ch];
      sum_dy_xhat[ch] += dy[ch] * (xs[ch] - cache.mean[ch]) * cache.inv_std[ch];
    }
  }

  GradBundle<T> g;
  g.d_input = Tensor<T>(x.shape());
  if (cache.phase == Phase::train) {
    const T inv_n = T(1) / static_cast<T>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const T* xs = x.raw() + i * c;
      const T* dy = upstream.raw() + i * c;
      T* dx = g.d_input.raw() + i * c;
      for (Extent ch = 0; ch < c; ++ch) {
        const T xhat = (xs[ch] - cache.mean[ch]) * cache.inv_std[ch];
        dx[ch] = p.scale[ch] * cache.inv_std[ch] * (dy[ch] - inv_n * sum_dy[ch] - xhat * inv_n * sum_dy_xhat[ch]);
      }
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const T* dy = upstream.raw() + i * c;
      T* dx = g.d_input.raw() + i * c;
      for (Extent ch = 0; ch < c; ++ch) dx[ch] = dy[ch] * p.scale[ch] * cache.inv_std[ch];
    }
  }
  g.d_params.emplace_back(Shape{c}, std::move(sum_dy_xhat));
  g.d_params.emplace_back(Shape{c}, std::move(sum_dy));
  return g;
}

// ---- dense ----------------------------------------------------------------

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (x.rank() != 2 || weights.rank() != 2 || bias.rank() != 1)
    throw ShapeError("dense: expected x (batch, in), weights (in, out), bias (out)");
  const Extent n = x.dim(0), in = x.dim(1), out_f = weights.dim(1);
  if (weights.dim(0) != in || bias.dim(0) != out_f)
    throw ShapeError("dense: feature extent " + std::to_string(in) + " does not match weights " +
                     shape_str(weights.shape()));
  Tensor<T> out({n, out_f});
  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t b = lo; b < hi; ++b) {
      T* dst = out.raw() + b * out_f;
      std::copy(bias.raw(), bias.raw() + out_f, dst);
      const T* src = x.raw() + b * in;
      for (Extent i = 0; i < in; ++i) axpy(src[i], weights.raw() + i * out_f, dst, out_f);
    }
  });
  return out;
}

template <typename T>
GradBundle<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& upstream) {
  if (x.rank() != 2 || weights.rank() != 2 || weights.dim(0) != x.dim(1)) throw ShapeError("dense: shape mismatch");
  const Extent n = x.dim(0), in = x.dim(1), out_f = weights.dim(1);
  require_upstream(upstream, {n, out_f}, "dense");
  GradBundle<T> g;
  g.d_input = Tensor<T>(x.shape());
  Tensor<T> dw(weights.shape());
  Tensor<T> db({out_f});
  for (Extent b = 0; b < n; ++b) {
    const T* grad = upstream.raw() + b * out_f;
    T* dx = g.d_input.raw() + b * in;
    for (Extent i = 0; i < in; ++i) dx[i] = dot(weights.raw() + i * out_f, grad, out_f);
    axpy(T(1), grad, db.raw(), out_f);
  }
  parallel_for(0, static_cast<std::size_t>(in), [&](std::size_t lo, std::size_t hi) {
    for (Extent b = 0; b < n; ++b) {
      const T* grad = upstream.raw() + b * out_f;
      const T* src = x.raw() + b * in;
      for (std::size_t i = lo; i < hi; ++i) axpy(src[i], grad, dw.raw() + i * out_f, out_f);
    }
  });
  g.d_params.push_back(std::move(dw));
  g.d_params.push_back(std::move(db));
  return g;
}

// ---- dropout --------------------------------------------------------------

template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& x, double rate, Phase phase, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout: rate must be in [0, 1)");
  DropoutResult<T> r{x, Tensor<T>(x.shape(), T(1))};
  if (phase == Phase::infer || rate == 0.0) return r;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = rng.uniform() < rate ? T(0) : keep_scale;
    r.mask[i] = m;
    r.output[i] = x[i] * m;
  }
  return r;
}

template <typename T>
GradBundle<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& upstream) {
  require_upstream(upstream, mask.shape(), "dropout");
  return {elementwise(ElementwiseOp::mul, upstream, mask), {}};
}

// ---- softmax / cross entropy ---------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: expected (batch, classes)");
  const Extent n = logits.dim(0), k = logits.dim(1);
  Tensor<T> probs(logits.shape());
  for (Extent b = 0; b < n; ++b) {
    const T* z = logits.raw() + b * k;
    T* p = probs.raw() + b * k;
    const T zmax = *std::max_element(z, z + k);
    T total = 0;
    for (Extent j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - zmax);
      total += p[j];
    }
    for (Extent j = 0; j < k; ++j) p[j] /= total;
  }
  return probs;
}

template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels) {
  if (logits.rank() != 2 || labels.rank() != 2 || logits.dim(0) != labels.dim(0))
    throw ShapeError("softmax_cross_entropy: expected matching (batch, classes) tensors");
  if (logits.dim(1) != labels.dim(1))
    throw ShapeError("softmax_cross_entropy: logits have " + std::to_string(logits.dim(1)) +
                     " classes, labels have " + std::to_string(labels.dim(1)));
  const Extent n = logits.dim(0), k = logits.dim(1);
  for (Extent b = 0; b < n; ++b) {
    T row = 0;
    for (Extent j = 0; j < k; ++j) row += labels.raw()[b * k + j];
    if (std::abs(static_cast<double>(row) - 1.0) > 1e-6)
      throw ArgumentError("softmax_cross_entropy: label rows must sum to 1");
  }
  SoftmaxLoss<T> r{T(0), softmax(logits)};
  double loss = 0.0;
  for (Extent b = 0; b < n; ++b) {
    const T* z = logits.raw() + b * k;
    const T* y = labels.raw() + b * k;
    const T zmax = *std::max_element(z, z + k);
    double lse = 0.0;
    for (Extent j = 0; j < k; ++j) lse += std::exp(static_cast<double>(z[j] - zmax));
    lse = std::log(lse) + static_cast<double>(zmax);
    for (Extent j = 0; j < k; ++j)
      if (y[j] != T(0)) loss -= static_cast<double>(y[j]) * (static_cast<double>(z[j]) - lse);
  }
  r.loss = static_cast<T>(loss / static_cast<double>(n));
  return r;
}

template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, const Tensor<T>& labels) {
  if (probs.shape() != labels.shape()) throw ShapeError("softmax_cross_entropy: shape mismatch");
  Tensor<T> d = elementwise(ElementwiseOp::add, probs, scale(labels, T(-1)));
  return scale(d, T(1) / static_cast<T>(probs.dim(0)));
}

// ---- residual -------------------------------------------------------------

namespace {
template <typename T>
void check_residual(const Tensor<T>& block_in, const Tensor<T>& block_out, const ConvParams<T>* proj) {
  geometry4(block_in, "residual_merge");
  geometry4(block_out, "residual_merge");
  if (block_in.dim(0) != block_out.dim(0) || block_in.dim(1) != block_out.dim(1) ||
      block_in.dim(2) != block_out.dim(2))
    throw ShapeError("residual_merge: spatial extents differ " + shape_str(block_in.shape()) + " vs " +
                     shape_str(block_out.shape()));
  if (proj) {
    if (proj->kernel_h() != 1 || proj->kernel_w() != 1) throw ShapeError("residual_merge: projection must be 1x1");
    if (proj->out_channels() != block_out.dim(3))
      throw ShapeError("residual_merge: projection out_ch does not match block output");
  } else if (block_in.dim(3) != block_out.dim(3)) {
    throw ShapeError("residual_merge: channel counts differ and no projection given");
  }
}
}  // namespace

template <typename T>
Tensor<T> residual_merge_forward(const Tensor<T>& block_in, const Tensor<T>& block_out, const ConvParams<T>* proj) {
  check_residual(block_in, block_out, proj);
  if (proj) return add(block_out, conv2d_forward(block_in, *proj));
  return add(block_out, block_in);
}

template <typename T>
ResidualGrads<T> residual_merge_backward(const Tensor<T>& block_in, const Tensor<T>& block_out,
                                         const ConvParams<T>* proj, const Tensor<T>& upstream) {
  check_residual(block_in, block_out, proj);
  require_upstream(upstream, block_out.shape(), "residual_merge");
  ResidualGrads<T> g;
  g.d_block_out = upstream;
  if (proj) {
    GradBundle<T> pg = conv2d_backward(block_in, *proj, upstream);
    g.d_block_in = std::move(pg.d_input);
    g.d_proj = std::move(pg.d_params);
  } else {
    g.d_block_in = upstream;
  }
  return g;
}

// ---- instantiations -------------------------------------------------------

#define ERNET_INSTANTIATE_OPS(T)                                                                          \
  template struct ConvParams<T>;                                                                          \
  template struct DepthwiseParams<T>;                                                                     \
  template struct BatchNormParams<T>;                                                                     \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const ConvParams<T>&);                              \
  template GradBundle<T> conv2d_backward(const Tensor<T>&, const ConvParams<T>&, const Tensor<T>&);       \
  template Tensor<T> depthwise_conv_forward(const Tensor<T>&, const DepthwiseParams<T>&);                 \
  template GradBundle<T> depthwise_conv_backward(const Tensor<T>&, const DepthwiseParams<T>&,             \
                                                 const Tensor<T>&);                                       \
  template Tensor<T> separable_conv_forward(const Tensor<T>&, const DepthwiseParams<T>&,                  \
                                            const ConvParams<T>&);                                        \
  template GradBundle<T> separable_conv_backward(const Tensor<T>&, const DepthwiseParams<T>&,             \
                                                 const ConvParams<T>&, const Tensor<T>&);                 \
  template Tensor<T> maxpool2_forward(const Tensor<T>&);                                                  \
  template GradBundle<T> maxpool2_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                      \
  template GradBundle<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> global_avg_pool_forward(const Tensor<T>&);                                           \
  template GradBundle<T> global_avg_pool_backward(const Shape&, const Tensor<T>&);                        \
  template Tensor<T> batch_norm_forward(const Tensor<T>&, BatchNormParams<T>&, Phase, BatchNormCache<T>*); \
  template GradBundle<T> batch_norm_backward(const Tensor<T>&, const BatchNormParams<T>&,                 \
                                             const BatchNormCache<T>&, const Tensor<T>&);                 \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template GradBundle<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template DropoutResult<T> dropout_forward(const Tensor<T>&, double, Phase, Rng&);                       \
  template GradBundle<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> softmax(const Tensor<T>&);                                                           \
  template SoftmaxLoss<T> softmax_cross_entropy(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> softmax_cross_entropy_backward(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> residual_merge_forward(const Tensor<T>&, const Tensor<T>&, const ConvParams<T>*);    \
  template ResidualGrads<T> residual_merge_backward(const Tensor<T>&, const Tensor<T>&,                   \
                                                    const ConvParams<T>*, const Tensor<T>&);

ERNET_INSTANTIATE_OPS(float)
ERNET_INSTANTIATE_OPS(double)

#undef ERNET_INSTANTIATE_OPS

}  // namespace ernet
