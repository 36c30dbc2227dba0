#include "ernet/explain.hpp"

#include <algorithm>
#include <cmath>

namespace ernet {

template <typename T>
CamResult cam_from_activations(const Tensor<T>& activations, const Tensor<T>& gradients) {
  if (activations.rank() != 4 || activations.dim(0) != 1) throw ShapeError("grad-cam expects a (1, h, w, C) feature map");
  if (gradients.shape() != activations.shape()) throw ShapeError("grad-cam gradient shape differs from activations");
  const Extent h = activations.dim(1), w = activations.dim(2), c = activations.dim(3);
  CamResult r;
  r.channel_weights.assign(static_cast<std::size_t>(c), 0.0);
  for (Extent i = 0; i < h * w; ++i)
    for (Extent ch = 0; ch < c; ++ch) r.channel_weights[ch] += static_cast<double>(gradients[i * c + ch]);
  for (auto& v : r.channel_weights) v /= static_cast<double>(h * w);

  r.heatmap = Tensor<double>({h, w}, 0.0);
  double peak = 0;
  for (Extent i = 0; i < h * w; ++i) {
    double acc = 0;
    for (Extent ch = 0; ch < c; ++ch) acc += r.channel_weights[ch] * static_cast<double>(activations[i * c + ch]);
    r.heatmap[i] = std::max(acc, 0.0);
    peak = std::max(peak, r.heatmap[i]);
  }
  if (peak > 0)
    for (auto& v : r.heatmap.data()) v /= peak;
  return r;
}

namespace {

// Corner-aligned bilinear upsampling so feature-grid points land on pixels
// whenever (out − 1) is a multiple of (in − 1).
Tensor<double> upsample(const Tensor<double>& map, Extent out_h, Extent out_w) {
  const Extent h = map.dim(0), w = map.dim(1);
  Tensor<double> out({out_h, out_w});
  auto src = [](Extent i, Extent in, Extent out_n) {
    return out_n == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out_n - 1);
  };
  for (Extent y = 0; y < out_h; ++y) {
    const double sy = src(y, h, out_h);
    const Extent y0 = std::min<Extent>(static_cast<Extent>(sy), h - 1), y1 = std::min<Extent>(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (Extent x = 0; x < out_w; ++x) {
      const double sx = src(x, w, out_w);
      const Extent x0 = std::min<Extent>(static_cast<Extent>(sx), w - 1), x1 = std::min<Extent>(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = map[y0 * w + x0] * (1 - fx) + map[y0 * w + x1] * fx;
      const double bot = map[y1 * w + x0] * (1 - fx) + map[y1 * w + x1] * fx;
      out[y * out_w + x] = std::clamp(top * (1 - fy) + bot * fy, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

template <typename T>
CamResult grad_cam(const ModelGraph<T>& g, const Tensor<T>& image, std::optional<int> target) {
  Tensor<T> x = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
  if (x.rank() != 4 || x.dim(0) != 1) throw ShapeError("grad_cam takes a single image");
  if (target && (*target < 0 || *target >= g.class_count))
    throw ArgumentError("grad_cam: target class " + std::to_string(*target) + " out of range");

  ForwardResult<T> fr = forward_infer(g, x);
  const Extent k = fr.logits.dim(1);
  const T* row = fr.logits.raw();
  const int predicted = static_cast<int>(std::max_element(row, row + k) - row);
  const int cls = target.value_or(predicted);

  Tensor<T> seed({1, k}, T(0));
  seed[static_cast<std::size_t>(cls)] = T(1);
  const Tensor<T> grad = input_gradient(g, fr.cache, seed, g.feature_layer);
  CamResult r = cam_from_activations(fr.cache.features(), grad);
  r.target_class = cls;
  r.predicted_class = predicted;
  r.upsampled = upsample(r.heatmap, x.dim(1), x.dim(2));
  return r;
}

std::array<float, 3> heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto ch = [v](double centre) { return static_cast<float>(std::clamp(1.5 - std::abs(4.0 * v - centre), 0.0, 1.0)); };
  return {ch(3.0), ch(2.0), ch(1.0)};
}

Image render_overlay(const Image& image, const CamResult& cam, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("overlay alpha must be in [0, 1]");
  if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("render_overlay expects an (h, w, 3) image");
  const Extent h = image.dim(0), w = image.dim(1);
  const Tensor<double>& src = cam.upsampled.empty() ? cam.heatmap : cam.upsampled;
  const Tensor<double> heat = (src.dim(0) == h && src.dim(1) == w) ? src : upsample(src, h, w);
  Image out(image.shape());
  const float a = static_cast<float>(alpha);
  for (Extent i = 0; i < h * w; ++i) {
    const auto col = heat_color(heat[i]);
    for (int c = 0; c < 3; ++c) out[i * 3 + c] = (1.0f - a) * image[i * 3 + c] + a * col[c];
  }
  return out;
}

template CamResult cam_from_activations(const Tensor<float>&, const Tensor<float>&);
template CamResult cam_from_activations(const Tensor<double>&, const Tensor<double>&);
template CamResult grad_cam(const ModelGraph<float>&, const Tensor<float>&, std::optional<int>);
template CamResult grad_cam(const ModelGraph<double>&, const Tensor<double>&, std::optional<int>);

}  // namespace ernet
