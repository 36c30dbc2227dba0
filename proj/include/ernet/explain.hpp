#pragma once

#include <array>
#include <optional>
#include <vector>

#include "ernet/image.hpp"
#include "ernet/model.hpp"

namespace ernet {

struct CamResult {
  Tensor<double> heatmap;    // (h_f, w_f) in [0, 1]
  Tensor<double> upsampled;  // (h, w) in [0, 1]
  std::vector<double> channel_weights;
  int target_class = 0;
  int predicted_class = 0;
};

/// Rectified, max-normalised Grad-CAM map from a (1, h, w, C) activation and
/// its gradient: channel weight = spatial mean of the gradient, map =
/// relu(sum_c weight_c · A_c) / max. An all-zero map stays zero.
template <typename T>
CamResult cam_from_activations(const Tensor<T>& activations, const Tensor<T>& gradients);

/// Grad-CAM over the graph's final convolutional feature map. The target
/// defaults to the predicted class. `image` is (h, w, 3) or (1, h, w, 3)
/// at the model input size.
template <typename T>
CamResult grad_cam(const ModelGraph<T>& g, const Tensor<T>& image, std::optional<int> target = std::nullopt);

/// Fixed blue-to-red ramp (jet); v is clamped to [0, 1].
std::array<float, 3> heat_color(double v);

/// Alpha-blends the colour-mapped heatmap onto the image:
/// out = (1 − alpha)·image + alpha·ramp(heat). The heatmap is resampled when
/// its size differs from the image.
Image render_overlay(const Image& image, const CamResult& cam, double alpha);

}  // namespace ernet
