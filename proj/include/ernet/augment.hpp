#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "ernet/image.hpp"
#include "ernet/rng.hpp"

namespace ernet {

enum class Transform : int {
  rotation,     // degrees, about the image centre
  translation,  // fraction of width/height, per axis
  mirror,       // horizontal flip
  crop_zoom,    // scale factor about the centre (>1 zooms in)
  brightness,   // additive offset on all channels
  color_shift,  // additive offset drawn per channel
  blur,         // 3×3 box filter
  sharpen,      // unsharp mask amount
  shadow,       // multiplicative darkening of a random half-plane
};

inline constexpr int kTransformCount = 9;

std::string transform_name(Transform t);

struct TransformSpec {
  double probability = 0.3;
  double lo = 0.0;
  double hi = 0.0;
};

/// Each transform fires independently with its own probability; magnitudes
/// are drawn uniformly from [lo, hi].
struct AugmentConfig {
  std::array<TransformSpec, kTransformCount> transforms{{
      {0.3, -25.0, 25.0},  // rotation
      {0.3, -0.1, 0.1},    // translation
      {0.3, 0.0, 0.0},     // mirror
      {0.3, 0.8, 1.2},     // crop_zoom
      {0.3, -0.2, 0.2},    // brightness
      {0.3, -0.1, 0.1},    // color_shift
      {0.3, 0.0, 0.0},     // blur
      {0.3, 0.5, 0.5},     // sharpen
      {0.3, 0.6, 0.6},     // shadow
  }};

  TransformSpec& operator[](Transform t) { return transforms[static_cast<int>(t)]; }
  const TransformSpec& operator[](Transform t) const { return transforms[static_cast<int>(t)]; }

  /// All transforms disabled.
  static AugmentConfig none();
  /// Default magnitudes with one probability for every transform.
  static AugmentConfig with_probability(double p);
  /// Only `t` enabled, with probability 1 and magnitude range [lo, hi].
  static AugmentConfig only(Transform t, double lo = 0.0, double hi = 0.0);

  /// Probabilities in [0, 1] and a non-zero chance that nothing is applied.
  void validate() const;
};

struct AugmentResult {
  Image image;
  std::uint32_t applied = 0;  // bit i set when Transform i fired
};

AugmentResult augment_image_traced(const Image& img, const AugmentConfig& cfg, Rng& rng);

inline Image augment_image(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  return augment_image_traced(img, cfg, rng).image;
}

// Individual transforms, deterministic given their arguments.
Image mirror_horizontal(const Image& img);
Image rotate_image(const Image& img, double degrees);
Image translate_image(const Image& img, double dx_frac, double dy_frac);
Image zoom_image(const Image& img, double scale);
Image adjust_brightness(const Image& img, double delta);
Image shift_color(const Image& img, double dr, double dg, double db);
Image box_blur3(const Image& img);
Image sharpen_image(const Image& img, double amount);
/// Darkens pixels with (x − px)·cos(a) + (y − py)·sin(a) > 0 by `factor`.
Image shadow_half_plane(const Image& img, double px, double py, double angle, double factor);

}  // namespace ernet
