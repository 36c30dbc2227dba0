#include "ernet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ernet {

std::string transform_name(Transform t) {
  static const char* names[kTransformCount] = {"rotation", "translation", "mirror",  "crop-zoom", "brightness",
                                               "color-shift", "blur",      "sharpen", "shadow"};
  return names[static_cast<int>(t)];
}

AugmentConfig AugmentConfig::none() { return with_probability(0.0); }

AugmentConfig AugmentConfig::with_probability(double p) {
  AugmentConfig cfg;
  for (auto& t : cfg.transforms) t.probability = p;
  return cfg;
}

AugmentConfig AugmentConfig::only(Transform t, double lo, double hi) {
  AugmentConfig cfg = none();
  cfg[t] = {1.0, lo, hi};
  return cfg;
}

void AugmentConfig::validate() const {
  bool identity_possible = true;
  for (int i = 0; i < kTransformCount; ++i) {
    const auto& t = transforms[i];
    if (!(t.probability >= 0.0 && t.probability <= 1.0))
      throw ArgumentError("augment probability for " + transform_name(static_cast<Transform>(i)) + " not in [0,1]");
    if (t.lo > t.hi) throw ArgumentError("augment range for " + transform_name(static_cast<Transform>(i)) + " is empty");
    if (t.probability >= 1.0) identity_possible = false;
  }
  if (!identity_possible) throw ArgumentError("augment config never leaves an image untouched");
}

namespace {

void clamp01(Image& img) {
  for (auto& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
}

// Inverse-mapped bilinear resampling; coordinates outside the frame clamp
// to the border pixel.
template <typename Map>
Image resample(const Image& img, Map&& to_source) {
  const Extent h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Image out(img.shape());
  for (Extent y = 0; y < h; ++y)
    for (Extent x = 0; x < w; ++x) {
      auto [sx, sy] = to_source(static_cast<double>(x), static_cast<double>(y));
      sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const Extent x0 = static_cast<Extent>(std::floor(sx)), y0 = static_cast<Extent>(std::floor(sy));
      const Extent x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (Extent ch = 0; ch < c; ++ch) {
        const double top = img.at(y0, x0, ch) * (1 - fx) + img.at(y0, x1, ch) * fx;
        const double bot = img.at(y1, x0, ch) * (1 - fx) + img.at(y1, x1, ch) * fx;
        out.at(y, x, ch) = static_cast<float>(top * (1 - fy) + bot * fy);
      }
    }
  return out;
}

}  // namespace

Image mirror_horizontal(const Image& img) {
  const Extent h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Image out(img.shape());
  for (Extent y = 0; y < h; ++y)
    for (Extent x = 0; x < w; ++x)
      for (Extent ch = 0; ch < c; ++ch) out.at(y, w - 1 - x, ch) = img.at(y, x, ch);
  return out;
}

Image rotate_image(const Image& img, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = (static_cast<double>(img.dim(1)) - 1) / 2, cy = (static_cast<double>(img.dim(0)) - 1) / 2;
  return resample(img, [&](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return std::pair{cx + ca * dx + sa * dy, cy - sa * dx + ca * dy};
  });
}

Image translate_image(const Image& img, double dx_frac, double dy_frac) {
  const double dx = dx_frac * static_cast<double>(img.dim(1)), dy = dy_frac * static_cast<double>(img.dim(0));
  return resample(img, [&](double x, double y) { return std::pair{x - dx, y - dy}; });
}

Image zoom_image(const Image& img, double scale) {
  if (!(scale > 0)) throw ArgumentError("zoom scale must be positive");
  const double cx = (static_cast<double>(img.dim(1)) - 1) / 2, cy = (static_cast<double>(img.dim(0)) - 1) / 2;
  return resample(img, [&](double x, double y) { return std::pair{cx + (x - cx) / scale, cy + (y - cy) / scale}; });
}

Image adjust_brightness(const Image& img, double delta) {
  Image out = img;
  for (auto& v : out.data()) v += static_cast<float>(delta);
  clamp01(out);
  return out;
}

Image shift_color(const Image& img, double dr, double dg, double db) {
  Image out = img;
  const float d[3] = {static_cast<float>(dr), static_cast<float>(dg), static_cast<float>(db)};
  const Extent c = img.dim(2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i % static_cast<std::size_t>(c) % 3];
  clamp01(out);
  return out;
}

Image box_blur3(const Image& img) {
  const Extent h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Image out(img.shape());
  for (Extent y = 0; y < h; ++y)
    for (Extent x = 0; x < w; ++x)
      for (Extent ch = 0; ch < c; ++ch) {
        float acc = 0;
        for (Extent dy = -1; dy <= 1; ++dy)
          for (Extent dx = -1; dx <= 1; ++dx)
            acc += img.at(std::clamp<Extent>(y + dy, 0, h - 1), std::clamp<Extent>(x + dx, 0, w - 1), ch);
        out.at(y, x, ch) = acc / 9.0f;
      }
  return out;
}

Image sharpen_image(const Image& img, double amount) {
  const Image blurred = box_blur3(img);
  Image out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i)
    out[i] = img[i] + static_cast<float>(amount) * (img[i] - blurred[i]);
  clamp01(out);
  return out;
}

Image shadow_half_plane(const Image& img, double px, double py, double angle, double factor) {
  const Extent h = img.dim(0), w = img.dim(1), c = img.dim(2);
  const double ca = std::cos(angle), sa = std::sin(angle);
  Image out = img;
  for (Extent y = 0; y < h; ++y)
    for (Extent x = 0; x < w; ++x)
      if ((static_cast<double>(x) - px) * ca + (static_cast<double>(y) - py) * sa > 0)
        for (Extent ch = 0; ch < c; ++ch) out.at(y, x, ch) *= static_cast<float>(factor);
  return out;
}

AugmentResult augment_image_traced(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  if (img.rank() != 3) throw ShapeError("augment_image expects an (h, w, c) image");
  AugmentResult r{img, 0};
  for (int i = 0; i < kTransformCount; ++i) {
    const auto t = static_cast<Transform>(i);
    const TransformSpec& spec = cfg.transforms[i];
    if (spec.probability <= 0.0 || !rng.bernoulli(spec.probability)) continue;
    r.applied |= 1u << i;
    auto draw = [&] { return rng.uniform(spec.lo, spec.hi); };
    switch (t) {
      case Transform::rotation:
        r.image = rotate_image(r.image, draw());
        break;
      case Transform::translation: {
        const double dx = draw(), dy = draw();
        r.image = translate_image(r.image, dx, dy);
        break;
      }
      case Transform::mirror:
        r.image = mirror_horizontal(r.image);
        break;
      case Transform::crop_zoom:
        r.image = zoom_image(r.image, draw());
        break;
      case Transform::brightness:
        r.image = adjust_brightness(r.image, draw());
        break;
      case Transform::color_shift: {
        const double dr = draw(), dg = draw(), db = draw();
        r.image = shift_color(r.image, dr, dg, db);
        break;
      }
      case Transform::blur:
        r.image = box_blur3(r.image);
        break;
      case Transform::sharpen:
        r.image = sharpen_image(r.image, draw());
        break;
      case Transform::shadow: {
        const double px = rng.uniform(0.0, static_cast<double>(img.dim(1)));
        const double py = rng.uniform(0.0, static_cast<double>(img.dim(0)));
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        r.image = shadow_half_plane(r.image, px, py, angle, draw());
        break;
      }
    }
  }
  clamp01(r.image);
  return r;
}

}  // namespace ernet
