#include <gtest/gtest.h>

#include <cmath>

#include "ernet/augment.hpp"
#include "ernet/dataset.hpp"

using namespace ernet;

namespace {

Image random_image(Extent h, Extent w, Rng& rng) {
  Image img = make_image(h, w);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace

TEST(Augment, DisabledConfigIsIdentity) {
  Rng rng(1);
  const Image img = random_image(12, 10, rng);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(augment_image(img, AugmentConfig::none(), rng), img);
}

TEST(Augment, MirrorMovesPixel) {
  Image img = make_image(6, 9);
  for (int c = 0; c < 3; ++c) img.at(2, 1, c) = 1.0f;
  const Image m = mirror_horizontal(img);
  EXPECT_EQ(m.at(2, 9 - 1 - 1, 0), 1.0f);
  EXPECT_FLOAT_EQ(m.sum(), 3.0f);
  EXPECT_EQ(mirror_horizontal(m), img);
}

TEST(Augment, BrightnessClamps) {
  const Image out = adjust_brightness(make_image(4, 4, 0.9f), 0.2);
  for (float v : out.data()) EXPECT_EQ(v, 1.0f);
}

TEST(Augment, NeutralMagnitudesAreIdentity) {
  Rng rng(2);
  const Image img = random_image(10, 12, rng);
  auto close = [&img](const Image& o) {
    ASSERT_EQ(o.shape(), img.shape());
    for (std::size_t i = 0; i < o.size(); ++i) ASSERT_NEAR(o[i], img[i], 1e-5);
  };
  close(rotate_image(img, 0.0));
  close(translate_image(img, 0.0, 0.0));
  close(zoom_image(img, 1.0));
  close(adjust_brightness(img, 0.0));
  close(shift_color(img, 0.0, 0.0, 0.0));
  close(sharpen_image(img, 0.0));
  close(shadow_half_plane(img, 5, 5, 0.3, 1.0));
  const Image flat = make_image(6, 6, 0.4f);
  const Image blurred = box_blur3(flat);
  for (float v : blurred.data()) EXPECT_NEAR(v, 0.4f, 1e-6);
}

TEST(Augment, ShapeAndRangePreserved) {
  Rng rng(3);
  for (int t = 0; t < kTransformCount; ++t) {
    const auto tr = static_cast<Transform>(t);
    SCOPED_TRACE(transform_name(tr));
    const auto def = AugmentConfig{}[tr];
    const auto cfg = AugmentConfig::only(tr, def.lo - (def.hi - def.lo), def.hi + (def.hi - def.lo));
    for (int i = 0; i < 10; ++i) {
      const Image img = random_image(11, 14, rng);
      const auto r = augment_image_traced(img, cfg, rng);
      EXPECT_EQ(r.applied, 1u << t);
      EXPECT_EQ(r.image.shape(), img.shape());
      for (float v : r.image.data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    }
  }
  const auto all = AugmentConfig::with_probability(0.6);
  for (int i = 0; i < 50; ++i) {
    const auto out = augment_image(random_image(16, 16, rng), all, rng);
    EXPECT_EQ(out.shape(), (Shape{16, 16, 3}));
    for (float v : out.data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Augment, UntouchedFractionMatchesIndependence) {
  Rng rng(4);
  const Image img = random_image(4, 4, rng);
  const double p = 0.3;
  const auto cfg = AugmentConfig::with_probability(p);
  const int n = 10000;
  int untouched = 0;
  for (int i = 0; i < n; ++i) untouched += augment_image_traced(img, cfg, rng).applied == 0;
  const double q = std::pow(1 - p, kTransformCount);
  EXPECT_LT(std::abs(untouched / double(n) - q), 3 * std::sqrt(q * (1 - q) / n));
}

TEST(Augment, DeterministicGivenRng) {
  Rng src(5);
  const Image img = random_image(20, 20, src);
  Rng a(6), b(6);
  const auto cfg = AugmentConfig::with_probability(0.5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(augment_image(img, cfg, a), augment_image(img, cfg, b));
}

TEST(Augment, Validation) {
  AugmentConfig{}.validate();
  EXPECT_THROW(AugmentConfig::with_probability(1.2).validate(), ArgumentError);
  EXPECT_THROW(AugmentConfig::with_probability(1.0).validate(), ArgumentError);
  auto bad = AugmentConfig{};
  bad[Transform::rotation].lo = 5, bad[Transform::rotation].hi = -5;
  EXPECT_THROW(bad.validate(), ArgumentError);
}
