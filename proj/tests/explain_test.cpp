#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ernet/explain.hpp"
#include "testkit.hpp"

using namespace ernet;

namespace {

double max_of(const Tensor<double>& t) { return *std::max_element(t.data().begin(), t.data().end()); }

}  // namespace

TEST(GradCam, ZeroGradientGivesZeroMap) {
  Rng rng(1);
  const auto a = testkit::random_tensor({1, 4, 5, 6}, rng, 0, 2);
  const auto cam = cam_from_activations(a, Tensor<double>(a.shape(), 0.0));
  for (double v : cam.heatmap.data()) EXPECT_EQ(v, 0.0);
  for (double v : cam.channel_weights) EXPECT_EQ(v, 0.0);
}

TEST(GradCam, SingleChannelClosedForm) {
  Rng rng(2);
  const auto a = testkit::random_tensor({1, 3, 4, 1}, rng, -1, 1);
  const auto cam = cam_from_activations(a, Tensor<double>(a.shape(), 1.0));
  double peak = 0;
  for (double v : a.data()) peak = std::max(peak, v);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(cam.heatmap[i], std::max(a[i], 0.0) / peak, 1e-15);
}

TEST(GradCam, InvariantToGradientScale) {
  Rng rng(3);
  const auto a = testkit::random_tensor({1, 5, 5, 8}, rng, 0, 1);
  const auto d = testkit::random_tensor(a.shape(), rng);
  const auto base = cam_from_activations(a, d);
  const auto scaled = cam_from_activations(a, scale(d, 37.5));
  for (std::size_t i = 0; i < base.heatmap.size(); ++i) EXPECT_NEAR(base.heatmap[i], scaled.heatmap[i], 1e-12);
  const auto argmax = [](const Tensor<double>& t) { return std::max_element(t.data().begin(), t.data().end()) - t.data().begin(); };
  EXPECT_EQ(argmax(base.heatmap), argmax(scaled.heatmap));
}

TEST(GradCam, ModelHeatmapRangeAndGrid) {
  Rng rng(4);
  const auto g = build_model<double>(Variant::ernet, {97, 97, 3}, 4, rng);
  for (int t = 0; t < 3; ++t) {
    const auto img = testkit::random_tensor({97, 97, 3}, rng, 0, 1);
    for (int cls = 0; cls < 4; ++cls) {
      const auto cam = grad_cam(g, img, cls);
      EXPECT_EQ(cam.target_class, cls);
      ASSERT_EQ(cam.heatmap.shape(), (Shape{3, 3}));
      ASSERT_EQ(cam.upsampled.shape(), (Shape{97, 97}));
      for (double v : cam.heatmap.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
      for (double v : cam.upsampled.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
      const double peak = max_of(cam.heatmap);
      EXPECT_TRUE(peak == 0.0 || std::abs(peak - 1.0) < 1e-12);
      for (Extent y = 0; y < 3; ++y)
        for (Extent x = 0; x < 3; ++x) EXPECT_NEAR(cam.upsampled.at(48 * y, 48 * x), cam.heatmap.at(y, x), 1e-6);
    }
  }
  EXPECT_THROW(grad_cam(g, testkit::random_tensor({97, 97, 3}, rng), 4), ArgumentError);
}

TEST(GradCam, ChannelWeightsMatchFiniteDifference) {
  Rng rng(5);
  auto g = build_model<double>(Variant::ernet, {64, 64, 3}, 3, rng);
  const auto img = testkit::random_tensor({64, 64, 3}, rng, 0, 1);
  const auto cam = grad_cam(g, img, 1);
  const auto fr = forward_infer(g, img.reshaped({1, 64, 64, 3}));
  const Tensor<double>& a = fr.cache.features();
  const Extent hw = a.dim(1) * a.dim(2), c = a.dim(3);
  const double h = 1e-5;
  Rng unused(0);
  for (Extent k = 0; k < c; k += 7) {
    Tensor<double> up = a, down = a;
    for (Extent i = 0; i < hw; ++i) up[i * c + k] += h, down[i * c + k] -= h;
    const double lu = forward_from(g, g.feature_layer, up, Phase::infer, unused, false).logits[1];
    const double ld = forward_from(g, g.feature_layer, down, Phase::infer, unused, false).logits[1];
    const double fd = (lu - ld) / (2 * h) / static_cast<double>(hw);
    EXPECT_LT(testkit::rel_err(fd, cam.channel_weights[k], 1e-8), 1e-3) << "channel " << k;
  }
}

TEST(GradCam, DeadHeadGivesZeroMap) {
  Rng rng(6);
  auto g = build_model<double>(Variant::ernet, {64, 64, 3}, 3, rng);
  for (auto& l : g.layers)
    if (l.spec.name == "head.conv") l.conv.weights.fill(0.0);
  const auto cam = grad_cam(g, testkit::random_tensor({64, 64, 3}, rng, 0, 1));
  for (double v : cam.upsampled.data()) EXPECT_EQ(v, 0.0);
}

TEST(Overlay, BlendExtremes) {
  Rng rng(7);
  Image img = make_image(16, 12);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  CamResult cam;
  cam.heatmap = testkit::random_tensor({3, 3}, rng, 0, 1);
  const Image same = render_overlay(img, cam, 0.0);
  EXPECT_EQ(same.shape(), img.shape());
  EXPECT_EQ(image_to_bytes(same), image_to_bytes(img));

  CamResult zero;
  zero.heatmap = Tensor<double>({4, 4}, 0.0);
  const Image solid = render_overlay(img, zero, 1.0);
  for (Extent i = 0; i < 16 * 12; ++i) {
    EXPECT_EQ(solid[i * 3 + 0], 0.0f);
    EXPECT_EQ(solid[i * 3 + 1], 0.0f);
    EXPECT_EQ(solid[i * 3 + 2], 0.5f);
  }
  EXPECT_THROW(render_overlay(img, cam, 1.5), ArgumentError);
  const auto hot = heat_color(1.0);
  EXPECT_EQ(hot, (std::array<float, 3>{0.5f, 0.0f, 0.0f}));
}
