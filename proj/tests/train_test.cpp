#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "ernet/dataset.hpp"
#include "ernet/model_io.hpp"
#include "ernet/train.hpp"

using namespace ernet;
namespace fs = std::filesystem;

namespace {

struct SynthSplit {
  DatasetManifest manifest;
  LabeledImages val;
};

const SynthSplit& synth_split() {
  static const SynthSplit s = [] {
    const auto root = fs::temp_directory_path() / "ernet_train_test";
    fs::remove_all(root);
    Rng rng(21);
    synth_dataset(root, 3, 15, rng, {32});
    Rng split_rng(22);
    SynthSplit out{split_dataset(scan_dataset(root), {}, split_rng), {}};
    out.val = load_split(out.manifest, Split::val, 64, 64);
    return out;
  }();
  return s;
}

TrainConfig small_config(int epochs, int iters) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.iters_per_epoch = iters;
  cfg.batch_size = 9;
  return cfg;
}

class NanSource : public BatchSource {
 public:
  Batch next() override {
    Batch b;
    b.images = Tensor<float>({3, 64, 64, 3}, std::numeric_limits<float>::quiet_NaN());
    b.labels = Tensor<float>({3, 3}, 0.0f);
    for (int i = 0; i < 3; ++i) b.labels.at(i, i) = 1.0f, b.class_ids.push_back(i);
    emitted_ += 3;
    return b;
  }
  std::size_t images_emitted() const override { return emitted_; }

 private:
  std::size_t emitted_ = 0;
};

}  // namespace

TEST(Schedule, LearningRate) {
  const TrainConfig cfg;
  EXPECT_DOUBLE_EQ(lr_at(0, cfg), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(4, cfg), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(5, cfg), 0.00095);
  EXPECT_DOUBLE_EQ(lr_at(10, cfg), 0.0009025);
  for (int e = 1; e < 300; ++e) EXPECT_LE(lr_at(e, cfg), lr_at(e - 1, cfg));
  EXPECT_EQ(cfg.iters_per_epoch * cfg.batch_size, 6400);
  EXPECT_THROW(lr_at(-1, cfg), ArgumentError);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  Tensor<double> w({3}, std::vector<double>{1, -2, 3});
  const Tensor<double> before = w;
  std::vector<Tensor<double>*> params{&w};
  std::vector<Tensor<double>> grads{Tensor<double>({3}, 0.0)};
  AdamState<double> st = AdamState<double>::for_params(params);
  for (double lr : {0.001, 0.5, 10.0}) adam_step<double>(params, grads, st, lr);
  EXPECT_EQ(w, before);
  EXPECT_EQ(st.first_moment[0].sum(), 0.0);
  EXPECT_EQ(st.second_moment[0].sum(), 0.0);
}

TEST(Adam, FirstStepMagnitude) {
  Tensor<double> w({1}, 1.0), v({1}, 5.0);
  std::vector<Tensor<double>*> params{&w, &v};
  std::vector<Tensor<double>> grads{Tensor<double>({1}, 1.0), Tensor<double>({1}, 1.0)};
  AdamState<double> st;
  adam_step<double>(params, grads, st, 0.1);
  EXPECT_NEAR(w[0], 0.9, 1e-6);
  EXPECT_NEAR(1.0 - w[0], 5.0 - v[0], 1e-12);
  EXPECT_EQ(st.step, 1);
}

TEST(Train, SmokeHistory) {
  const auto& s = synth_split();
  Rng rng(1);
  auto g = build_model<float>(Variant::ernet, {64, 64, 3}, 3, rng);
  auto batches = balanced_batch_iter(s.manifest, 9, AugmentConfig{}, 64, 64, Rng(2));
  const auto h = train(g, batches, s.val, small_config(1, 2));
  ASSERT_EQ(h.epochs.size(), 1u);
  EXPECT_TRUE(std::isfinite(h.epochs[0].train_loss));
  EXPECT_EQ(h.epochs[0].images, 18u);
  EXPECT_GE(h.epochs[0].val_avg_acc, 0.0);
  EXPECT_EQ(h.best_epoch, 0);
  EXPECT_NE(history_table(h).find("best epoch 0"), std::string::npos);
}

TEST(Train, IdenticalSeedsGiveIdenticalParameters) {
  const auto& s = synth_split();
  std::vector<std::uint8_t> bytes[2];
  for (auto& out : bytes) {
    Rng rng(5);
    auto g = build_model<float>(Variant::scfcnet, {64, 64, 3}, 3, rng);
    auto batches = balanced_batch_iter(s.manifest, 9, AugmentConfig{}, 64, 64, Rng(6));
    train(g, batches, s.val, small_config(2, 2));
    out = serialize_model(g);
  }
  EXPECT_EQ(bytes[0], bytes[1]);
}

TEST(Train, LossDecreasesEarlyForMostSeeds) {
  const auto root = fs::temp_directory_path() / "ernet_train_test5";
  fs::remove_all(root);
  Rng data_rng(21);
  synth_dataset(root, 5, 20, data_rng, {48});
  Rng split_rng(22);
  const DatasetManifest m = split_dataset(scan_dataset(root), {}, split_rng);
  int decreasing = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    auto g = build_model<float>(Variant::ernet, {64, 64, 3}, 5, rng);
    auto batches = balanced_batch_iter(m, 10, AugmentConfig::none(), 64, 64, Rng(200 + seed));
    TrainConfig cfg = small_config(5, 6);
    cfg.batch_size = 10;
    cfg.seed = seed;
    const auto h = train(g, batches, LabeledImages{}, cfg);
    bool strictly = true;
    for (std::size_t e = 1; e < h.epochs.size(); ++e) strictly &= h.epochs[e].train_loss < h.epochs[e - 1].train_loss;
    decreasing += strictly;
  }
  EXPECT_GE(decreasing, 4);
}

TEST(Train, EarlyStopAndBestRestore) {
  const auto& s = synth_split();
  Rng rng(7);
  auto g = build_model<float>(Variant::ernet, {64, 64, 3}, 3, rng);
  auto batches = balanced_batch_iter(s.manifest, 9, AugmentConfig{}, 64, 64, Rng(8));
  TrainCallbacks cb;
  int seen = 0;
  cb.on_epoch = [&seen](const EpochRecord&) { ++seen; };
  cb.should_stop = [](const EpochRecord& e) { return e.epoch == 1; };
  const auto h = train(g, batches, s.val, small_config(5, 2), cb);
  EXPECT_EQ(h.epochs.size(), 2u);
  EXPECT_EQ(seen, 2);
  EXPECT_TRUE(h.stopped_early);
  EXPECT_DOUBLE_EQ(evaluate(g, s.val).avg_acc, h.best_val_avg_acc);
}

TEST(Train, DivergenceIsReported) {
  Rng rng(9);
  auto g = build_model<float>(Variant::ernet, {64, 64, 3}, 3, rng);
  NanSource src;
  try {
    train(g, src, LabeledImages{}, small_config(1, 1));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(train(g, src, LabeledImages{}, bad), ArgumentError);
}
