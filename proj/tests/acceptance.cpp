// Acceptance runner: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "ernet/cli.hpp"
#include "ernet/dataset.hpp"
#include "ernet/eval.hpp"
#include "ernet/explain.hpp"
#include "ernet/model_io.hpp"
#include "ernet/train.hpp"
#include "testkit.hpp"

using namespace ernet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Detail {
 public:
  template <typename V>
  Detail& operator<<(const V& v) {
    os_ << v;
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / "ernet_acceptance" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- 1 ---------------------------------------------------------------------

Outcome operator_correctness() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const int instances = 120;
  double worst[3] = {0, 0, 0};
  for (int i = 0; i < instances; ++i) {
    const Extent k = 1 + 2 * static_cast<Extent>(rng.below(3));
    const auto pad = rng.bernoulli(0.5) ? PaddingMode::same : PaddingMode::valid;
    const Extent lo = pad == PaddingMode::valid ? k : 1;
    const Extent h = lo + static_cast<Extent>(rng.below(static_cast<std::uint64_t>(9 - lo)));
    const Extent w = lo + static_cast<Extent>(rng.below(static_cast<std::uint64_t>(9 - lo)));
    const Extent ic = 1 + static_cast<Extent>(rng.below(4)), oc = 1 + static_cast<Extent>(rng.below(4));
    const auto x = testkit::random_tensor({1 + Extent(rng.below(2)), h, w, ic}, rng);
    const auto conv = testkit::random_conv(k, ic, oc, pad, rng);
    const auto dw = testkit::random_depthwise(k, ic, pad, rng.bernoulli(0.5), rng);
    const auto pw = testkit::random_conv(1, ic, oc, PaddingMode::same, rng);
    worst[0] = std::max(worst[0], testkit::max_rel_err(conv2d_forward(x, conv), testkit::naive_conv2d(x, conv)));
    worst[1] = std::max(worst[1], testkit::max_rel_err(depthwise_conv_forward(x, dw), testkit::naive_depthwise(x, dw)));
    worst[2] = std::max(worst[2],
                        testkit::max_rel_err(separable_conv_forward(x, dw, pw), testkit::naive_separable(x, dw, pw)));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst[0] < 1e-5 && worst[1] < 1e-5 && worst[2] < 1e-5 && secs < 60;
  o.detail = (Detail() << instances << " instances per op; max rel err conv2d " << worst[0] << ", depthwise "
                       << worst[1] << ", separable " << worst[2] << " (limit 1e-5); " << secs << " s (limit 60)")
                 .str();
  return o;
}

// ---- 2 ---------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  Rng rng(202);
  double op_worst = 0;
  std::string op_worst_name;
  const auto ops = testkit::operator_gradient_checks(rng, 40);
  for (const auto& s : ops)
    if (s.max_rel >= op_worst) op_worst = s.max_rel, op_worst_name = s.name;

  const auto model = testkit::model_gradient_checks(Variant::ernet, {64, 64, 3}, 5, 1e-4, 24, rng);
  std::map<std::string, std::size_t> per_layer;
  double model_worst = 0;
  std::string model_worst_name;
  std::size_t model_samples = 0, near_zero = 0, kinked = 0;
  for (const auto& s : model) {
    model_samples += s.samples;
    near_zero += s.below_floor;
    kinked += s.kinked;
    per_layer[s.name.substr(0, s.name.rfind('.'))] += s.samples;
    if (s.max_rel >= model_worst) model_worst = s.max_rel, model_worst_name = s.name;
  }
  std::size_t fewest = SIZE_MAX;
  for (const auto& [layer, n] : per_layer) fewest = std::min(fewest, n);
  const double secs = seconds_since(t0);

  Outcome o;
  o.pass = op_worst < 1e-4 && model_worst < 1e-4 && fewest >= 20 && secs < 300;
  o.detail = (Detail() << ops.size() << " operator checks, worst " << op_worst << " (" << op_worst_name << "); ERNet 64x64 "
                       << per_layer.size() << " layers, >= " << fewest << " samples each, worst " << model_worst << " ("
                       << model_worst_name << "), " << near_zero << " of " << model_samples
                       << " samples under the 1e-4 floor, " << kinked << " skipped at relu/maxpool switches; limit 1e-4; " << secs << " s (limit 300)")
                 .str();
  return o;
}

// ---- 3 ---------------------------------------------------------------------

Outcome architecture() {
  Outcome o;
  Detail d;
  Rng rng(303);
  std::map<Variant, std::size_t> payload;
  const auto x = testkit::random_tensor({1, 240, 240, 3}, rng, 0, 1).cast<float>();
  for (Variant v : {Variant::basenet, Variant::scnet, Variant::scfcnet, Variant::ernet}) {
    const auto g = build_model<float>(v, {240, 240, 3}, 5, rng);
    const bool trace_ok = spatial_trace(g) == std::vector<Extent>{240, 120, 60, 30, 15, 7};
    const bool logits_ok = predict_logits(g, x).shape() == Shape{1, 5};
    payload[v] = model_payload_bytes(g);
    o.pass &= trace_ok && logits_ok;
    d << variant_name(v) << " trace " << (trace_ok ? "ok" : "BAD") << ", logits " << (logits_ok ? "(1,5)" : "BAD")
      << ", payload " << payload[v] << " B; ";
  }
  const bool order = payload[Variant::scfcnet] <= payload[Variant::ernet] &&
                     payload[Variant::ernet] < payload[Variant::scnet] &&
                     payload[Variant::scnet] <= payload[Variant::basenet];
  const bool budgets = payload[Variant::ernet] <= 1500000 && payload[Variant::scnet] >= 4u * 1024 * 1024 &&
                       payload[Variant::basenet] >= 4u * 1024 * 1024;
  o.pass &= order && budgets;
  d << "ordering scfcnet<=ernet<scnet<=basenet " << (order ? "holds" : "VIOLATED") << ", budgets "
    << (budgets ? "met" : "MISSED");
  o.detail = d.str();
  return o;
}

// ---- 4 and 5 share one training run ----------------------------------------

struct DeskRun {
  TrainHistory history;
  EvalReport test;
  double seconds = 0;
};

const DeskRun& desk_run() {
  static const DeskRun run = [] {
    const auto t0 = Clock::now();
    const auto root = scratch("desk_data");
    Rng synth_rng(20190611);
    synth_dataset(root, 5, 100, synth_rng);
    Rng split_rng(505);
    const auto m = split_dataset(scan_dataset(root), {}, split_rng);

    const Shape input{64, 64, 3};
    TrainConfig cfg;  // default recipe: batch 64, 100 iterations, Adam 0.001 decayed 0.95 every 5 epochs
    cfg.epochs = 20;
    Rng init(cfg.seed);
    auto g = build_model<float>(Variant::ernet, input, 5, init);
    auto batches = balanced_batch_iter(m, static_cast<std::size_t>(cfg.batch_size), AugmentConfig{}, input[0],
                                       input[1], Rng(cfg.seed + 1));
    const auto val = load_split(m, Split::val, input[0], input[1]);
    TrainCallbacks cb;
    cb.on_epoch = [](const EpochRecord& e) {
      std::fprintf(stderr, "  desk-scale epoch %d: loss %.4f, val avg acc %.4f, %zu images\n", e.epoch,
                   e.train_loss, e.val_avg_acc, e.images);
    };
    cb.should_stop = [](const EpochRecord& e) { return e.val_avg_acc >= 0.99; };
    DeskRun r;
    r.history = train(g, batches, val, cfg, cb);
    r.test = evaluate(g, load_split(m, Split::test, input[0], input[1]));
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

LabeledImages imbalanced_pool(const std::vector<int>& counts) {
  LabeledImages p;
  p.class_count = counts.size();
  for (std::size_t k = 0; k < counts.size(); ++k)
    for (int i = 0; i < counts[k]; ++i) {
      p.images.push_back(make_image(8, 8, static_cast<float>(k) / 8.0f));
      p.labels.push_back(static_cast<int>(k));
    }
  return p;
}

Outcome training_recipe() {
  Outcome o;
  Detail d;
  const TrainConfig cfg;
  const double want[3] = {0.001, 0.00095, 0.0009025};
  bool lr_ok = true;
  for (int i = 0; i < 3; ++i) lr_ok &= std::abs(lr_at(5 * i, cfg) - want[i]) <= 1e-15;
  d << "lr_at(0,5,10) = " << lr_at(0, cfg) << ", " << lr_at(5, cfg) << ", " << lr_at(10, cfg)
    << (lr_ok ? "" : " MISMATCH") << "; ";

  const auto& run = desk_run();
  bool epoch_ok = !run.history.epochs.empty();
  for (const auto& e : run.history.epochs) epoch_ok &= e.images == 6400;
  d << "images per default epoch " << (run.history.epochs.empty() ? 0 : run.history.epochs[0].images) << " over "
    << run.history.epochs.size() << " epoch(s)" << (epoch_ok ? "" : " MISMATCH") << "; ";

  BalancedBatchIterator it(imbalanced_pool({320, 370, 320, 335, 1200}), 64, AugmentConfig::none(), 8, 8, Rng(404));
  bool counts_ok = true;
  for (int b = 0; b < 200; ++b) {
    const Batch batch = it.next();
    std::vector<std::size_t> c(5, 0);
    for (int id : batch.class_ids) ++c[static_cast<std::size_t>(id)];
    std::size_t total = 0;
    for (auto v : c) {
      counts_ok &= v == 12 || v == 13;
      total += v;
    }
    counts_ok &= total == 64;
  }
  d << "200 balanced batches of 64 over an AIDER-shaped pool: per-class counts in {12,13} "
    << (counts_ok ? "always" : "VIOLATED");
  o.pass = lr_ok && epoch_ok && counts_ok;
  o.detail = d.str();
  return o;
}

Outcome desk_learning() {
  const auto& run = desk_run();
  Outcome o;
  const int epochs = static_cast<int>(run.history.epochs.size());
  o.pass = run.test.avg_acc >= 0.95 && epochs <= 20 && run.seconds <= 600;
  o.detail = (Detail() << "ERNet 64x64 on synthetic 5x100: test avg acc " << run.test.avg_acc << " (need 0.95) after "
                       << epochs << " epoch(s) (limit 20), best epoch " << run.history.best_epoch << "; "
                       << run.seconds << " s (limit 600)")
                 .str();
  return o;
}

// ---- 6 ---------------------------------------------------------------------

Outcome relative_performance() {
  Rng rng(606);
  std::map<Variant, LatencyStats> s;
  bool fps_ok = true;
  Detail d;
  for (Variant v : {Variant::basenet, Variant::scnet, Variant::scfcnet, Variant::ernet}) {
    const auto g = build_model<float>(v, {240, 240, 3}, 5, rng);
    s[v] = benchmark(g, {240, 240, 3}, 2, 12);
    fps_ok &= std::abs(s[v].fps * s[v].mean_ms - 1000.0) <= 1.0;
    d << variant_name(v) << " " << s[v].mean_ms << " ms; ";
  }
  const double base = s[Variant::basenet].mean_ms;
  bool slack_ok = true, strict = true;
  for (Variant v : {Variant::scnet, Variant::scfcnet, Variant::ernet}) {
    slack_ok &= s[v].mean_ms < 1.15 * base;
    strict &= s[v].mean_ms < base;
  }
  d << "ratios to basenet scnet " << s[Variant::scnet].mean_ms / base << ", scfcnet "
    << s[Variant::scfcnet].mean_ms / base << ", ernet " << s[Variant::ernet].mean_ms / base
    << (strict ? " (strictly faster)" : "") << "; fps*mean_ms==1000 " << (fps_ok ? "ok" : "VIOLATED") << "; "
    << machine_info().threads << " thread(s)";
  return {slack_ok && fps_ok, d.str()};
}

// ---- 7 ---------------------------------------------------------------------

Outcome metric_fidelity() {
  const auto two = report_from_confusion({{10, 0}, {4, 4}});
  std::vector<std::vector<std::size_t>> majority(5, std::vector<std::size_t>(5, 0));
  const std::size_t rows[] = {300, 25, 60, 8, 120};
  for (int k = 0; k < 5; ++k) majority[k][4] = rows[k];
  const auto maj = report_from_confusion(majority);
  const auto skew = report_from_confusion({{90, 0}, {10, 0}});
  const bool ok = two.avg_acc == 0.75 && maj.avg_acc == 0.2 && skew.plain_acc == 0.9 && skew.avg_acc == 0.5;
  return {ok, (Detail() << "two-class 1.0/0.5 -> " << two.avg_acc << "; always-majority 5-class -> " << maj.avg_acc
                        << "; 90/10 always-majority plain " << skew.plain_acc << " vs average " << skew.avg_acc)
                  .str()};
}

// ---- 8 ---------------------------------------------------------------------

Outcome grad_cam_checks() {
  Rng rng(808);
  Detail d;
  // zero gradient
  const auto a = testkit::random_tensor({1, 7, 7, 16}, rng, 0, 2);
  bool zero_ok = true;
  const CamResult flat = cam_from_activations(a, Tensor<double>(a.shape(), 0.0));
  for (double v : flat.heatmap.data()) zero_ok &= v == 0.0;
  auto dead = build_model<double>(Variant::ernet, {64, 64, 3}, 5, rng);
  for (auto& l : dead.layers)
    if (l.spec.name == "head.conv") l.conv.weights.fill(0.0);
  const CamResult dead_cam = grad_cam(dead, testkit::random_tensor({64, 64, 3}, rng, 0, 1));
  for (double v : dead_cam.upsampled.data()) zero_ok &= v == 0.0;

  // range
  auto g = build_model<double>(Variant::ernet, {64, 64, 3}, 5, rng);
  bool range_ok = true;
  for (int t = 0; t < 5; ++t) {
    const auto cam = grad_cam(g, testkit::random_tensor({64, 64, 3}, rng, 0, 1), t);
    for (double v : cam.heatmap.data()) range_ok &= v >= 0.0 && v <= 1.0;
    for (double v : cam.upsampled.data()) range_ok &= v >= 0.0 && v <= 1.0;
  }

  // channel weights vs finite difference of the target logit
  const auto img = testkit::random_tensor({64, 64, 3}, rng, 0, 1);
  const int target = 2;
  const auto cam = grad_cam(g, img, target);
  const auto fr = forward_infer(g, img.reshaped({1, 64, 64, 3}));
  const Tensor<double>& feat = fr.cache.features();
  const Extent hw = feat.dim(1) * feat.dim(2), channels = feat.dim(3);
  double fd_worst = 0;
  Rng unused(0);
  for (Extent k = 0; k < channels; ++k) {
    Tensor<double> up = feat, down = feat;
    const double h = 1e-5;
    for (Extent i = 0; i < hw; ++i) up[i * channels + k] += h, down[i * channels + k] -= h;
    const double lu = forward_from(g, g.feature_layer, up, Phase::infer, unused, false).logits[target];
    const double ld = forward_from(g, g.feature_layer, down, Phase::infer, unused, false).logits[target];
    fd_worst = std::max(fd_worst, testkit::rel_err((lu - ld) / (2 * h) / static_cast<double>(hw),
                                                   cam.channel_weights[k], 1e-8));
  }

  // overlay identity at alpha 0
  Image src = make_image(64, 64);
  for (auto& v : src.data()) v = static_cast<float>(rng.uniform());
  const bool overlay_ok = image_to_bytes(render_overlay(src, cam, 0.0)) == image_to_bytes(src);

  d << "zero-gradient map all zero " << (zero_ok ? "yes" : "NO") << "; heatmap in [0,1] " << (range_ok ? "yes" : "NO")
    << "; channel-weight FD max rel err " << fd_worst << " over " << channels << " channels (limit 1e-3); alpha=0 overlay "
    << (overlay_ok ? "byte-identical" : "DIFFERS");
  return {zero_ok && range_ok && fd_worst < 1e-3 && overlay_ok, d.str()};
}

// ---- 9 ---------------------------------------------------------------------

Outcome serialization() {
  Rng rng(909);
  auto g = build_model<float>(Variant::ernet, {240, 240, 3}, 5, rng);
  const auto batch = testkit::random_tensor({2, 240, 240, 3}, rng, 0, 1).cast<float>();
  forward(g, batch, Phase::train, rng);  // move running statistics off their defaults
  const auto path = scratch("serial") / "ernet.bin";
  save_model(g, path);
  Rng other(1);
  const auto loaded = load_model<float>(path, other);
  const bool same = predict_logits(g, batch) == predict_logits(loaded, batch);

  auto bytes = serialize_model(g);
  const std::size_t payload_start = 12 + model_header(g).size();
  bytes[payload_start + (bytes.size() - payload_start) / 2] ^= 0x10;
  std::string caught = "nothing";
  try {
    deserialize_model<float>(bytes, other);
  } catch (const FormatError& e) {
    caught = e.what();
  }
  const bool detected = caught.find("checksum") != std::string::npos;
  return {same && detected, (Detail() << "round-trip logits " << (same ? "bit-identical" : "DIFFER")
                                      << "; flipped payload byte -> " << caught)
                                .str()};
}

// ---- 10 --------------------------------------------------------------------

Outcome determinism() {
  const auto root = scratch("determinism");
  std::ostringstream sink;
  const auto data = (root / "data").string();
  int rc = cli::run({"--seed", "77", "synth", "--classes", "5", "--per-class", "12", "--size", "48", "--out", data},
                    sink, sink);
  std::string model[2];
  for (int i = 0; i < 2 && rc == 0; ++i) {
    const auto out = (root / ("run" + std::to_string(i))).string();
    rc = cli::run({"--seed", "77", "train", "--data", data, "--input", "64x64x3", "--epochs", "2", "--iters", "3",
                   "--batch", "10", "--out", out},
                  sink, sink);
    model[i] = slurp(fs::path(out) / "model.bin");
  }
  const bool same = rc == 0 && !model[0].empty() && model[0] == model[1];
  return {same, (Detail() << "two `train --seed 77` runs: exit " << rc << ", model files " << model[0].size()
                          << " bytes, " << (same ? "byte-identical" : "DIFFER"))
                    .str()};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"operator correctness", operator_correctness},
      {"gradient suite", gradient_suite},
      {"architecture conformance", architecture},
      {"training recipe", training_recipe},
      {"desk-scale learning", desk_learning},
      {"relative performance", relative_performance},
      {"metric fidelity", metric_fidelity},
      {"grad-cam", grad_cam_checks},
      {"serialization", serialization},
      {"determinism", determinism},
  };
  int failed = 0, n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %-26s %s  %s\n", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", n - failed, n);
  return failed;
}
