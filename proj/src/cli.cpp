#include "ernet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "ernet/batching.hpp"
#include "ernet/dataset.hpp"
#include "ernet/eval.hpp"
#include "ernet/explain.hpp"
#include "ernet/image.hpp"
#include "ernet/model_io.hpp"
#include "ernet/train.hpp"

namespace ernet::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  // synth
  int classes = 5;
  int per_class = 60;
  int size = 80;
  // train / eval
  std::string data;
  std::string variant = "ernet";
  std::string input = "240x240x3";
  TrainConfig train;
  double augment_p = 0.3;
  double target_acc = 0;
  // eval / cam
  std::string model;
  std::vector<std::string> images;
  double alpha = 0.5;
  int cam_class = -1;
  bool png = false;
  // bench
  std::vector<std::string> models;
  int runs = 30;
  int warmup = 3;
  // shared
  std::string out;
  std::uint64_t seed = TrainConfig{}.seed;
};

Shape parse_input(const std::string& text) {
  Shape s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      s.push_back(v);
    } catch (const std::exception&) {
      throw ArgumentError("--input must look like HxWxC, got '" + text + "'");
    }
  }
  if (s.size() != 3) throw ArgumentError("--input must look like HxWxC, got '" + text + "'");
  if (s[2] != 3) throw ArgumentError("--input channel count must be 3");
  return s;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
}

// Split seed is derived from the run seed so `eval` with the same seed sees
// the same held-out test split as `train`.
DatasetManifest load_manifest(const Options& o) {
  Rng rng(o.seed ^ 0x5EEDF00DULL);
  return split_dataset(scan_dataset(o.data), {}, rng);
}

LabeledImages resized_split(const DatasetManifest& m, Split s, const Shape& input) {
  return load_split(m, s, input[0], input[1]);
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.classes < 2) throw ArgumentError("--classes must be at least 2");
  if (o.per_class < 3) throw ArgumentError("--per-class must be at least 3");
  if (o.size < 16) throw ArgumentError("--size must be at least 16");
  Rng rng(o.seed);
  synth_dataset(o.out, o.classes, o.per_class, rng, SynthOptions{o.size});
  out << "wrote " << o.classes * o.per_class << " images in " << o.classes << " classes to " << o.out << '\n';
  return kExitOk;
}

int cmd_train(Options o, std::ostream& out, std::ostream& err) {
  const Shape input = parse_input(o.input);
  const Variant variant = parse_variant(o.variant);
  o.train.seed = o.seed;
  o.train.validate();

  const DatasetManifest m = load_manifest(o);
  for (const auto& s : m.skipped) err << "skipped " << s.path << ": " << s.reason << '\n';
  fs::create_directories(o.out);
  write_manifest(m, fs::path(o.out) / "manifest.tsv");

  Rng init_rng(o.seed);
  ModelGraph<float> g = build_model<float>(variant, input, static_cast<Extent>(m.class_count()), init_rng);
  AugmentConfig aug = o.augment_p > 0 ? AugmentConfig::with_probability(o.augment_p) : AugmentConfig::none();
  BalancedBatchIterator batches = balanced_batch_iter(m, static_cast<std::size_t>(o.train.batch_size), aug, input[0],
                                                      input[1], Rng(o.seed ^ 0xBA7C4E5ULL));
  const LabeledImages val = resized_split(m, Split::val, input);

  TrainCallbacks cb;
  cb.on_epoch = [&err, &o](const EpochRecord& e) {
    err << "epoch " << e.epoch + 1 << '/' << o.train.epochs << "  lr " << e.lr << "  loss " << std::fixed
        << std::setprecision(4) << e.train_loss << "  val_avg_acc " << e.val_avg_acc << std::defaultfloat << '\n';
  };
  if (o.target_acc > 0) cb.should_stop = [&o](const EpochRecord& e) { return e.val_avg_acc >= o.target_acc; };
  const TrainHistory h = train(g, batches, val, o.train, cb);

  save_model(g, fs::path(o.out) / "model.bin");
  write_text(fs::path(o.out) / "history.txt", history_table(h));
  write_text(fs::path(o.out) / "history.kv", history_kv(h));

  const EvalReport r = evaluate(g, resized_split(m, Split::test, input));
  EvalReport named = r;
  named.class_names = m.class_names;
  write_text(fs::path(o.out) / "test_report.txt", report_table(named));
  out << history_table(h) << "test split\n" << report_table(named);
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  Rng rng(o.seed);
  const ModelGraph<float> g = load_model<float>(o.model, rng);
  const DatasetManifest m = load_manifest(o);
  if (m.class_count() != static_cast<std::size_t>(g.class_count))
    throw DatasetError("dataset has " + std::to_string(m.class_count()) + " classes, model expects " +
                       std::to_string(g.class_count));
  EvalOptions opts;
  opts.latency_runs = o.runs > 0 ? static_cast<std::size_t>(o.runs) : 0;
  EvalReport r = evaluate(g, resized_split(m, Split::test, g.input_shape), opts);
  r.class_names = m.class_names;
  r.model_bytes = static_cast<std::size_t>(fs::file_size(o.model));
  out << report_table(r) << report_kv(r);
  return kExitOk;
}

// A --models token that names no file but parses as a variant benchmarks a
// freshly initialised network of that variant.
ModelGraph<float> bench_model(const std::string& token, const Shape& input, Rng& rng, std::size_t& bytes) {
  if (fs::exists(token)) {
    bytes = static_cast<std::size_t>(fs::file_size(token));
    ModelGraph<float> g = load_model<float>(token, rng);
    if (g.input_shape != input)
      throw ArgumentError(token + " was built for input " + shape_str(g.input_shape) + ", not " + shape_str(input));
    return g;
  }
  Variant v;
  try {
    v = parse_variant(token);
  } catch (const ArgumentError&) {
    throw IoError("model file not found: " + token);
  }
  ModelGraph<float> g = build_model<float>(v, input, 5, rng);
  bytes = serialize_model(g).size();
  return g;
}

int cmd_bench(const Options& o, std::ostream& out) {
  if (o.runs < 10) throw ArgumentError("--runs must be at least 10");
  const Shape input = parse_input(o.input);
  Rng rng(o.seed);
  const MachineInfo mi = machine_info();
  out << "# cpu: " << mi.cpu << "\n# compiler: " << mi.compiler << "\n# threads: " << mi.threads << "\n# input "
      << o.input << ", batch 1, " << o.runs << " runs after " << o.warmup << " warmup\n";
  out << std::left << std::setw(28) << "model" << std::right << std::setw(10) << "variant" << std::setw(11)
      << "params" << std::setw(12) << "bytes" << std::setw(11) << "mean_ms" << std::setw(10) << "p50_ms"
      << std::setw(10) << "p95_ms" << std::setw(10) << "fps" << std::setw(9) << "speedup" << '\n';
  std::optional<LatencyStats> base;
  for (const auto& token : o.models) {
    std::size_t bytes = 0;
    const ModelGraph<float> g = bench_model(token, input, rng, bytes);
    const LatencyStats s =
        benchmark(g, input, static_cast<std::size_t>(o.warmup), static_cast<std::size_t>(o.runs));
    if (!base) base = s;
    out << std::left << std::setw(28) << fs::path(token).filename().string() << std::right << std::setw(10)
        << variant_name(g.variant) << std::setw(11) << param_count(g).total() << std::setw(12) << bytes
        << std::fixed << std::setprecision(3) << std::setw(11) << s.mean_ms << std::setw(10) << s.p50_ms
        << std::setw(10) << s.p95_ms << std::setprecision(2) << std::setw(10) << s.fps << std::setw(9)
        << speedup(*base, s) << std::defaultfloat << '\n';
  }
  return kExitOk;
}

int cmd_cam(const Options& o, std::ostream& out) {
  Rng rng(o.seed);
  const ModelGraph<float> g = load_model<float>(o.model, rng);
  if (o.png && !png_supported()) throw ArgumentError("PNG output is not available in this build");
  fs::create_directories(o.out);
  std::optional<int> target;
  if (o.cam_class >= 0) target = o.cam_class;
  for (const auto& path : o.images) {
    const Image src = read_image(path);
    const Image img = resize_bilinear(src, g.input_shape[0], g.input_shape[1]);
    const CamResult cam = grad_cam(g, img, target);
    const Image overlay = render_overlay(img, cam, o.alpha);
    const fs::path dest = fs::path(o.out) / (fs::path(path).stem().string() + "_cam" + (o.png ? ".png" : ".ppm"));
    if (o.png)
      write_png(dest, overlay);
    else
      write_ppm(dest, overlay);
    out << path << "  predicted " << cam.predicted_class << "  target " << cam.target_class << "  -> "
        << dest.string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Aerial emergency image classification: synthesize, train, evaluate, benchmark, explain.", "ernet"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", o.seed, "Seed for every random stream")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Write a synthetic class-per-directory dataset");
  synth->add_option("--classes", o.classes, "Number of classes")->capture_default_str();
  synth->add_option("--per-class", o.per_class, "Images per class")->capture_default_str();
  synth->add_option("--size", o.size, "Image side length in pixels")->capture_default_str();
  synth->add_option("--out", o.out, "Dataset root to create")->required();

  const TrainConfig defaults;
  auto* tr = app.add_subcommand("train", "Split, train with balanced batches, save the best model and history");
  tr->add_option("--data", o.data, "Dataset root (one directory per class)")->required();
  tr->add_option("--variant", o.variant, "basenet | scnet | scfcnet | ernet")->capture_default_str();
  tr->add_option("--input", o.input, "Network input size HxWxC")->capture_default_str();
  tr->add_option("--epochs", o.train.epochs, "Training epochs")->default_val(defaults.epochs);
  tr->add_option("--iters", o.train.iters_per_epoch, "Iterations per epoch")->default_val(defaults.iters_per_epoch);
  tr->add_option("--batch", o.train.batch_size, "Batch size")->default_val(defaults.batch_size);
  tr->add_option("--lr0", o.train.lr0, "Initial learning rate")->default_val(defaults.lr0);
  tr->add_option("--decay", o.train.decay_factor, "Learning-rate decay factor")->default_val(defaults.decay_factor);
  tr->add_option("--decay-every", o.train.decay_every, "Epochs between decays")->default_val(defaults.decay_every);
  tr->add_option("--l2", o.train.l2_lambda, "L2 weight penalty")->default_val(defaults.l2_lambda);
  tr->add_option("--augment", o.augment_p, "Probability of each augmentation transform")->capture_default_str();
  tr->add_option("--target-acc", o.target_acc, "Stop once validation average accuracy reaches this (0 = off)")
      ->capture_default_str();
  tr->add_option("--out", o.out, "Output directory for model.bin, history and reports")->default_val("run");

  auto* ev = app.add_subcommand("eval", "Evaluate a model on the held-out test split");
  ev->add_option("--model", o.model, "Model file")->required();
  ev->add_option("--data", o.data, "Dataset root; split with the same --seed as training")->required();
  ev->add_option("--runs", o.runs, "Batch-1 latency runs (0 = skip timing)")->default_val(0);

  auto* be = app.add_subcommand("bench", "Batch-1 latency and fps over one or more models");
  be->add_option("--models", o.models, "Comma-separated model files or variant names")->delimiter(',')->required();
  be->add_option("--input", o.input, "Input size HxWxC")->capture_default_str();
  be->add_option("--runs", o.runs, "Timed runs per model")->default_val(30);
  be->add_option("--warmup", o.warmup, "Discarded warmup runs")->capture_default_str();

  auto* cam = app.add_subcommand("cam", "Write Grad-CAM overlays");
  cam->add_option("--model", o.model, "Model file")->required();
  cam->add_option("--images", o.images, "Input images")->required()->delimiter(',');
  cam->add_option("--out", o.out, "Output directory")->default_val("cam");
  cam->add_option("--alpha", o.alpha, "Overlay opacity in [0, 1]")->capture_default_str();
  cam->add_option("--class", o.cam_class, "Target class (default: predicted)");
  cam->add_flag("--png", o.png, "Write PNG instead of PPM");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (tr->parsed()) return cmd_train(o, out, err);
    if (ev->parsed()) return cmd_eval(o, out);
    if (be->parsed()) return cmd_bench(o, out);
    if (cam->parsed()) return cmd_cam(o, out);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ernet::cli
