#include "ernet/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "ernet/image.hpp"
#include "ernet/parallel.hpp"

namespace ernet {

EvalReport report_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
  const std::size_t k = confusion.size();
  if (k == 0) throw EvalError("empty confusion matrix");
  EvalReport r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (confusion[i].size() != k) throw EvalError("confusion matrix must be square");
    const std::size_t row = std::accumulate(confusion[i].begin(), confusion[i].end(), std::size_t{0});
    if (row == 0) throw EvalError("class " + std::to_string(i) + " has no test samples");
    r.per_class_acc.push_back(static_cast<double>(confusion[i][i]) / static_cast<double>(row));
    r.total += row;
    correct += confusion[i][i];
  }
  r.avg_acc = std::accumulate(r.per_class_acc.begin(), r.per_class_acc.end(), 0.0) / static_cast<double>(k);
  r.plain_acc = static_cast<double>(correct) / static_cast<double>(r.total);
  r.confusion = std::move(confusion);
  for (std::size_t i = 0; i < k; ++i) r.class_names.push_back("class_" + std::to_string(i));
  return r;
}

EvalReport report_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                   std::size_t classes) {
  if (truth.size() != predicted.size()) throw EvalError("truth and prediction lengths differ");
  std::vector<std::vector<std::size_t>> confusion(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes || predicted[i] < 0 ||
        static_cast<std::size_t>(predicted[i]) >= classes)
      throw EvalError("class id out of range");
    ++confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return report_from_confusion(std::move(confusion));
}

namespace {

template <typename T>
std::vector<int> predict_range(const ModelGraph<T>& g, const LabeledImages& test, std::size_t lo, std::size_t hi,
                               std::size_t batch) {
  std::vector<int> out;
  for (std::size_t start = lo; start < hi; start += batch) {
    const std::size_t end = std::min(hi, start + batch);
    std::vector<Image> chunk(test.images.begin() + static_cast<std::ptrdiff_t>(start),
                             test.images.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor<T> x = stack_images(chunk).template cast<T>();
    const Tensor<T> logits = predict_logits(g, x);
    const Extent k = logits.dim(1);
    for (Extent b = 0; b < logits.dim(0); ++b) {
      const T* row = logits.raw() + b * k;
      out.push_back(static_cast<int>(std::max_element(row, row + k) - row));
    }
  }
  return out;
}

}  // namespace

template <typename T>
EvalReport evaluate(const ModelGraph<T>& g, const LabeledImages& test, const EvalOptions& options) {
  const std::size_t k = static_cast<std::size_t>(g.class_count);
  if (test.images.size() != test.labels.size()) throw EvalError("test images and labels differ in count");
  std::vector<std::size_t> per_class(k, 0);
  for (int label : test.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) throw EvalError("test label out of range");
    ++per_class[static_cast<std::size_t>(label)];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (per_class[c] == 0) throw EvalError("class " + std::to_string(c) + " has no test samples");

  const std::size_t n = test.images.size();
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  std::vector<int> predicted;
  if (options.parallel && worker_threads() > 1) {
    // Each shard runs single-threaded so results do not depend on scheduling.
    const std::size_t shards = std::min(worker_threads(), n);
    std::vector<std::vector<int>> parts(shards);
    std::vector<std::thread> pool;
    const std::size_t per = (n + shards - 1) / shards;
    for (std::size_t s = 0; s < shards; ++s)
      pool.emplace_back([&, s] { parts[s] = predict_range(g, test, s * per, std::min(n, (s + 1) * per), batch); });
    for (auto& t : pool) t.join();
    for (auto& p : parts) predicted.insert(predicted.end(), p.begin(), p.end());
  } else {
    predicted = predict_range(g, test, 0, n, batch);
  }

  EvalReport r = report_from_predictions(test.labels, predicted, k);
  if (options.latency_runs > 0) {
    const Shape in{1, g.input_shape[0], g.input_shape[1], g.input_shape[2]};
    r.latency = benchmark(g, in, options.latency_warmup, options.latency_runs);
  }
  r.model_bytes = 4 * param_count(g).total();
  return r;
}

LatencyStats summarize_latencies(std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw ArgumentError("no latency samples");
  LatencyStats s;
  s.runs = samples_ms.size();
  s.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / static_cast<double>(s.runs);
  std::sort(samples_ms.begin(), samples_ms.end());
  // Nearest-rank percentiles.
  auto pct = [&](double p) {
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(s.runs)));
    return samples_ms[std::clamp<std::size_t>(rank, 1, s.runs) - 1];
  };
  s.p50_ms = pct(50);
  s.p95_ms = pct(95);
  s.fps = 1000.0 / s.mean_ms;
  return s;
}

template <typename T>
LatencyStats benchmark(const ModelGraph<T>& g, const Shape& input_shape, std::size_t warmup, std::size_t runs) {
  if (runs < 10) throw ArgumentError("benchmark needs at least 10 timed runs");
  Shape shape = input_shape;
  if (shape.size() == 3) shape.insert(shape.begin(), 1);
  if (shape.size() != 4 || shape[0] != 1) throw ArgumentError("benchmark input must be a single (h, w, c) frame");
  Tensor<T> x(shape);
  Rng rng(7);
  for (auto& v : x.data()) v = static_cast<T>(rng.uniform());

  for (std::size_t i = 0; i < warmup; ++i) predict_logits(g, x);
  std::vector<double> samples;
  samples.reserve(runs);
  for (std::size_t i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor<T> logits = predict_logits(g, x);
    const auto t1 = std::chrono::steady_clock::now();
    if (logits.empty()) throw StateError("benchmark produced no output");
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return summarize_latencies(std::move(samples));
}

MachineInfo machine_info() {
  MachineInfo m;
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);)
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) m.cpu = line.substr(colon + 2);
      break;
    }
  if (m.cpu.empty()) m.cpu = "unknown";
#if defined(__clang__)
  m.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  m.compiler = "gcc " __VERSION__;
#else
  m.compiler = "unknown";
#endif
  m.threads = worker_threads();
  return m;
}

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "class                 accuracy   samples\n";
  for (std::size_t i = 0; i < r.per_class_acc.size(); ++i) {
    const std::size_t row = std::accumulate(r.confusion[i].begin(), r.confusion[i].end(), std::size_t{0});
    os << std::left << std::setw(22) << r.class_names[i] << std::right << std::setw(8) << r.per_class_acc[i]
       << std::setw(10) << row << '\n';
  }
  os << "average accuracy      " << std::setw(8) << r.avg_acc << '\n';
  os << "plain accuracy        " << std::setw(8) << r.plain_acc << '\n';
  os << "confusion (rows = truth):\n";
  for (const auto& row : r.confusion) {
    for (std::size_t v : row) os << std::setw(6) << v;
    os << '\n';
  }
  if (r.latency.runs > 0) {
    os << std::setprecision(3) << "latency ms mean/p50/p95  " << r.latency.mean_ms << " / " << r.latency.p50_ms
       << " / " << r.latency.p95_ms << "\nfps                   " << r.latency.fps << '\n';
  }
  os << "model bytes           " << r.model_bytes << '\n';
  return os.str();
}

std::string report_kv(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "avg_acc=" << r.avg_acc << '\n' << "plain_acc=" << r.plain_acc << '\n' << "total=" << r.total << '\n';
  for (std::size_t i = 0; i < r.per_class_acc.size(); ++i)
    os << "acc." << r.class_names[i] << '=' << r.per_class_acc[i] << '\n';
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    os << "confusion." << i << '=';
    for (std::size_t j = 0; j < r.confusion[i].size(); ++j) os << (j ? "," : "") << r.confusion[i][j];
    os << '\n';
  }
  os << "latency_mean_ms=" << r.latency.mean_ms << '\n'
     << "latency_p50_ms=" << r.latency.p50_ms << '\n'
     << "latency_p95_ms=" << r.latency.p95_ms << '\n'
     << "fps=" << r.latency.fps << '\n'
     << "model_bytes=" << r.model_bytes << '\n';
  return os.str();
}

template EvalReport evaluate(const ModelGraph<float>&, const LabeledImages&, const EvalOptions&);
template EvalReport evaluate(const ModelGraph<double>&, const LabeledImages&, const EvalOptions&);
template LatencyStats benchmark(const ModelGraph<float>&, const Shape&, std::size_t, std::size_t);
template LatencyStats benchmark(const ModelGraph<double>&, const Shape&, std::size_t, std::size_t);

}  // namespace ernet
