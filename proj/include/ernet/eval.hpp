#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ernet/dataset.hpp"
#include "ernet/model.hpp"

namespace ernet {

struct LatencyStats {
  double mean_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  double fps = 0;  // 1000 / mean_ms
  std::size_t runs = 0;
};

/// Confusion matrix (rows = truth, columns = prediction) and the metrics
/// derived from it. avg_acc is the unweighted mean of per-class recall, so
/// a majority-class predictor scores 1/K however skewed the test set is.
struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<double> per_class_acc;
  double avg_acc = 0;
  double plain_acc = 0;
  std::size_t total = 0;
  LatencyStats latency;
  std::size_t model_bytes = 0;
};

/// Fills the accuracy fields from a confusion matrix. A class with no test
/// samples raises EvalError.
EvalReport report_from_confusion(std::vector<std::vector<std::size_t>> confusion);
EvalReport report_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                   std::size_t classes);

struct EvalOptions {
  std::size_t batch_size = 32;
  /// Batch-1 latency runs recorded in the report; 0 skips timing.
  std::size_t latency_runs = 0;
  std::size_t latency_warmup = 3;
  /// Evaluate disjoint shards on worker threads.
  bool parallel = false;
};

/// Infer-phase argmax over every test image. Images must already have the
/// model's input size.
template <typename T>
EvalReport evaluate(const ModelGraph<T>& g, const LabeledImages& test, const EvalOptions& options = {});

/// Batch-1 infer-phase timing of the forward call alone. The warmup runs are
/// discarded; needs at least 10 timed runs.
template <typename T>
LatencyStats benchmark(const ModelGraph<T>& g, const Shape& input_shape, std::size_t warmup, std::size_t runs);

/// Computes mean/p50/p95/fps from raw timings in milliseconds.
LatencyStats summarize_latencies(std::vector<double> samples_ms);

/// How many times faster `candidate` is than `baseline`.
inline double speedup(const LatencyStats& baseline, const LatencyStats& candidate) {
  return baseline.mean_ms / candidate.mean_ms;
}

/// Free-form provenance strings printed with benchmark tables.
struct MachineInfo {
  std::string cpu;
  std::string compiler;
  std::size_t threads = 1;
};
MachineInfo machine_info();

std::string report_table(const EvalReport& r);
/// "key=value" lines; per-class values use keys like acc.<class>.
std::string report_kv(const EvalReport& r);

}  // namespace ernet
