#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ernet/batching.hpp"
#include "ernet/eval.hpp"
#include "ernet/model.hpp"
#include "ernet/optim.hpp"

namespace ernet {

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;     // mean over the epoch's iterations
  double val_avg_acc = -1;   // -1 when no validation set is given
  double val_plain_acc = -1;
  std::size_t images = 0;    // training images consumed this epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_avg_acc = -1;
  bool stopped_early = false;
};

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Returning true ends training after the current epoch.
  std::function<bool(const EpochRecord&)> should_stop;
};

/// Runs epochs × iters_per_epoch Adam steps on batches from `data`. After
/// every epoch the validation set (if non-empty) is scored; the parameters
/// with the best validation average accuracy are restored at the end.
/// A non-finite loss raises DivergenceError naming epoch, iteration and lr.
template <typename T>
TrainHistory train(ModelGraph<T>& g, BatchSource& data, const LabeledImages& val, const TrainConfig& cfg,
                   const TrainCallbacks& callbacks = {});

std::string history_table(const TrainHistory& h);
std::string history_kv(const TrainHistory& h);

}  // namespace ernet
