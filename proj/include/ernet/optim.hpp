#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ernet/tensor.hpp"

namespace ernet {

/// Training hyperparameters. Defaults are the reference recipe: 200 epochs
/// of 100 iterations at batch 64, Adam from lr 0.001 decayed by 0.95 every
/// 5 epochs.
struct TrainConfig {
  int epochs = 200;
  int iters_per_epoch = 100;
  int batch_size = 64;
  double lr0 = 0.001;
  double decay_factor = 0.95;
  int decay_every = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double l2_lambda = 1e-4;
  std::uint64_t seed = 20190611;

  void validate() const;
};

/// lr0 · decay_factor^floor(epoch / decay_every)
double lr_at(int epoch, const TrainConfig& cfg);

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::int64_t step = 0;

  /// Zero moments shaped like `params`.
  static AdamState for_params(std::span<Tensor<T>* const> params);
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update applied in place.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state, double lr,
               AdamHyper hyper = {});

}  // namespace ernet
