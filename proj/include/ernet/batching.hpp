#pragma once

#include <cstddef>
#include <vector>

#include "ernet/augment.hpp"
#include "ernet/dataset.hpp"
#include "ernet/rng.hpp"

namespace ernet {

struct Batch {
  Tensor<float> images;  // (batch, h, w, 3) in [0, 1]
  Tensor<float> labels;  // one-hot (batch, classes)
  std::vector<int> class_ids;
};

/// Per-class sample counts for batch number `batch_index`: every class gets
/// batch_size / K and the first (batch_size mod K) classes of an order
/// rotated by batch_index get one more.
std::vector<std::size_t> batch_class_counts(std::size_t batch_index, std::size_t batch_size, std::size_t classes);

/// Source of training batches.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual Batch next() = 0;
  virtual std::size_t images_emitted() const = 0;
};

/// Class-balanced sampler. Each class draws from its own shuffled queue and
/// reshuffles when the queue runs out, so small classes are revisited within
/// an epoch (oversampling) while large classes never repeat an image before
/// the pass over them completes (undersampling). Every drawn image is
/// augmented, resized to the target size and stacked.
class BalancedBatchIterator : public BatchSource {
 public:
  BalancedBatchIterator(LabeledImages pool, std::size_t batch_size, AugmentConfig augment, Extent target_h,
                        Extent target_w, Rng rng);

  Batch next() override;
  std::size_t images_emitted() const override { return images_emitted_; }
  std::size_t batches_emitted() const { return batches_emitted_; }

  /// How often each pool image has been drawn so far.
  const std::vector<std::size_t>& draw_counts() const { return draws_; }
  /// Number of completed passes (reshuffles) over each class's queue.
  const std::vector<std::size_t>& passes() const { return passes_; }
  std::size_t class_count() const { return per_class_.size(); }

 private:
  std::size_t draw(std::size_t cls);

  LabeledImages pool_;
  std::size_t batch_size_;
  AugmentConfig augment_;
  Extent target_h_, target_w_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> per_class_;
  std::vector<std::size_t> cursor_;
  std::vector<std::size_t> passes_;
  std::vector<std::size_t> draws_;
  std::size_t batches_emitted_ = 0;
  std::size_t images_emitted_ = 0;
};

/// Loads the train split of `m` and wraps it in a balanced iterator.
BalancedBatchIterator balanced_batch_iter(const DatasetManifest& m, std::size_t batch_size,
                                          const AugmentConfig& augment, Extent target_h, Extent target_w, Rng rng);

}  // namespace ernet
