#include "ernet/batching.hpp"

#include <algorithm>

namespace ernet {

std::vector<std::size_t> batch_class_counts(std::size_t batch_index, std::size_t batch_size, std::size_t classes) {
  if (classes == 0) throw ArgumentError("batch_class_counts: no classes");
  if (batch_size < classes)
    throw ArgumentError("batch size " + std::to_string(batch_size) + " is smaller than the class count " +
                        std::to_string(classes));
  std::vector<std::size_t> counts(classes, batch_size / classes);
  const std::size_t extra = batch_size % classes;
  for (std::size_t j = 0; j < extra; ++j) ++counts[(batch_index + j) % classes];
  return counts;
}

BalancedBatchIterator::BalancedBatchIterator(LabeledImages pool, std::size_t batch_size, AugmentConfig augment,
                                             Extent target_h, Extent target_w, Rng rng)
    : pool_(std::move(pool)),
      batch_size_(batch_size),
      augment_(augment),
      target_h_(target_h),
      target_w_(target_w),
      rng_(rng) {
  augment_.validate();
  const std::size_t k = pool_.class_count;
  if (k < 2) throw ArgumentError("balanced batches need at least 2 classes");
  if (batch_size_ < k)
    throw ArgumentError("batch size " + std::to_string(batch_size_) + " is smaller than the class count " +
                        std::to_string(k));
  if (target_h_ < 1 || target_w_ < 1) throw ArgumentError("target size must be positive");
  per_class_.resize(k);
  for (std::size_t i = 0; i < pool_.labels.size(); ++i)
    per_class_.at(static_cast<std::size_t>(pool_.labels[i])).push_back(i);
  for (std::size_t c = 0; c < k; ++c) {
    if (per_class_[c].empty())
      throw DatasetError("class " + std::to_string(c) + " has no training images for balanced batching");
    rng_.shuffle(per_class_[c]);
  }
  cursor_.assign(k, 0);
  passes_.assign(k, 0);
  draws_.assign(pool_.images.size(), 0);
}

std::size_t BalancedBatchIterator::draw(std::size_t cls) {
  auto& queue = per_class_[cls];
  if (cursor_[cls] == queue.size()) {
    rng_.shuffle(queue);
    cursor_[cls] = 0;
    ++passes_[cls];
  }
  const std::size_t idx = queue[cursor_[cls]++];
  ++draws_[idx];
  return idx;
}

Batch BalancedBatchIterator::next() {
  const std::size_t k = per_class_.size();
  const auto counts = batch_class_counts(batches_emitted_, batch_size_, k);
  Batch b;
  b.images = Tensor<float>({static_cast<Extent>(batch_size_), target_h_, target_w_, 3});
  b.labels = Tensor<float>({static_cast<Extent>(batch_size_), static_cast<Extent>(k)}, 0.0f);
  float* dst = b.images.raw();
  std::size_t slot = 0;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < counts[c]; ++j, ++slot) {
      const std::size_t idx = draw(c);
      Image img = augment_image(pool_.images[idx], augment_, rng_);
      if (img.dim(0) != target_h_ || img.dim(1) != target_w_) img = resize_bilinear(img, target_h_, target_w_);
      std::copy(img.raw(), img.raw() + img.size(), dst);
      dst += img.size();
      b.labels[slot * k + c] = 1.0f;
      b.class_ids.push_back(static_cast<int>(c));
    }
  ++batches_emitted_;
  images_emitted_ += batch_size_;
  return b;
}

BalancedBatchIterator balanced_batch_iter(const DatasetManifest& m, std::size_t batch_size,
                                          const AugmentConfig& augment, Extent target_h, Extent target_w, Rng rng) {
  return BalancedBatchIterator(load_split(m, Split::train), batch_size, augment, target_h, target_w, rng);
}

}  // namespace ernet
