#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ernet/ops.hpp"
#include "ernet/rng.hpp"
#include "ernet/tensor.hpp"

namespace ernet {

enum class Variant { basenet, scnet, scfcnet, ernet };

std::string variant_name(Variant v);
/// Accepts basenet/scnet/scfcnet/ernet, case-insensitive.
Variant parse_variant(const std::string& name);

enum class LayerKind {
  conv,
  sepconv,
  maxpool,
  batchnorm,
  relu,
  gap,
  dense,
  dropout,
  flatten,
  residual_begin,
  residual_end,
};

std::string layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  Extent filters = 0;   // conv, sepconv, dense: output channels / features
  Extent kernel = 0;    // conv, sepconv
  double rate = 0.0;    // dropout
  bool projection = false;  // residual_end: 1×1 projection on the skip path
  std::size_t partner = 0;  // residual_begin <-> residual_end index
};

/// Runtime state of one layer. Only the members relevant to the layer kind
/// are populated.
template <typename T>
struct Layer {
  LayerSpec spec;
  ConvParams<T> conv;        // conv; pointwise half of sepconv
  DepthwiseParams<T> depthwise;
  BatchNormParams<T> bn;
  Tensor<T> dense_weights, dense_bias;
  std::optional<ConvParams<T>> proj;  // residual_end with projection
};

template <typename T>
struct ParamRef {
  std::string name;
  T* tensor;
  bool trainable;  // false for batch-norm running statistics
  bool decayed;    // conv/dense weights carry the L2 penalty
};

/// Canonical layer list plus parameters for one network.
template <typename T>
struct ModelGraph {
  std::string name;
  Variant variant = Variant::ernet;
  Shape input_shape;  // (h, w, ch)
  Extent class_count = 0;
  std::vector<Layer<T>> layers;
  std::size_t feature_layer = 0;  // its input is the final convolutional feature map

  /// Every stored tensor in declaration order (the serialisation order).
  std::vector<ParamRef<Tensor<T>>> parameters();
  std::vector<ParamRef<const Tensor<T>>> parameters() const;
  std::vector<ParamRef<Tensor<T>>> trainable_parameters();

  template <typename U>
  ModelGraph<U> cast() const;
};

template <typename T>
ModelGraph<T> build_model(Variant variant, const Shape& input_shape, Extent class_count, Rng& rng);

/// Output shape after every layer for a given batch; throws ShapeError at
/// the first inconsistent layer.
template <typename T>
std::vector<Shape> infer_shapes(const ModelGraph<T>& g, Extent batch);

/// Spatial extents (height) of the feature map entering each pooling layer,
/// followed by the final feature map height: 240 -> 120 -> ... -> 7.
template <typename T>
std::vector<Extent> spatial_trace(const ModelGraph<T>& g);

template <typename T>
struct LayerCache {
  Tensor<T> input;
  BatchNormCache<T> bn;
  Tensor<T> mask;  // dropout
  Tensor<T> skip;  // residual_end: input of the matching residual_begin
};

template <typename T>
struct ForwardCache {
  Phase phase = Phase::infer;
  std::size_t first_layer = 0;
  std::vector<LayerCache<T>> layers;  // indexed by layer - first_layer
  std::size_t feature_layer = 0;

  /// Input of the graph's feature layer (final conv feature map).
  const Tensor<T>& features() const;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  ForwardCache<T> cache;
};

/// Full forward pass; train phase updates batch-norm running statistics and
/// samples dropout masks from rng.
template <typename T>
ForwardResult<T> forward(ModelGraph<T>& g, const Tensor<T>& x, Phase phase, Rng& rng);

/// Infer-phase forward that keeps the cache; the graph is not modified.
template <typename T>
ForwardResult<T> forward_infer(const ModelGraph<T>& g, const Tensor<T>& x);

/// Infer-phase forward without keeping a cache.
template <typename T>
Tensor<T> predict_logits(const ModelGraph<T>& g, const Tensor<T>& x);

/// Runs layers [first, layers.size()) starting from an intermediate tensor.
template <typename T>
ForwardResult<T> forward_from(ModelGraph<T>& g, std::size_t first, const Tensor<T>& x, Phase phase, Rng& rng,
                              bool keep_cache = true);

/// Gradients aligned with trainable_parameters().
template <typename T>
struct Gradients {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
};

/// Full backward pass from d_logits. Adds 2·l2·w to every conv/dense weight
/// gradient. Requires a train-phase cache covering the whole graph.
template <typename T>
Gradients<T> backward(ModelGraph<T>& g, const ForwardCache<T>& cache, const Tensor<T>& d_logits, double l2_lambda);

/// Gradient of the graph output w.r.t. the input of layer `stop`, using a
/// cache of either phase. Parameter gradients are not accumulated.
template <typename T>
Tensor<T> input_gradient(const ModelGraph<T>& g, const ForwardCache<T>& cache, const Tensor<T>& d_logits,
                         std::size_t stop);

struct LayerParamCount {
  std::string layer;
  std::string kind;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
};

struct ParamCount {
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;  // batch-norm running statistics
  std::vector<LayerParamCount> per_layer;

  std::size_t total() const { return trainable + non_trainable; }
};

template <typename T>
ParamCount param_count(const ModelGraph<T>& g);

}  // namespace ernet
