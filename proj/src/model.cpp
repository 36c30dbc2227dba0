#include "ernet/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>

namespace ernet {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::basenet: return "basenet";
    case Variant::scnet: return "scnet";
    case Variant::scfcnet: return "scfcnet";
    case Variant::ernet: return "ernet";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "basenet") return Variant::basenet;
  if (lower == "scnet") return Variant::scnet;
  if (lower == "scfcnet") return Variant::scfcnet;
  if (lower == "ernet") return Variant::ernet;
  throw ArgumentError("unknown model variant '" + name + "' (expected basenet, scnet, scfcnet or ernet)");
}

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::sepconv: return "sepconv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::gap: return "gap";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
    case LayerKind::residual_begin: return "residual-begin";
    case LayerKind::residual_end: return "residual-end";
  }
  return "unknown";
}

// ---- parameter views ------------------------------------------------------

namespace {

template <typename LayerT, typename Fn>
void visit_params(LayerT& layer, Fn&& fn) {
  const std::string& n = layer.spec.name;
  switch (layer.spec.kind) {
    case LayerKind::conv:
      fn(n + ".w", layer.conv.weights, true, true);
      fn(n + ".b", layer.conv.bias, true, false);
      break;
    case LayerKind::sepconv:
      fn(n + ".dw", layer.depthwise.weights, true, true);
      fn(n + ".pw", layer.conv.weights, true, true);
      fn(n + ".b", layer.conv.bias, true, false);
      break;
    case LayerKind::batchnorm:
      fn(n + ".scale", layer.bn.scale, true, false);
      fn(n + ".shift", layer.bn.shift, true, false);
      fn(n + ".mean", layer.bn.running_mean, false, false);
      fn(n + ".var", layer.bn.running_var, false, false);
      break;
    case LayerKind::dense:
      fn(n + ".w", layer.dense_weights, true, true);
      fn(n + ".b", layer.dense_bias, true, false);
      break;
    case LayerKind::residual_end:
      if (layer.proj) {
        fn(n + ".proj.w", layer.proj->weights, true, true);
        fn(n + ".proj.b", layer.proj->bias, true, false);
      }
      break;
    default:
      break;
  }
}

}  // namespace

template <typename T>
std::vector<ParamRef<Tensor<T>>> ModelGraph<T>::parameters() {
  std::vector<ParamRef<Tensor<T>>> out;
  for (auto& layer : layers)
    visit_params(layer, [&](std::string name, Tensor<T>& t, bool trainable, bool decayed) {
      out.push_back({std::move(name), &t, trainable, decayed});
    });
  return out;
}

template <typename T>
std::vector<ParamRef<const Tensor<T>>> ModelGraph<T>::parameters() const {
  std::vector<ParamRef<const Tensor<T>>> out;
  for (const auto& layer : layers)
    visit_params(layer, [&](std::string name, const Tensor<T>& t, bool trainable, bool decayed) {
      out.push_back({std::move(name), &t, trainable, decayed});
    });
  return out;
}

template <typename T>
std::vector<ParamRef<Tensor<T>>> ModelGraph<T>::trainable_parameters() {
  auto all = parameters();
  std::erase_if(all, [](const auto& p) { return !p.trainable; });
  return all;
}

template <typename T>
template <typename U>
ModelGraph<U> ModelGraph<T>::cast() const {
  ModelGraph<U> out;
  out.name = name;
  out.variant = variant;
  out.input_shape = input_shape;
  out.class_count = class_count;
  out.feature_layer = feature_layer;
  for (const auto& src : layers) {
    Layer<U> dst;
    dst.spec = src.spec;
    auto conv_cast = [](const ConvParams<T>& c) {
      ConvParams<U> r;
      if (!c.weights.empty()) r.weights = c.weights.template cast<U>();
      if (!c.bias.empty()) r.bias = c.bias.template cast<U>();
      r.stride = c.stride;
      r.padding = c.padding;
      return r;
    };
    dst.conv = conv_cast(src.conv);
    if (!src.depthwise.weights.empty()) dst.depthwise.weights = src.depthwise.weights.template cast<U>();
    if (!src.depthwise.bias.empty()) dst.depthwise.bias = src.depthwise.bias.template cast<U>();
    dst.depthwise.padding = src.depthwise.padding;
    if (!src.bn.scale.empty()) {
      dst.bn.scale = src.bn.scale.template cast<U>();
      dst.bn.shift = src.bn.shift.template cast<U>();
      dst.bn.running_mean = src.bn.running_mean.template cast<U>();
      dst.bn.running_var = src.bn.running_var.template cast<U>();
    }
    dst.bn.momentum = src.bn.momentum;
    dst.bn.epsilon = src.bn.epsilon;
    if (!src.dense_weights.empty()) {
      dst.dense_weights = src.dense_weights.template cast<U>();
      dst.dense_bias = src.dense_bias.template cast<U>();
    }
    if (src.proj) dst.proj = conv_cast(*src.proj);
    out.layers.push_back(std::move(dst));
  }
  return out;
}

// ---- builders -------------------------------------------------------------

namespace {

constexpr std::array<Extent, 7> kBlockFilters = {16, 32, 64, 128, 256, 256, 256};
constexpr int kPooledBlocks = 5;
constexpr Extent kDenseHidden = 128;
constexpr double kDropoutRate = 0.5;

template <typename T>
class GraphBuilder {
 public:
  GraphBuilder(ModelGraph<T>& g, Rng& rng, Extent channels) : g_(g), rng_(rng), channels_(channels) {}

  void conv(const std::string& name, Extent filters, Extent kernel) {
    Layer<T> l = make(LayerKind::conv, name);
    l.spec.filters = filters;
    l.spec.kernel = kernel;
    l.conv.weights = he_normal_init<T>({kernel, kernel, channels_, filters}, kernel * kernel * channels_, rng_);
    l.conv.bias = Tensor<T>({filters}, T(0));
    channels_ = filters;
    push(std::move(l));
  }

  void sepconv(const std::string& name, Extent filters, Extent kernel) {
    Layer<T> l = make(LayerKind::sepconv, name);
    l.spec.filters = filters;
    l.spec.kernel = kernel;
    l.depthwise.weights = he_normal_init<T>({kernel, kernel, channels_}, kernel * kernel, rng_);
    l.conv.weights = he_normal_init<T>({1, 1, channels_, filters}, channels_, rng_);
    l.conv.bias = Tensor<T>({filters}, T(0));
    channels_ = filters;
    push(std::move(l));
  }

  void batchnorm(const std::string& name) {
    Layer<T> l = make(LayerKind::batchnorm, name);
    l.bn = BatchNormParams<T>::identity(channels_);
    push(std::move(l));
  }

  void dense(const std::string& name, Extent in, Extent out) {
    Layer<T> l = make(LayerKind::dense, name);
    l.spec.filters = out;
    l.dense_weights = he_normal_init<T>({in, out}, in, rng_);
    l.dense_bias = Tensor<T>({out}, T(0));
    push(std::move(l));
  }

  void dropout(const std::string& name, double rate) {
    Layer<T> l = make(LayerKind::dropout, name);
    l.spec.rate = rate;
    push(std::move(l));
  }

  void simple(LayerKind kind, const std::string& name) { push(make(kind, name)); }

  void residual_begin(const std::string& name) {
    open_.push_back({g_.layers.size(), channels_});
    push(make(LayerKind::residual_begin, name));
  }

  void residual_end(const std::string& name) {
    const auto [begin, in_channels] = open_.back();
    open_.pop_back();
    Layer<T> l = make(LayerKind::residual_end, name);
    l.spec.partner = begin;
    if (in_channels != channels_) {
      l.spec.projection = true;
      ConvParams<T> p;
      p.weights = he_normal_init<T>({1, 1, in_channels, channels_}, in_channels, rng_);
      p.bias = Tensor<T>({channels_}, T(0));
      l.proj = std::move(p);
    }
    g_.layers[begin].spec.partner = g_.layers.size();
    push(std::move(l));
  }

  void mark_features() { g_.feature_layer = g_.layers.size(); }

 private:
  Layer<T> make(LayerKind kind, const std::string& name) {
    Layer<T> l;
    l.spec.kind = kind;
    l.spec.name = name;
    return l;
  }
  void push(Layer<T> l) { g_.layers.push_back(std::move(l)); }

  ModelGraph<T>& g_;
  Rng& rng_;
  Extent channels_;
  std::vector<std::pair<std::size_t, Extent>> open_;
};

}  // namespace

template <typename T>
ModelGraph<T> build_model(Variant variant, const Shape& input_shape, Extent class_count, Rng& rng) {
  if (input_shape.size() != 3) throw ArgumentError("input shape must be (height, width, channels)");
  if (input_shape[0] < 64 || input_shape[1] < 64) throw ArgumentError("input height and width must be >= 64");
  if (input_shape[2] < 1) throw ArgumentError("input channel count must be >= 1");
  if (class_count < 2) throw ArgumentError("class_count must be >= 2");

  ModelGraph<T> g;
  g.name = variant_name(variant);
  g.variant = variant;
  g.input_shape = input_shape;
  g.class_count = class_count;

  const bool separable = variant != Variant::basenet;
  const bool residual = variant == Variant::ernet;
  const bool conv_head = variant == Variant::scfcnet || variant == Variant::ernet;

  GraphBuilder<T> b(g, rng, input_shape[2]);
  for (int i = 0; i < static_cast<int>(kBlockFilters.size()); ++i) {
    const std::string blk = "b" + std::to_string(i + 1);
    const Extent kernel = i == 0 ? 5 : 3;
    const bool skip = residual && i > 0;
    if (skip) b.residual_begin(blk + ".skip");
    if (separable && i > 0)
      b.sepconv(blk + ".sep", kBlockFilters[i], kernel);
    else
      b.conv(blk + ".conv", kBlockFilters[i], kernel);
    b.batchnorm(blk + ".bn");
    b.simple(LayerKind::relu, blk + ".relu");
    if (skip) b.residual_end(blk + ".merge");
    if (i < kPooledBlocks) b.simple(LayerKind::maxpool, blk + ".pool");
  }

  b.mark_features();
  if (conv_head) {
    b.simple(LayerKind::gap, "head.gap");
    b.dropout("head.drop", kDropoutRate);
    b.conv("head.conv", class_count, 1);
    b.simple(LayerKind::flatten, "head.flatten");
  } else {
    b.simple(LayerKind::flatten, "head.flatten");
    const std::vector<Shape> shapes = infer_shapes(g, 1);
    const Shape& flat = shapes.back();
    b.dense("head.fc1", flat[1], kDenseHidden);
    b.simple(LayerKind::relu, "head.relu");
    b.dropout("head.drop", kDropoutRate);
    b.dense("head.fc2", kDenseHidden, class_count);
  }

  const auto shapes = infer_shapes(g, 1);
  if (shapes.back() != Shape{1, class_count}) throw ShapeError("model head does not produce (batch, classes)");
  return g;
}

template <typename T>
std::vector<Shape> infer_shapes(const ModelGraph<T>& g, Extent batch) {
  std::vector<Shape> out;
  Shape s{batch, g.input_shape[0], g.input_shape[1], g.input_shape[2]};
  std::vector<Shape> skips;
  for (const auto& l : g.layers) {
    const std::string where = " at layer " + l.spec.name;
    switch (l.spec.kind) {
      case LayerKind::conv:
        if (s.size() != 4 || s[3] != l.conv.in_channels()) throw ShapeError("channel mismatch" + where);
        s[3] = l.conv.out_channels();
        break;
      case LayerKind::sepconv:
        if (s.size() != 4 || s[3] != l.depthwise.channels()) throw ShapeError("channel mismatch" + where);
        s[3] = l.conv.out_channels();
        break;
      case LayerKind::maxpool:
        if (s.size() != 4 || s[1] < 2 || s[2] < 2) throw ShapeError("spatial extent < 2" + where);
        s[1] /= 2;
        s[2] /= 2;
        break;
      case LayerKind::batchnorm:
        if (s.back() != l.bn.channels()) throw ShapeError("channel mismatch" + where);
        break;
      case LayerKind::gap:
        if (s.size() != 4) throw ShapeError("expected 4-D input" + where);
        s = {s[0], 1, 1, s[3]};
        break;
      case LayerKind::flatten: {
        Extent f = 1;
        for (std::size_t i = 1; i < s.size(); ++i) f *= s[i];
        s = {s[0], f};
        break;
      }
      case LayerKind::dense:
        if (s.size() != 2 || s[1] != l.dense_weights.dim(0)) throw ShapeError("feature mismatch" + where);
        s[1] = l.dense_weights.dim(1);
        break;
      case LayerKind::residual_begin:
        skips.push_back(s);
        break;
      case LayerKind::residual_end: {
        if (skips.empty()) throw ShapeError("unmatched residual end" + where);
        const Shape in = skips.back();
        skips.pop_back();
        if (in[1] != s[1] || in[2] != s[2]) throw ShapeError("residual spatial mismatch" + where);
        if (l.proj ? (l.proj->in_channels() != in[3] || l.proj->out_channels() != s[3]) : in[3] != s[3])
          throw ShapeError("residual channel mismatch" + where);
        break;
      }
      case LayerKind::relu:
      case LayerKind::dropout:
        break;
    }
    out.push_back(s);
  }
  if (!skips.empty()) throw ShapeError("unterminated residual block");
  return out;
}

template <typename T>
std::vector<Extent> spatial_trace(const ModelGraph<T>& g) {
  const auto shapes = infer_shapes(g, 1);
  std::vector<Extent> trace{g.input_shape[0]};
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    if (g.layers[i].spec.kind == LayerKind::maxpool) trace.push_back(shapes[i][1]);
  return trace;
}

// ---- execution ------------------------------------------------------------

template <typename T>
const Tensor<T>& ForwardCache<T>::features() const {
  if (feature_layer < first_layer || feature_layer - first_layer >= layers.size())
    throw StateError("cache does not cover the feature layer");
  return layers[feature_layer - first_layer].input;
}

namespace {

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  Extent f = 1;
  for (std::size_t i = 1; i < x.rank(); ++i) f *= x.dim(i);
  return x.reshaped({x.dim(0), f});
}

// Runs layers [first, end) on x. `layers` is mutable only for batch-norm
// running statistics in train phase.
template <typename T>
Tensor<T> run_layers(std::vector<Layer<T>>& layers, std::size_t first, Tensor<T> x, Phase phase, Rng* rng,
                     ForwardCache<T>* cache) {
  std::vector<Tensor<T>> skips;
  for (std::size_t i = first; i < layers.size(); ++i) {
    Layer<T>& l = layers[i];
    LayerCache<T>* lc = cache ? &cache->layers[i - first] : nullptr;
    if (lc) lc->input = x;
    switch (l.spec.kind) {
      case LayerKind::conv:
        x = conv2d_forward(x, l.conv);
        break;
      case LayerKind::sepconv:
        x = separable_conv_forward(x, l.depthwise, l.conv);
        break;
      case LayerKind::maxpool:
        x = maxpool2_forward(x);
        break;
      case LayerKind::batchnorm: {
        BatchNormCache<T> bc;
        x = batch_norm_forward(x, l.bn, phase, &bc);
        if (lc) lc->bn = std::move(bc);
        break;
      }
      case LayerKind::relu:
        x = relu_forward(x);
        break;
      case LayerKind::gap:
        x = global_avg_pool_forward(x);
        break;
      case LayerKind::dense:
        x = dense_forward(x, l.dense_weights, l.dense_bias);
        break;
      case LayerKind::dropout: {
        if (phase == Phase::train && !rng) throw ArgumentError("train-phase dropout needs an rng");
        Rng dummy(0);
        auto r = dropout_forward(x, l.spec.rate, phase, rng ? *rng : dummy);
        x = std::move(r.output);
        if (lc) lc->mask = std::move(r.mask);
        break;
      }
      case LayerKind::flatten:
        x = flatten(x);
        break;
      case LayerKind::residual_begin:
        skips.push_back(x);
        break;
      case LayerKind::residual_end: {
        if (skips.empty()) throw StateError("residual end without a matching begin in the executed range");
        Tensor<T> skip = std::move(skips.back());
        skips.pop_back();
        x = residual_merge_forward(skip, x, l.proj ? &*l.proj : nullptr);
        if (lc) lc->skip = std::move(skip);
        break;
      }
    }
  }
  return x;
}

template <typename T>
void check_input(const ModelGraph<T>& g, const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(1) != g.input_shape[0] || x.dim(2) != g.input_shape[1] ||
      x.dim(3) != g.input_shape[2])
    throw ShapeError("input " + shape_str(x.shape()) + " does not match model input (batch," +
                     std::to_string(g.input_shape[0]) + "," + std::to_string(g.input_shape[1]) + "," +
                     std::to_string(g.input_shape[2]) + ")");
}

// Backpropagates from the graph output down to the input of layer `stop`.
template <typename T>
Tensor<T> backprop(const ModelGraph<T>& g, const ForwardCache<T>& cache, Tensor<T> upstream, std::size_t stop,
                   Gradients<T>* grads) {
  if (stop < cache.first_layer) throw StateError("cache does not reach the requested layer");
  if (cache.layers.size() != g.layers.size() - cache.first_layer) throw StateError("cache does not match graph");
  std::vector<Tensor<T>> pending(g.layers.size());
  std::size_t slot = grads ? grads->tensors.size() : 0;
  auto take = [&](const Tensor<T>& d) {
    // Gradients are filled back to front, matching trainable_parameters().
    add_inplace(grads->tensors[--slot], d);
  };

  for (std::size_t i = g.layers.size(); i-- > stop;) {
    const Layer<T>& l = g.layers[i];
    const LayerCache<T>& lc = cache.layers[i - cache.first_layer];
    switch (l.spec.kind) {
      case LayerKind::conv: {
        auto r = conv2d_backward(lc.input, l.conv, upstream);
        if (grads) {
          take(r.d_params[1]);
          take(r.d_params[0]);
        }
        upstream = std::move(r.d_input);
        break;
      }
      case LayerKind::sepconv: {
        auto r = separable_conv_backward(lc.input, l.depthwise, l.conv, upstream);
        if (grads) {
          take(r.d_params[2]);
          take(r.d_params[1]);
          take(r.d_params[0]);
        }
        upstream = std::move(r.d_input);
        break;
      }
      case LayerKind::maxpool:
        upstream = maxpool2_backward(lc.input, upstream).d_input;
        break;
      case LayerKind::batchnorm: {
        auto r = batch_norm_backward(lc.input, l.bn, lc.bn, upstream);
        if (grads) {
          take(r.d_params[1]);
          take(r.d_params[0]);
        }
        upstream = std::move(r.d_input);
        break;
      }
      case LayerKind::relu:
        upstream = relu_backward(lc.input, upstream).d_input;
        break;
      case LayerKind::gap:
        upstream = global_avg_pool_backward(lc.input.shape(), upstream).d_input;
        break;
      case LayerKind::dense: {
        auto r = dense_backward(lc.input, l.dense_weights, upstream);
        if (grads) {
          take(r.d_params[1]);
          take(r.d_params[0]);
        }
        upstream = std::move(r.d_input);
        break;
      }
      case LayerKind::dropout:
        upstream = dropout_backward(lc.mask, upstream).d_input;
        break;
      case LayerKind::flatten:
        upstream = upstream.reshaped(lc.input.shape());
        break;
      case LayerKind::residual_end: {
        auto r = residual_merge_backward(lc.skip, lc.input, l.proj ? &*l.proj : nullptr, upstream);
        if (grads && l.proj) {
          take(r.d_proj[1]);
          take(r.d_proj[0]);
        }
        if (l.spec.partner < stop) throw StateError("backprop stop lies inside a residual block");
        pending[l.spec.partner] = std::move(r.d_block_in);
        upstream = std::move(r.d_block_out);
        break;
      }
      case LayerKind::residual_begin:
        if (!pending[i].empty()) add_inplace(upstream, pending[i]);
        break;
    }
  }
  return upstream;
}

}  // namespace

template <typename T>
ForwardResult<T> forward_from(ModelGraph<T>& g, std::size_t first, const Tensor<T>& x, Phase phase, Rng& rng,
                              bool keep_cache) {
  if (first > g.layers.size()) throw ArgumentError("forward_from: layer index out of range");
  ForwardResult<T> r;
  r.cache.phase = phase;
  r.cache.first_layer = first;
  r.cache.feature_layer = g.feature_layer;
  if (keep_cache) r.cache.layers.resize(g.layers.size() - first);
  r.logits = run_layers(g.layers, first, x, phase, &rng, keep_cache ? &r.cache : nullptr);
  return r;
}

template <typename T>
ForwardResult<T> forward(ModelGraph<T>& g, const Tensor<T>& x, Phase phase, Rng& rng) {
  check_input(g, x);
  return forward_from(g, 0, x, phase, rng, true);
}

template <typename T>
ForwardResult<T> forward_infer(const ModelGraph<T>& g, const Tensor<T>& x) {
  check_input(g, x);
  ForwardResult<T> r;
  r.cache.phase = Phase::infer;
  r.cache.feature_layer = g.feature_layer;
  r.cache.layers.resize(g.layers.size());
  auto& layers = const_cast<std::vector<Layer<T>>&>(g.layers);
  r.logits = run_layers<T>(layers, 0, x, Phase::infer, nullptr, &r.cache);
  return r;
}

template <typename T>
Tensor<T> predict_logits(const ModelGraph<T>& g, const Tensor<T>& x) {
  check_input(g, x);
  // Infer phase never writes to the layers.
  auto& layers = const_cast<std::vector<Layer<T>>&>(g.layers);
  return run_layers<T>(layers, 0, x, Phase::infer, nullptr, nullptr);
}

template <typename T>
Tensor<T>& Gradients<T>::at(const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ArgumentError("no gradient named " + name);
  return tensors[static_cast<std::size_t>(it - names.begin())];
}

template <typename T>
const Tensor<T>& Gradients<T>::at(const std::string& name) const {
  return const_cast<Gradients<T>*>(this)->at(name);
}

template <typename T>
Gradients<T> backward(ModelGraph<T>& g, const ForwardCache<T>& cache, const Tensor<T>& d_logits, double l2_lambda) {
  if (cache.phase != Phase::train) throw StateError("backward requires a train-phase forward cache");
  if (cache.first_layer != 0 || cache.layers.size() != g.layers.size())
    throw StateError("backward requires a cache covering the whole graph");
  Gradients<T> grads;
  auto params = g.trainable_parameters();
  for (const auto& p : params) {
    grads.names.push_back(p.name);
    grads.tensors.emplace_back(p.tensor->shape(), T(0));
  }
  backprop(g, cache, d_logits, 0, &grads);
  if (l2_lambda != 0.0) {
    const T coeff = static_cast<T>(2.0 * l2_lambda);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].decayed) continue;
      T* dst = grads.tensors[i].raw();
      const T* w = params[i].tensor->raw();
      for (std::size_t k = 0; k < grads.tensors[i].size(); ++k) dst[k] += coeff * w[k];
    }
  }
  return grads;
}

template <typename T>
Tensor<T> input_gradient(const ModelGraph<T>& g, const ForwardCache<T>& cache, const Tensor<T>& d_logits,
                         std::size_t stop) {
  return backprop<T>(g, cache, d_logits, stop, nullptr);
}

template <typename T>
ParamCount param_count(const ModelGraph<T>& g) {
  ParamCount pc;
  for (const auto& layer : g.layers) {
    LayerParamCount lp{layer.spec.name, layer_kind_name(layer.spec.kind)};
    visit_params(layer, [&](const std::string&, const Tensor<T>& t, bool trainable, bool) {
      (trainable ? lp.trainable : lp.non_trainable) += t.size();
    });
    pc.trainable += lp.trainable;
    pc.non_trainable += lp.non_trainable;
    if (lp.trainable + lp.non_trainable > 0) pc.per_layer.push_back(std::move(lp));
  }
  return pc;
}

#define ERNET_INSTANTIATE_MODEL(T)                                                                             \
  template struct ModelGraph<T>;                                                                               \
  template struct ForwardCache<T>;                                                                             \
  template struct Gradients<T>;                                                                                \
  template ModelGraph<T> build_model(Variant, const Shape&, Extent, Rng&);                                     \
  template std::vector<Shape> infer_shapes(const ModelGraph<T>&, Extent);                                      \
  template std::vector<Extent> spatial_trace(const ModelGraph<T>&);                                            \
  template ForwardResult<T> forward(ModelGraph<T>&, const Tensor<T>&, Phase, Rng&);                            \
  template ForwardResult<T> forward_from(ModelGraph<T>&, std::size_t, const Tensor<T>&, Phase, Rng&, bool);    \
  template Tensor<T> predict_logits(const ModelGraph<T>&, const Tensor<T>&);                                   \
  template ForwardResult<T> forward_infer(const ModelGraph<T>&, const Tensor<T>&);                             \
  template Gradients<T> backward(ModelGraph<T>&, const ForwardCache<T>&, const Tensor<T>&, double);            \
  template Tensor<T> input_gradient(const ModelGraph<T>&, const ForwardCache<T>&, const Tensor<T>&, std::size_t); \
  template ParamCount param_count(const ModelGraph<T>&);

ERNET_INSTANTIATE_MODEL(float)
ERNET_INSTANTIATE_MODEL(double)

template ModelGraph<double> ModelGraph<float>::cast<double>() const;
template ModelGraph<float> ModelGraph<double>::cast<float>() const;
template ModelGraph<float> ModelGraph<float>::cast<float>() const;
template ModelGraph<double> ModelGraph<double>::cast<double>() const;

#undef ERNET_INSTANTIATE_MODEL

}  // namespace ernet
