#pragma once

// Forward and backward kernels for every layer type used by the model zoo.
//
// All feature maps are (batch, height, width, channels). Convolutions are
// cross-correlations (no kernel flip) and run at stride 1; downsampling is
// done by max pooling only. Backward functions recompute what they need from
// the forward inputs instead of hiding state in the parameter structs.

#include <optional>
#include <vector>

#include "ernet/rng.hpp"
#include "ernet/tensor.hpp"

namespace ernet {

enum class PaddingMode { same, valid };
enum class Phase { train, infer };

template <typename T>
struct ConvParams {
  Tensor<T> weights;  // (kh, kw, in_ch, out_ch)
  Tensor<T> bias;     // (out_ch)
  Extent stride = 1;
  PaddingMode padding = PaddingMode::same;

  Extent kernel_h() const { return weights.dim(0); }
  Extent kernel_w() const { return weights.dim(1); }
  Extent in_channels() const { return weights.dim(2); }
  Extent out_channels() const { return weights.dim(3); }
  void validate() const;
};

/// Per-channel spatial filter. An empty bias means "no bias".
template <typename T>
struct DepthwiseParams {
  Tensor<T> weights;  // (kh, kw, ch)
  Tensor<T> bias;
  Extent stride = 1;
  PaddingMode padding = PaddingMode::same;

  Extent channels() const { return weights.dim(2); }
  void validate() const;
};

template <typename T>
struct BatchNormParams {
  Tensor<T> scale, shift, running_mean, running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;

  static BatchNormParams identity(Extent channels);
  Extent channels() const { return scale.dim(0); }
  void validate() const;
};

/// Gradient w.r.t. the op input plus one tensor per parameter, in the order
/// documented at each backward function.
template <typename T>
struct GradBundle {
  Tensor<T> d_input;
  std::vector<Tensor<T>> d_params;
};

// ---- convolution ----------------------------------------------------------

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p);
/// d_params = {d_weights, d_bias}
template <typename T>
GradBundle<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& upstream);

template <typename T>
Tensor<T> depthwise_conv_forward(const Tensor<T>& x, const DepthwiseParams<T>& p);
/// d_params = {d_weights} or {d_weights, d_bias} when the op has a bias.
template <typename T>
GradBundle<T> depthwise_conv_backward(const Tensor<T>& x, const DepthwiseParams<T>& p,
                                      const Tensor<T>& upstream);

/// Depthwise filter followed by a 1×1 pointwise convolution.
template <typename T>
Tensor<T> separable_conv_forward(const Tensor<T>& x, const DepthwiseParams<T>& dw,
                                 const ConvParams<T>& pw);
/// d_params = depthwise grads followed by {d_pw_weights, d_pw_bias}.
template <typename T>
GradBundle<T> separable_conv_backward(const Tensor<T>& x, const DepthwiseParams<T>& dw,
                                      const ConvParams<T>& pw, const Tensor<T>& upstream);

// ---- pooling / activations ------------------------------------------------

/// 2×2 window, stride 2, floor semantics on odd extents.
template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x);
/// Routes each window's gradient to its first maximum in row-major order.
template <typename T>
GradBundle<T> maxpool2_backward(const Tensor<T>& x, const Tensor<T>& upstream);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
template <typename T>
GradBundle<T> relu_backward(const Tensor<T>& x, const Tensor<T>& upstream);

/// (batch, h, w, ch) -> (batch, 1, 1, ch)
template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x);
template <typename T>
GradBundle<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& upstream);

// ---- batch normalisation --------------------------------------------------

template <typename T>
struct BatchNormCache {
  Phase phase = Phase::infer;
  std::vector<T> mean;
  std::vector<T> inv_std;
};

/// Train phase normalises with batch statistics over (batch, h, w) and folds
/// them into the running statistics; infer phase uses the running statistics.
template <typename T>
Tensor<T> batch_norm_forward(const Tensor<T>& x, BatchNormParams<T>& p, Phase phase,
                             BatchNormCache<T>* cache = nullptr);
/// d_params = {d_scale, d_shift}
template <typename T>
GradBundle<T> batch_norm_backward(const Tensor<T>& x, const BatchNormParams<T>& p,
                                  const BatchNormCache<T>& cache, const Tensor<T>& upstream);

// ---- dense / dropout / loss -----------------------------------------------

/// x: (batch, in), weights: (in, out), bias: (out).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);
/// d_params = {d_weights, d_bias}
template <typename T>
GradBundle<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& upstream);

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  Tensor<T> mask;  // 0 or 1/(1-rate) per element; all ones at infer phase
};

/// Inverted dropout.
template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& x, double rate, Phase phase, Rng& rng);
template <typename T>
GradBundle<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& upstream);

template <typename T>
struct SoftmaxLoss {
  T loss;
  Tensor<T> probs;
};

/// Max-subtracted softmax and batch-mean cross entropy against one-hot rows.
template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels);
/// (probs - labels) / batch
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, const Tensor<T>& labels);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

// ---- residual -------------------------------------------------------------

template <typename T>
struct ResidualGrads {
  Tensor<T> d_block_in;   // skip path contribution only
  Tensor<T> d_block_out;
  std::vector<Tensor<T>> d_proj;  // {d_weights, d_bias} when projected
};

/// out = block_out + (proj ? conv1x1(block_in) : block_in)
template <typename T>
Tensor<T> residual_merge_forward(const Tensor<T>& block_in, const Tensor<T>& block_out,
                                 const ConvParams<T>* proj);
template <typename T>
ResidualGrads<T> residual_merge_backward(const Tensor<T>& block_in, const Tensor<T>& block_out,
                                         const ConvParams<T>* proj, const Tensor<T>& upstream);

}  // namespace ernet
