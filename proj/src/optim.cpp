#include "ernet/optim.hpp"

#include <cmath>

namespace ernet {

void TrainConfig::validate() const {
  if (epochs < 1 || iters_per_epoch < 1 || batch_size < 1 || decay_every < 1)
    throw ArgumentError("epochs, iterations, batch size and decay interval must be positive");
  if (!(lr0 > 0)) throw ArgumentError("learning rate must be positive");
  if (!(decay_factor > 0 && decay_factor < 1)) throw ArgumentError("decay factor must be in (0, 1)");
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) throw ArgumentError("Adam betas must be in (0, 1)");
  if (!(adam_epsilon > 0)) throw ArgumentError("Adam epsilon must be positive");
  if (l2_lambda < 0) throw ArgumentError("L2 coefficient must be non-negative");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ArgumentError("lr_at: epoch must be >= 0");
  return cfg.lr0 * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

template <typename T>
AdamState<T> AdamState<T>::for_params(std::span<Tensor<T>* const> params) {
  AdamState<T> s;
  for (const Tensor<T>* p : params) {
    s.first_moment.emplace_back(p->shape(), T(0));
    s.second_moment.emplace_back(p->shape(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state, double lr,
               AdamHyper hyper) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
  if (state.first_moment.empty() && !params.empty()) state = AdamState<T>::for_params(params);
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i].shape() || state.first_moment[i].shape() != grads[i].shape())
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));

  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(hyper.beta1), b2 = static_cast<T>(hyper.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(hyper.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(hyper.beta2, t)));
  const T rate = static_cast<T>(lr), eps = static_cast<T>(hyper.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* w = params[i]->raw();
    const T* g = grads[i].raw();
    T* m = state.first_moment[i].raw();
    T* v = state.second_moment[i].raw();
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      w[k] -= rate * (m[k] * c1) / (std::sqrt(v[k] * c2) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<Tensor<float>* const>, std::span<const Tensor<float>>, AdamState<float>&, double,
                        AdamHyper);
template void adam_step(std::span<Tensor<double>* const>, std::span<const Tensor<double>>, AdamState<double>&, double,
                        AdamHyper);

}  // namespace ernet
