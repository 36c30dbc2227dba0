#include "ernet/train.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace ernet {

namespace {

template <typename T>
std::vector<Tensor<T>> snapshot(ModelGraph<T>& g) {
  std::vector<Tensor<T>> out;
  for (const auto& p : g.parameters()) out.push_back(*p.tensor);
  return out;
}

template <typename T>
void restore(ModelGraph<T>& g, const std::vector<Tensor<T>>& saved) {
  auto params = g.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) *params[i].tensor = saved[i];
}

}  // namespace

template <typename T>
TrainHistory train(ModelGraph<T>& g, BatchSource& data, const LabeledImages& val, const TrainConfig& cfg,
                   const TrainCallbacks& callbacks) {
  cfg.validate();
  TrainHistory history;
  Rng dropout_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);
  auto trainable = g.trainable_parameters();
  std::vector<Tensor<T>*> params;
  for (auto& p : trainable) params.push_back(p.tensor);
  AdamState<T> adam = AdamState<T>::for_params(params);
  const AdamHyper hyper{cfg.beta1, cfg.beta2, cfg.adam_epsilon};
  std::vector<Tensor<T>> best;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(epoch, cfg);
    double loss_sum = 0;
    const std::size_t before = data.images_emitted();
    for (int iter = 0; iter < cfg.iters_per_epoch; ++iter) {
      Batch batch = data.next();
      if (batch.images.dim(1) != g.input_shape[0] || batch.images.dim(2) != g.input_shape[1] ||
          batch.labels.dim(1) != g.class_count)
        throw ShapeError("training batch does not match the model input or class count");
      const Tensor<T> x = batch.images.template cast<T>();
      const Tensor<T> y = batch.labels.template cast<T>();
      ForwardResult<T> fr = forward(g, x, Phase::train, dropout_rng);
      const SoftmaxLoss<T> sl = softmax_cross_entropy(fr.logits, y);
      if (!std::isfinite(static_cast<double>(sl.loss))) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", iteration " << iter << ", lr " << rec.lr;
        throw DivergenceError(msg.str());
      }
      loss_sum += static_cast<double>(sl.loss);
      const Gradients<T> grads = backward(g, fr.cache, softmax_cross_entropy_backward(sl.probs, y), cfg.l2_lambda);
      adam_step<T>(params, grads.tensors, adam, rec.lr, hyper);
    }
    rec.images = data.images_emitted() - before;
    rec.train_loss = loss_sum / cfg.iters_per_epoch;

    if (!val.images.empty()) {
      const EvalReport r = evaluate(g, val);
      rec.val_avg_acc = r.avg_acc;
      rec.val_plain_acc = r.plain_acc;
      if (r.avg_acc > history.best_val_avg_acc) {
        history.best_val_avg_acc = r.avg_acc;
        history.best_epoch = epoch;
        best = snapshot(g);
      }
    }
    history.epochs.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
    if (callbacks.should_stop && callbacks.should_stop(rec)) {
      history.stopped_early = epoch + 1 < cfg.epochs;
      break;
    }
  }
  if (!best.empty()) restore(g, best);
  return history;
}

std::string history_table(const TrainHistory& h) {
  std::ostringstream os;
  os << "epoch        lr     train_loss  val_avg_acc  val_plain_acc  images\n";
  for (const auto& e : h.epochs) {
    os << std::setw(5) << e.epoch << "  " << std::scientific << std::setprecision(4) << e.lr << "  " << std::fixed
       << std::setprecision(6) << std::setw(10) << e.train_loss << "  " << std::setw(11) << e.val_avg_acc << "  "
       << std::setw(13) << e.val_plain_acc << "  " << std::setw(6) << e.images << '\n';
  }
  os << "best epoch " << h.best_epoch << " (val avg acc " << std::fixed << std::setprecision(6)
     << h.best_val_avg_acc << ")\n";
  return os.str();
}

std::string history_kv(const TrainHistory& h) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "epochs=" << h.epochs.size() << '\n' << "best_epoch=" << h.best_epoch << '\n'
     << "best_val_avg_acc=" << h.best_val_avg_acc << '\n';
  for (const auto& e : h.epochs)
    os << "epoch." << e.epoch << "=lr:" << e.lr << ",train_loss:" << e.train_loss << ",val_avg_acc:" << e.val_avg_acc
       << ",val_plain_acc:" << e.val_plain_acc << ",images:" << e.images << '\n';
  return os.str();
}

template TrainHistory train(ModelGraph<float>&, BatchSource&, const LabeledImages&, const TrainConfig&,
                            const TrainCallbacks&);
template TrainHistory train(ModelGraph<double>&, BatchSource&, const LabeledImages&, const TrainConfig&,
                            const TrainCallbacks&);

}  // namespace ernet
