#pragma once

// Training loop: Adam with bias correction, batch size 1, a single 0.9
// learning-rate step at the configured decay epoch, per-iteration loss
// logging, and a hard abort on non-finite losses.

#include <cmath>
#include <functional>
#include <vector>

#include "gfrnet/data.hpp"
#include "gfrnet/model.hpp"

namespace gfrnet {

template <class T>
class Adam {
 public:
  explicit Adam(T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<NamedParam<T>>& params, T lr) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].tensor.size(), T(0));
        v_[i].assign(params[i].tensor.size(), T(0));
      }
    }
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, T(t_));
    const T bc2 = T(1) - std::pow(beta2_, T(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& data = params[i].tensor.data();
      const auto& grad = params[i].tensor.grad();
      for (std::size_t k = 0; k < data.size(); ++k) {
        m_[i][k] = beta1_ * m_[i][k] + (T(1) - beta1_) * grad[k];
        v_[i][k] = beta2_ * v_[i][k] + (T(1) - beta2_) * grad[k] * grad[k];
        data[k] -= lr * (m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + eps_);
      }
    }
  }

  int t() const { return t_; }
  void set_t(int t) { t_ = t; }
  std::vector<std::vector<T>>& m() { return m_; }
  std::vector<std::vector<T>>& v() { return v_; }

 private:
  T beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct TrainConfig {
  float lr = 1e-5f;
  int epochs = 50;
  int decay_epoch = 40;   // first epoch that runs at the decayed rate
  float decay_factor = 0.9f;
  std::uint64_t seed = 1;
  bool augment = true;
  int max_iterations = 0;  // 0 = run all epochs
};

struct TrainRecord {
  int iteration;
  int epoch;
  float lr;
  double loss;
};

template <class T>
double param_l2_norm(const std::vector<NamedParam<T>>& params) {
  double acc = 0.0;
  for (const auto& p : params)
    for (T v : p.tensor.data()) acc += double(v) * double(v);
  return std::sqrt(acc);
}

// Runs epochs [start_epoch, cfg.epochs); the per-epoch callback fires after
// each completed epoch (checkpointing hook).
template <class T>
std::vector<TrainRecord> train_loop(GfrNet<T>& model, const Dataset& data, const TrainConfig& cfg,
                                    Adam<T>& opt, int start_epoch = 0,
                                    const std::function<void(int)>& on_epoch = {},
                                    const std::function<void(const TrainRecord&)>& on_iter = {}) {
  ParamRegistry<T> reg;
  model.collect(reg);

  std::vector<TrainRecord> log;
  Rng aug_rng(cfg.seed ^ 0x5DEECE66Dull);
  int iteration = start_epoch * int(data.size());
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const float lr = epoch >= cfg.decay_epoch ? cfg.lr * cfg.decay_factor : cfg.lr;
    for (std::size_t idx : data.epoch_order(cfg.seed + std::uint64_t(epoch))) {
      Sample s = data.get(idx);
      if (cfg.augment) s = augment(s, aug_rng);

      for (auto& p : reg.params) p.tensor.zero_grad();
      auto out = model.forward(s.aif, s.depth, s.slices, Phase::train);
      Tensor<T> loss = model.loss(out, s.gt);
      const double loss_val = double(loss.item());
      if (!std::isfinite(loss_val))
        throw NumericError("non-finite loss at iteration " + std::to_string(iteration) +
                           " (epoch " + std::to_string(epoch) + "); parameter L2 norm " +
                           std::to_string(param_l2_norm(reg.params)));
      loss.backward();
      opt.step(reg.params, T(lr));

      TrainRecord rec{iteration, epoch, lr, loss_val};
      log.push_back(rec);
      if (on_iter) on_iter(rec);
      ++iteration;
      if (cfg.max_iterations > 0 && iteration >= cfg.max_iterations) {
        if (on_epoch) on_epoch(epoch);
        return log;
      }
    }
    if (on_epoch) on_epoch(epoch);
  }
  return log;
}

}  // namespace gfrnet
