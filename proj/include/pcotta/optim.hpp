#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "pcotta/common.hpp"
#include "pcotta/tape.hpp"

namespace pcotta {

/// Decoupled-weight-decay Adam with a cosine learning-rate schedule decaying
/// from the base rate to zero over `horizon` steps. Moments are keyed by the
/// position of each parameter in the list given at construction, so the same
/// ordering must be used for every step (and for checkpointing).
template <typename T>
class AdamW {
 public:
  struct Config {
    T lr = T(1e-3);
    T weight_decay = T(0.05);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    int64_t horizon = 0;  // 0 = constant learning rate
  };

  AdamW(std::vector<Parameter<T>*> params, Config cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  T lr_at(int64_t step) const {
    if (cfg_.horizon <= 0) return cfg_.lr;
    double t = std::min<double>(double(step), double(cfg_.horizon));
    return T(double(cfg_.lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t / double(cfg_.horizon))));
  }

  /// One update over all trainable parameters; zeroes every gradient after.
  void step() {
    T lr = lr_at(step_count_);
    ++step_count_;
    double bc1 = 1.0 - std::pow(double(cfg_.beta1), double(step_count_));
    double bc2 = 1.0 - std::pow(double(cfg_.beta2), double(step_count_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      Parameter<T>& p = *params_[pi];
      if (p.trainable) {
        Tensor<T>& m = m_[pi];
        Tensor<T>& v = v_[pi];
        for (size_t i = 0; i < p.value.data.size(); ++i) {
          T g = p.grad.data[i];
          m.data[i] = cfg_.beta1 * m.data[i] + (T(1) - cfg_.beta1) * g;
          v.data[i] = cfg_.beta2 * v.data[i] + (T(1) - cfg_.beta2) * g * g;
          T mhat = T(double(m.data[i]) / bc1);
          T vhat = T(double(v.data[i]) / bc2);
          p.value.data[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                   cfg_.weight_decay * p.value.data[i]);
        }
      }
      p.zero_grad();
    }
  }

  int64_t step_count() const { return step_count_; }
  const Config& config() const { return cfg_; }
  const std::vector<Parameter<T>*>& params() const { return params_; }

  // Checkpoint access: moments and step counter, in parameter-list order.
  std::vector<Tensor<T>>& moment1() { return m_; }
  std::vector<Tensor<T>>& moment2() { return v_; }
  void set_step_count(int64_t s) { step_count_ = s; }

 private:
  std::vector<Parameter<T>*> params_;
  Config cfg_;
  std::vector<Tensor<T>> m_, v_;
  int64_t step_count_ = 0;
};

}  // namespace pcotta
