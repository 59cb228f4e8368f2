#pragma once

#include <span>
#include <string>
#include <vector>

#include "bru/tensor.hpp"

namespace bru {

enum class OptimizerKind { SGD, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::SGD;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-3;

  static OptimizerConfig sgd(double lr) { return {OptimizerKind::SGD, lr}; }
  static OptimizerConfig adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                              double epsilon = 1e-3) {
    return {OptimizerKind::Adam, lr, beta1, beta2, epsilon};
  }

  /// Throws ConfigError unless lr > 0, 0 <= beta < 1 and epsilon > 0.
  void validate() const;
};

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& text);

/// p <- p - lr * g for every parameter.
template <typename T>
void sgd_step(std::span<BasicTensor<T>* const> params,
              std::span<const BasicTensor<T>* const> grads, double lr);

/// First and second moment estimates, zero-initialised on first use.
template <typename T>
struct AdamState {
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
};

/// Adam with bias correction; epsilon is added outside the square root:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps).
/// `step` is the 1-based update count.
template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params,
               std::span<const BasicTensor<T>* const> grads, AdamState<T>& state,
               const OptimizerConfig& config, long step);

/// Owns the update rule state for one training loop.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

  void step(std::span<BasicTensor<T>* const> params,
            std::span<const BasicTensor<T>* const> grads) {
    ++steps_;
    if (config_.kind == OptimizerKind::SGD)
      sgd_step<T>(params, grads, config_.learning_rate);
    else
      adam_step<T>(params, grads, adam_, config_, steps_);
  }

  long steps() const noexcept { return steps_; }
  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  OptimizerConfig config_;
  AdamState<T> adam_;
  long steps_ = 0;
};

}  // namespace bru
