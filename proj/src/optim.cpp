#include "bru/optim.hpp"

#include <cmath>

#include "bru/errors.hpp"

namespace bru {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be positive");
  if (kind == OptimizerKind::Adam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  }
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::SGD ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd" || text == "SGD") return OptimizerKind::SGD;
  if (text == "adam" || text == "Adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + text + "'");
}

namespace {

template <typename T>
void check_pairing(std::span<BasicTensor<T>* const> params,
                   std::span<const BasicTensor<T>* const> grads) {
  if (params.size() != grads.size()) throw ShapeError("parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i]->shape())
      throw ShapeError("gradient shape " + grads[i]->shape().str() + " does not match " +
                       params[i]->shape().str());
}

}  // namespace

template <typename T>
void sgd_step(std::span<BasicTensor<T>* const> params,
              std::span<const BasicTensor<T>* const> grads, double lr) {
  check_pairing(params, grads);
  const T eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->data();
    const T* g = grads[i]->data();
    for (std::size_t j = 0; j < params[i]->size(); ++j) p[j] -= eta * g[j];
  }
}

template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params,
               std::span<const BasicTensor<T>* const> grads, AdamState<T>& state,
               const OptimizerConfig& config, long step) {
  check_pairing(params, grads);
  if (step < 1) throw DomainError("Adam step index must be >= 1");
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw StateError("Adam state does not match parameters");

  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  const double lr = config.learning_rate, eps = config.epsilon;
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->data();
    const T* g = grads[i]->data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      p[j] = static_cast<T>(p[j] - lr * (mj / c1) / (std::sqrt(vj / c2) + eps));
    }
  }
}

template void sgd_step<float>(std::span<Tensor* const>, std::span<const Tensor* const>, double);
template void sgd_step<double>(std::span<Tensor64* const>, std::span<const Tensor64* const>,
                               double);
template void adam_step<float>(std::span<Tensor* const>, std::span<const Tensor* const>,
                               AdamState<float>&, const OptimizerConfig&, long);
template void adam_step<double>(std::span<Tensor64* const>, std::span<const Tensor64* const>,
                                AdamState<double>&, const OptimizerConfig&, long);

}  // namespace bru
