#include "bru/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bru/errors.hpp"

namespace bru {

namespace {

void check_classification(const Shape& s, std::size_t labels) {
  if (s.rank() != 2) throw ShapeError("logits must be [batch, classes], got " + s.str());
  if (s[0] != labels)
    throw ShapeError("batch of " + std::to_string(s[0]) + " logits but " +
                     std::to_string(labels) + " labels");
}

void check_label(int label, std::size_t classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes)
    throw DomainError("label " + std::to_string(label) + " outside [0, " +
                      std::to_string(classes) + ")");
}

template <typename T>
void check_targets(const BasicTensor<T>& targets) {
  for (T t : targets)
    if (!(t >= T(0) && t <= T(1))) throw DomainError("cross-entropy targets must lie in [0, 1]");
}

}  // namespace

template <typename T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  check_classification(logits.shape(), labels.size());
  const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
  LossResult<T> res{0.0, BasicTensor<T>(logits.shape())};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    check_label(labels[i], classes);
    const T* z = logits.data() + i * classes;
    T* g = res.grad.data() + i * classes;
    const std::size_t top = static_cast<std::size_t>(std::max_element(z, z + classes) - z);
    const double mx = z[top];
    double rest = 0.0;
    for (std::size_t c = 0; c < classes; ++c)
      if (c != top) rest += std::exp(static_cast<double>(z[c]) - mx);
    const double log_sum = std::log1p(rest);
    total += log_sum - (static_cast<double>(z[labels[i]]) - mx);
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = c == top ? 1.0 : std::exp(static_cast<double>(z[c]) - mx);
      // p - 1 for the label, written as minus the mass of the other classes
      const double others = c == top ? rest : (1.0 + rest) - e;
      const double diff = static_cast<int>(c) == labels[i] ? -others / (1.0 + rest) : e / (1.0 + rest);
      g[c] = static_cast<T>(diff * inv_batch);
    }
  }
  res.loss = total * inv_batch;
  return res;
}

template <typename T>
LossResult<T> bernoulli_cross_entropy_logits(const BasicTensor<T>& logits,
                                             const BasicTensor<T>& targets) {
  if (logits.shape() != targets.shape())
    throw ShapeError("logits " + logits.shape().str() + " vs targets " + targets.shape().str());
  check_targets(targets);
  const std::size_t batch = logits.shape()[0];
  const double inv_batch = 1.0 / static_cast<double>(batch);
  LossResult<T> res{0.0, BasicTensor<T>(logits.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i], t = targets[i];
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    res.grad[i] = static_cast<T>((s - t) * inv_batch);
  }
  res.loss = total * inv_batch;
  return res;
}

template <typename T>
LossResult<T> bernoulli_cross_entropy(const BasicTensor<T>& probabilities,
                                      const BasicTensor<T>& targets) {
  if (probabilities.shape() != targets.shape())
    throw ShapeError("probabilities " + probabilities.shape().str() + " vs targets " +
                     targets.shape().str());
  check_targets(targets);
  const std::size_t batch = probabilities.shape()[0];
  const double inv_batch = 1.0 / static_cast<double>(batch);
  LossResult<T> res{0.0, BasicTensor<T>(probabilities.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i], t = targets[i];
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("probabilities must lie in [0, 1]");
    // 0 * log 0 is taken as 0.
    if (t > 0.0) total -= t * std::log(p);
    if (t < 1.0) total -= (1.0 - t) * std::log1p(-p);
    res.grad[i] = static_cast<T>((p - t) / (p * (1.0 - p)) * inv_batch);
  }
  res.loss = total * inv_batch;
  return res;
}

template <typename T>
std::size_t misclassified(const BasicTensor<T>& logits, std::span<const int> labels) {
  check_classification(logits.shape(), labels.size());
  const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    const T* z = logits.data() + i * classes;
    const auto arg = static_cast<int>(std::max_element(z, z + classes) - z);
    if (arg != labels[i]) ++wrong;
  }
  return wrong;
}

template <typename T>
double error_quotient(const BasicTensor<T>& logits, std::span<const int> labels) {
  if (labels.empty()) throw ShapeError("error quotient of an empty batch");
  return static_cast<double>(misclassified(logits, labels)) /
         static_cast<double>(labels.size());
}

template <typename T>
double squared_error_sum(const BasicTensor<T>& output, const BasicTensor<T>& target) {
  if (output.shape() != target.shape())
    throw ShapeError("output " + output.shape().str() + " vs target " + target.shape().str());
  const std::size_t per_sample = output.size() / output.shape()[0];
  double total = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double d = static_cast<double>(output[i]) - static_cast<double>(target[i]);
    total += d * d;
  }
  return total / static_cast<double>(per_sample);
}

template <typename T>
double reconstruction_error(const BasicTensor<T>& output, const BasicTensor<T>& target) {
  return squared_error_sum(output, target) / static_cast<double>(output.shape()[0]);
}

#define BRU_INSTANTIATE_LOSS(T)                                                               \
  template LossResult<T> softmax_cross_entropy(const BasicTensor<T>&, std::span<const int>);  \
  template LossResult<T> bernoulli_cross_entropy_logits(const BasicTensor<T>&,                \
                                                        const BasicTensor<T>&);               \
  template LossResult<T> bernoulli_cross_entropy(const BasicTensor<T>&,                       \
                                                 const BasicTensor<T>&);                      \
  template std::size_t misclassified(const BasicTensor<T>&, std::span<const int>);            \
  template double error_quotient(const BasicTensor<T>&, std::span<const int>);                \
  template double squared_error_sum(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template double reconstruction_error(const BasicTensor<T>&, const BasicTensor<T>&);

BRU_INSTANTIATE_LOSS(float)
BRU_INSTANTIATE_LOSS(double)

#undef BRU_INSTANTIATE_LOSS

}  // namespace bru
