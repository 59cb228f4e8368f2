#pragma once

#include <span>

#include "bru/tensor.hpp"

namespace bru {

/// Scalar loss (mean over the batch) with its gradient w.r.t. the input.
template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> grad;
};

/// Mean over the batch of -log softmax(logits)[label], with gradient
/// (softmax - onehot) / batch. Uses max-subtraction for stability.
template <typename T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

/// Sigmoid followed by Bernoulli cross entropy, evaluated in logit space:
/// per element max(z,0) - z t + log(1 + exp(-|z|)). Summed over features,
/// averaged over the batch (leading axis). Gradient (sigmoid(z) - t) / batch.
template <typename T>
LossResult<T> bernoulli_cross_entropy_logits(const BasicTensor<T>& logits,
                                             const BasicTensor<T>& targets);

/// Same loss from probabilities p in (0,1); p = t in {0,1} contributes 0.
/// Gradient w.r.t. p.
template <typename T>
LossResult<T> bernoulli_cross_entropy(const BasicTensor<T>& probabilities,
                                      const BasicTensor<T>& targets);

/// Number of rows whose argmax (lowest index on ties) differs from the label.
template <typename T>
std::size_t misclassified(const BasicTensor<T>& logits, std::span<const int> labels);

/// Misclassified fraction of a non-empty batch.
template <typename T>
double error_quotient(const BasicTensor<T>& logits, std::span<const int> labels);

/// Sum over the batch of per-sample mean squared error.
template <typename T>
double squared_error_sum(const BasicTensor<T>& output, const BasicTensor<T>& target);

/// Mean squared error per pixel, averaged over the batch.
template <typename T>
double reconstruction_error(const BasicTensor<T>& output, const BasicTensor<T>& target);

}  // namespace bru
