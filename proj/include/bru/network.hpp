#pragma once

// Trainable graph instantiated from a ModelSpec.

#include <cstdint>
#include <optional>
#include <span>

#include "bru/graph.hpp"
#include "bru/model.hpp"

namespace bru {

template <typename T>
class Network {
 public:
  using TensorT = BasicTensor<T>;

  /// Weights of layer i are drawn from stream ("weights", i) of `seed` with
  /// the variance rule of the layer's activation; the output layer and
  /// biases follow 2/n and zero respectively. Dropout uses ("dropout").
  Network(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }
  Graph<T>& graph() noexcept { return graph_; }
  const Graph<T>& graph() const noexcept { return graph_; }

  /// True for the auto-encoder, whose loss node reads "targets" instead of "labels".
  bool reconstructs() const noexcept { return targets_.has_value(); }

  NodeId images() const noexcept { return images_; }
  NodeId logits() const noexcept { return logits_; }
  NodeId output() const noexcept { return output_; }
  NodeId loss() const noexcept { return loss_; }

  /// Evaluates the graph on one batch. `images` is [batch, h, w, maps].
  void forward(const TensorT& images, std::span<const int> labels, Mode mode);
  /// Mean loss of the last forward.
  double loss_value() const { return static_cast<double>(graph_.value(loss_)[0]); }

 private:
  ModelSpec spec_;
  Graph<T> graph_;
  NodeId images_ = 0;
  std::optional<NodeId> labels_;
  std::optional<NodeId> targets_;
  NodeId logits_ = 0;
  NodeId output_ = 0;
  NodeId loss_ = 0;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace bru
