#pragma once

// Static computation graph with reverse-mode differentiation.
//
// Nodes are appended in construction order, and every node may only read
// nodes created before it, so construction order is a topological order.
// Inputs are declared per sample; the leading batch axis is supplied at
// forward time. Parameters are leaf tensors owned by the graph, each with a
// gradient slot of identical shape that backward() overwrites.

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bru/activation.hpp"
#include "bru/layers.hpp"
#include "bru/rng.hpp"
#include "bru/tensor.hpp"

namespace bru {

using NodeId = std::size_t;

template <typename T>
struct ForwardContext {
  Mode mode;
  CounterRng* rng;
};

/// One primitive. Ops may cache forward state (masks, argmax) for backward.
template <typename T>
class Op {
 public:
  virtual ~Op() = default;
  virtual std::string kind() const = 0;
  virtual BasicTensor<T> forward(std::span<const BasicTensor<T>* const> in,
                                 ForwardContext<T>& ctx) = 0;
  /// Gradients w.r.t. each input; an empty tensor means "no gradient".
  virtual std::vector<BasicTensor<T>> backward(std::span<const BasicTensor<T>* const> in,
                                               const BasicTensor<T>& out,
                                               const BasicTensor<T>& dout) = 0;
};

template <typename T>
class Graph {
 public:
  using TensorT = BasicTensor<T>;
  using Feed = std::map<std::string, TensorT>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  // ---- construction ------------------------------------------------------
  NodeId input(const std::string& name, Shape sample_shape);
  NodeId parameter(const std::string& name, TensorT init);

  NodeId matmul(NodeId x, NodeId w);
  NodeId add_bias(NodeId x, NodeId b);
  NodeId conv2d(NodeId x, NodeId kernels, std::size_t stride, Padding padding);
  NodeId pool(NodeId x, Window2D window, PoolMode mode);
  NodeId activation(NodeId x, ActivationKind kind);
  NodeId dropout(NodeId x, double keep_prob);
  /// [batch, ...] -> [batch, product(...)].
  NodeId flatten(NodeId x);
  /// Mean softmax cross entropy; `labels` holds class ids as values, shape [batch].
  NodeId softmax_cross_entropy(NodeId logits, NodeId labels);
  /// Mean over the batch of the summed sigmoid cross entropy, from logits.
  NodeId sigmoid_cross_entropy(NodeId logits, NodeId targets);
  NodeId sum(NodeId x);
  NodeId half_squared_norm(NodeId x);
  NodeId scale(NodeId x, T factor);

  /// Appends a custom primitive.
  NodeId add_op(std::unique_ptr<Op<T>> op, std::vector<NodeId> inputs, std::string name = {});

  /// Renames a node; names appear in diagnostics.
  void set_name(NodeId id, std::string name) { nodes_.at(id).name = std::move(name); }

  // ---- execution ---------------------------------------------------------
  /// Evaluates every node. Dropout draws from `rng` when given, otherwise
  /// from the graph's own stream (see set_dropout_seed).
  void forward(const Feed& inputs, Mode mode, CounterRng* rng = nullptr);

  /// Reverse pass from a scalar node. Requires a preceding Train-mode forward.
  void backward(NodeId loss);

  const TensorT& value(NodeId id) const;
  /// Gradient of the last backward's loss w.r.t. any node; zeros if the loss
  /// does not depend on it.
  const TensorT& gradient(NodeId id) const;

  // ---- parameters --------------------------------------------------------
  const std::vector<NodeId>& parameter_ids() const noexcept { return params_; }
  TensorT& parameter_value(NodeId id);
  std::vector<TensorT*> parameter_values();
  std::vector<const TensorT*> parameter_gradients() const;
  std::size_t parameter_count() const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& name(NodeId id) const { return nodes_.at(id).name; }
  std::string kind(NodeId id) const;
  NodeId find(const std::string& name) const;

  void set_dropout_seed(std::uint64_t seed) { own_rng_ = CounterRng(seed, "dropout"); }

 private:
  enum class Role { Input, Parameter, Compute };

  struct Node {
    std::string name;
    Role role;
    std::unique_ptr<Op<T>> op;
    std::vector<NodeId> inputs;
    Shape sample_shape;  // inputs only
    TensorT value;
    TensorT grad;
    bool has_grad = false;
  };

  NodeId push(Node node);
  std::string label(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> params_;
  CounterRng own_rng_{0, "dropout"};
  bool forward_done_ = false;
  Mode last_mode_ = Mode::Eval;
  bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace bru
