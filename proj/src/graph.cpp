#include "bru/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bru/loss.hpp"

namespace bru {

namespace {

template <typename T>
using In = std::span<const BasicTensor<T>* const>;

template <typename T>
class MatMulOp final : public Op<T> {
 public:
  std::string kind() const override { return "matmul"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override { return bru::matmul(*in[0], *in[1]); }
  std::vector<BasicTensor<T>> backward(In<T> in, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    auto g = matmul_backward(*in[0], *in[1], dout);
    std::vector<BasicTensor<T>> out;
    out.push_back(std::move(g.dx));
    out.push_back(std::move(g.dw));
    return out;
  }
};

template <typename T>
class AddBiasOp final : public Op<T> {
 public:
  std::string kind() const override { return "add_bias"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override { return bru::add_bias(*in[0], *in[1]); }
  std::vector<BasicTensor<T>> backward(In<T>, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    std::vector<BasicTensor<T>> out;
    out.push_back(dout);
    out.push_back(add_bias_backward(dout));
    return out;
  }
};

template <typename T>
class Conv2DOp final : public Op<T> {
 public:
  Conv2DOp(std::size_t stride, Padding padding) : stride_(stride), padding_(padding) {}
  std::string kind() const override { return "conv2d"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override {
    return bru::conv2d(*in[0], *in[1], stride_, padding_);
  }
  std::vector<BasicTensor<T>> backward(In<T> in, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    auto g = conv2d_backward(*in[0], *in[1], dout, stride_, padding_);
    std::vector<BasicTensor<T>> out;
    out.push_back(std::move(g.dx));
    out.push_back(std::move(g.dkernels));
    return out;
  }

 private:
  std::size_t stride_;
  Padding padding_;
};

template <typename T>
class PoolOp final : public Op<T> {
 public:
  PoolOp(Window2D window, PoolMode mode) : window_(window), mode_(mode) {}
  std::string kind() const override { return mode_ == PoolMode::Avg ? "avg_pool" : "max_pool"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override {
    cache_ = pool_forward(*in[0], window_, mode_);
    return cache_.y;
  }
  std::vector<BasicTensor<T>> backward(In<T> in, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    std::vector<BasicTensor<T>> out;
    out.push_back(pool_backward(in[0]->shape(), window_, mode_, cache_, dout));
    return out;
  }

 private:
  Window2D window_;
  PoolMode mode_;
  PoolResult<T> cache_;
};

template <typename T>
class ActivationOp final : public Op<T> {
 public:
  explicit ActivationOp(ActivationKind kind) : act_(kind) {}
  std::string kind() const override { return "activation " + act_.name(); }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override { return activation_apply(act_, *in[0]); }
  std::vector<BasicTensor<T>> backward(In<T> in, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    if (act_.tag() == ActivationTag::Softmax)
      throw UnsupportedError("gradient through a standalone softmax; use the cross-entropy node");
    BasicTensor<T> dx(dout.shape());
    const BasicTensor<T>& x = *in[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dout[i] * activate_derivative(act_, x[i]);
    std::vector<BasicTensor<T>> out;
    out.push_back(std::move(dx));
    return out;
  }

 private:
  ActivationKind act_;
};

template <typename T>
class DropoutOp final : public Op<T> {
 public:
  explicit DropoutOp(double keep) : keep_(keep) {}
  std::string kind() const override { return "dropout"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>& ctx) override {
    auto r = dropout_forward(*in[0], keep_, ctx.mode, *ctx.rng);
    mask_ = std::move(r.mask);
    return std::move(r.y);
  }
  std::vector<BasicTensor<T>> backward(In<T>, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    BasicTensor<T> dx(dout.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dout[i] * mask_[i];
    std::vector<BasicTensor<T>> out;
    out.push_back(std::move(dx));
    return out;
  }

 private:
  double keep_;
  BasicTensor<T> mask_;
};

template <typename T>
class FlattenOp final : public Op<T> {
 public:
  std::string kind() const override { return "flatten"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override {
    const auto& s = in[0]->shape();
    return in[0]->reshaped(Shape{s[0], s.size() / s[0]});
  }
  std::vector<BasicTensor<T>> backward(In<T> in, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    std::vector<BasicTensor<T>> out;
    out.push_back(dout.reshaped(in[0]->shape()));
    return out;
  }
};

template <typename T>
std::vector<int> labels_of(const BasicTensor<T>& t) {
  std::vector<int> labels(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const T v = t[i];
    if (v != std::floor(v)) throw DomainError("class label is not an integer");
    labels[i] = static_cast<int>(v);
  }
  return labels;
}

template <typename T>
class SoftmaxCrossEntropyOp final : public Op<T> {
 public:
  std::string kind() const override { return "softmax_cross_entropy"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override {
    const auto labels = labels_of(*in[1]);
    auto r = bru::softmax_cross_entropy(*in[0], labels);
    grad_ = std::move(r.grad);
    return BasicTensor<T>(Shape{1}, static_cast<T>(r.loss));
  }
  std::vector<BasicTensor<T>> backward(In<T>, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    BasicTensor<T> dz = grad_;
    for (auto& v : dz) v *= dout[0];
    std::vector<BasicTensor<T>> out;
    out.push_back(std::move(dz));
    out.emplace_back();
    return out;
  }

 private:
  BasicTensor<T> grad_;
};

template <typename T>
class SigmoidCrossEntropyOp final : public Op<T> {
 public:
  std::string kind() const override { return "sigmoid_cross_entropy"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override {
    auto r = bernoulli_cross_entropy_logits(*in[0], *in[1]);
    grad_ = std::move(r.grad);
    return BasicTensor<T>(Shape{1}, static_cast<T>(r.loss));
  }
  std::vector<BasicTensor<T>> backward(In<T>, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    BasicTensor<T> dz = grad_;
    for (auto& v : dz) v *= dout[0];
    std::vector<BasicTensor<T>> out;
    out.push_back(std::move(dz));
    out.emplace_back();
    return out;
  }

 private:
  BasicTensor<T> grad_;
};

template <typename T>
class SumOp final : public Op<T> {
 public:
  std::string kind() const override { return "sum"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override {
    double s = 0.0;
    for (T v : *in[0]) s += v;
    return BasicTensor<T>(Shape{1}, static_cast<T>(s));
  }
  std::vector<BasicTensor<T>> backward(In<T> in, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    std::vector<BasicTensor<T>> out;
    out.emplace_back(in[0]->shape(), dout[0]);
    return out;
  }
};

template <typename T>
class HalfSquaredNormOp final : public Op<T> {
 public:
  std::string kind() const override { return "half_squared_norm"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override {
    double s = 0.0;
    for (T v : *in[0]) s += static_cast<double>(v) * v;
    return BasicTensor<T>(Shape{1}, static_cast<T>(0.5 * s));
  }
  std::vector<BasicTensor<T>> backward(In<T> in, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    BasicTensor<T> dx = *in[0];
    for (auto& v : dx) v *= dout[0];
    std::vector<BasicTensor<T>> out;
    out.push_back(std::move(dx));
    return out;
  }
};

template <typename T>
class ScaleOp final : public Op<T> {
 public:
  explicit ScaleOp(T factor) : factor_(factor) {}
  std::string kind() const override { return "scale"; }
  BasicTensor<T> forward(In<T> in, ForwardContext<T>&) override {
    BasicTensor<T> y = *in[0];
    for (auto& v : y) v *= factor_;
    return y;
  }
  std::vector<BasicTensor<T>> backward(In<T>, const BasicTensor<T>&,
                                       const BasicTensor<T>& dout) override {
    BasicTensor<T> dx = dout;
    for (auto& v : dx) v *= factor_;
    std::vector<BasicTensor<T>> out;
    out.push_back(std::move(dx));
    return out;
  }

 private:
  T factor_;
};

}  // namespace

template <typename T>
NodeId Graph<T>::push(Node node) {
  for (NodeId in : node.inputs)
    if (in >= nodes_.size()) throw StateError("node input refers to a node not yet defined");
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

template <typename T>
NodeId Graph<T>::input(const std::string& name, Shape sample_shape) {
  Node n{name, Role::Input, nullptr, {}, std::move(sample_shape), {}, {}, false};
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::parameter(const std::string& name, TensorT init) {
  Node n{name, Role::Parameter, nullptr, {}, Shape{}, std::move(init), {}, false};
  const NodeId id = push(std::move(n));
  params_.push_back(id);
  return id;
}

template <typename T>
NodeId Graph<T>::add_op(std::unique_ptr<Op<T>> op, std::vector<NodeId> inputs, std::string name) {
  if (name.empty()) name = op->kind() + "#" + std::to_string(nodes_.size());
  Node n{std::move(name), Role::Compute, std::move(op), std::move(inputs), Shape{}, {}, {}, false};
  return push(std::move(n));
}

template <typename T>
NodeId Graph<T>::matmul(NodeId x, NodeId w) {
  return add_op(std::make_unique<MatMulOp<T>>(), {x, w});
}
template <typename T>
NodeId Graph<T>::add_bias(NodeId x, NodeId b) {
  return add_op(std::make_unique<AddBiasOp<T>>(), {x, b});
}
template <typename T>
NodeId Graph<T>::conv2d(NodeId x, NodeId k, std::size_t stride, Padding padding) {
  return add_op(std::make_unique<Conv2DOp<T>>(stride, padding), {x, k});
}
template <typename T>
NodeId Graph<T>::pool(NodeId x, Window2D window, PoolMode mode) {
  return add_op(std::make_unique<PoolOp<T>>(window, mode), {x});
}
template <typename T>
NodeId Graph<T>::activation(NodeId x, ActivationKind kind) {
  return add_op(std::make_unique<ActivationOp<T>>(kind), {x});
}
template <typename T>
NodeId Graph<T>::dropout(NodeId x, double keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    throw DomainError("keep probability must lie in (0, 1]");
  return add_op(std::make_unique<DropoutOp<T>>(keep_prob), {x});
}
template <typename T>
NodeId Graph<T>::flatten(NodeId x) {
  return add_op(std::make_unique<FlattenOp<T>>(), {x});
}
template <typename T>
NodeId Graph<T>::softmax_cross_entropy(NodeId logits, NodeId labels) {
  return add_op(std::make_unique<SoftmaxCrossEntropyOp<T>>(), {logits, labels});
}
template <typename T>
NodeId Graph<T>::sigmoid_cross_entropy(NodeId logits, NodeId targets) {
  return add_op(std::make_unique<SigmoidCrossEntropyOp<T>>(), {logits, targets});
}
template <typename T>
NodeId Graph<T>::sum(NodeId x) {
  return add_op(std::make_unique<SumOp<T>>(), {x});
}
template <typename T>
NodeId Graph<T>::half_squared_norm(NodeId x) {
  return add_op(std::make_unique<HalfSquaredNormOp<T>>(), {x});
}
template <typename T>
NodeId Graph<T>::scale(NodeId x, T factor) {
  return add_op(std::make_unique<ScaleOp<T>>(factor), {x});
}

template <typename T>
std::string Graph<T>::label(NodeId id) const {
  return "node " + std::to_string(id) + " '" + nodes_[id].name + "'";
}

template <typename T>
std::string Graph<T>::kind(NodeId id) const {
  const Node& n = nodes_.at(id);
  switch (n.role) {
    case Role::Input: return "input";
    case Role::Parameter: return "parameter";
    case Role::Compute: return n.op->kind();
  }
  return "?";
}

template <typename T>
NodeId Graph<T>::find(const std::string& name) const {
  for (NodeId i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].name == name) return i;
  throw StateError("no node named '" + name + "'");
}

template <typename T>
void Graph<T>::forward(const Feed& inputs, Mode mode, CounterRng* rng) {
  forward_done_ = false;
  backward_done_ = false;
  ForwardContext<T> ctx{mode, rng ? rng : &own_rng_};
  std::vector<const TensorT*> args;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.role == Role::Parameter) continue;
    if (n.role == Role::Input) {
      auto it = inputs.find(n.name);
      if (it == inputs.end()) throw ShapeError(label(id) + ": input not supplied");
      const Shape& s = it->second.shape();
      if (s.rank() != n.sample_shape.rank() + 1 || s.tail() != n.sample_shape)
        throw ShapeError(label(id) + ": expected [batch]+" + n.sample_shape.str() + ", got " +
                         s.str());
      n.value = it->second;
      continue;
    }
    args.clear();
    for (NodeId in : n.inputs) args.push_back(&nodes_[in].value);
    try {
      n.value = n.op->forward(args, ctx);
    } catch (const ShapeError& e) {
      throw ShapeError(label(id) + ": " + e.what());
    } catch (const DomainError& e) {
      throw DomainError(label(id) + ": " + e.what());
    }
  }
  forward_done_ = true;
  last_mode_ = mode;
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  if (!forward_done_) throw StateError("backward called before forward");
  if (last_mode_ != Mode::Train) throw StateError("backward requires a Train-mode forward");
  if (loss >= nodes_.size()) throw StateError("unknown loss node");
  if (nodes_[loss].value.size() != 1) throw ShapeError(label(loss) + ": loss is not a scalar");

  for (auto& n : nodes_) n.has_grad = false;
  nodes_[loss].grad = TensorT(nodes_[loss].value.shape(), T(1));
  nodes_[loss].has_grad = true;

  std::vector<const TensorT*> args;
  for (NodeId id = loss + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || n.role != Role::Compute) continue;
    args.clear();
    for (NodeId in : n.inputs) args.push_back(&nodes_[in].value);
    auto grads = n.op->backward(args, n.value, n.grad);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      if (grads[k].empty()) continue;
      Node& src = nodes_[n.inputs[k]];
      if (!src.has_grad) {
        src.grad = std::move(grads[k]);
        src.has_grad = true;
      } else {
        for (std::size_t i = 0; i < src.grad.size(); ++i) src.grad[i] += grads[k][i];
      }
    }
  }
  for (auto& n : nodes_)
    if (!n.has_grad && !n.value.empty()) n.grad = TensorT(n.value.shape());
  backward_done_ = true;
}

template <typename T>
const BasicTensor<T>& Graph<T>::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  if (n.role != Role::Parameter && !forward_done_)
    throw StateError(label(id) + ": value requested before forward");
  return n.value;
}

template <typename T>
const BasicTensor<T>& Graph<T>::gradient(NodeId id) const {
  if (!backward_done_) throw StateError("gradient requested before backward");
  return nodes_.at(id).grad;
}

template <typename T>
BasicTensor<T>& Graph<T>::parameter_value(NodeId id) {
  Node& n = nodes_.at(id);
  if (n.role != Role::Parameter) throw StateError(label(id) + " is not a parameter");
  return n.value;
}

template <typename T>
std::vector<BasicTensor<T>*> Graph<T>::parameter_values() {
  std::vector<TensorT*> out;
  for (NodeId id : params_) out.push_back(&nodes_[id].value);
  return out;
}

template <typename T>
std::vector<const BasicTensor<T>*> Graph<T>::parameter_gradients() const {
  if (!backward_done_) throw StateError("gradients requested before backward");
  std::vector<const TensorT*> out;
  for (NodeId id : params_) out.push_back(&nodes_[id].grad);
  return out;
}

template <typename T>
std::size_t Graph<T>::parameter_count() const {
  std::size_t total = 0;
  for (NodeId id : params_) total += nodes_[id].value.size();
  return total;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace bru
