#include "bru/network.hpp"

#include "bru/errors.hpp"

namespace bru {

template <typename T>
Network<T>::Network(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  const auto trace = spec_.shape_trace();
  graph_.set_dropout_seed(seed);
  images_ = graph_.input("images", spec_.input_shape);
  NodeId x = images_;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const bool last = i + 1 == spec_.layers.size();
    const std::string tag = "L" + std::to_string(i);
    CounterRng rng(seed, "weights", i);
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::Conv2D: {
        const Shape& in = trace[i];
        const Shape wshape = l.kind == LayerKind::Dense ? Shape{in[0], l.units}
                                                        : Shape{l.kh, l.kw, in[2], l.units};
        const std::size_t fan_in = fan_in_of(wshape);
        const InitSpec init = last ? InitSpec{fan_in, init_variance(ActivationKind::identity(),
                                                                    static_cast<long>(fan_in))}
                                   : InitSpec::for_layer(*l.activation, fan_in);
        const NodeId w = graph_.parameter(tag + ".w", sample_weights<T>(init, wshape, rng));
        const NodeId b = graph_.parameter(tag + ".b", TensorT(Shape{l.units}));
        x = l.kind == LayerKind::Dense ? graph_.matmul(x, w) : graph_.conv2d(x, w, l.stride, l.padding);
        x = graph_.add_bias(x, b);
        break;
      }
      case LayerKind::AvgPool:
      case LayerKind::MaxPool:
        x = graph_.pool(x, Window2D{l.kh, l.kw, l.stride, l.padding},
                        l.kind == LayerKind::AvgPool ? PoolMode::Avg : PoolMode::Max);
        break;
      case LayerKind::Dropout: x = graph_.dropout(x, l.keep_prob); break;
      case LayerKind::Flatten: x = graph_.flatten(x); break;
    }
    if (last) break;
    if (l.activation) x = graph_.activation(x, *l.activation);
    graph_.set_name(x, tag + "." + to_string(l.kind));
  }
  logits_ = x;
  graph_.set_name(logits_, "logits");
  const ActivationKind out = spec_.output_activation();
  output_ = graph_.activation(logits_, out);
  graph_.set_name(output_, "output");
  if (out.tag() == ActivationTag::Sigmoid) {
    targets_ = graph_.input("targets", Shape{spec_.input_shape.size()});
    loss_ = graph_.sigmoid_cross_entropy(logits_, *targets_);
  } else {
    labels_ = graph_.input("labels", Shape{});
    loss_ = graph_.softmax_cross_entropy(logits_, *labels_);
  }
  graph_.set_name(loss_, "loss");
}

template <typename T>
void Network<T>::forward(const TensorT& images, std::span<const int> labels, Mode mode) {
  typename Graph<T>::Feed feed;
  const std::size_t batch = images.shape()[0];
  feed.emplace("images", images);
  if (targets_) {
    feed.emplace("targets", images.reshaped(Shape{batch, spec_.input_shape.size()}));
  } else {
    if (labels.size() != batch)
      throw ShapeError("labels: expected " + std::to_string(batch) + ", got " +
                       std::to_string(labels.size()));
    TensorT lab(Shape{batch});
    for (std::size_t i = 0; i < batch; ++i) lab[i] = static_cast<T>(labels[i]);
    feed.emplace("labels", std::move(lab));
  }
  graph_.forward(feed, mode);
}

template class Network<float>;
template class Network<double>;

}  // namespace bru
