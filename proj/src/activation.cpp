#include "bru/activation.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace bru {

Radix ActivationKind::radix() const {
  if (!radix_) throw UnsupportedError(name() + " has no radix");
  return *radix_;
}

std::string ActivationKind::name() const {
  auto with_radix = [this](char prefix) {
    const double r = radix_->value();
    if (r == std::floor(r) && r < 1e6) {
      return std::string(1, prefix) + std::to_string(static_cast<long>(r)) + "RU";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%cRU(%.17g)", prefix, r);
    return std::string(buf);
  };
  switch (tag_) {
    case ActivationTag::ReLU: return "ReLU";
    case ActivationTag::ELU: return "ELU";
    case ActivationTag::ERU: return with_radix('E');
    case ActivationTag::ORU: return with_radix('O');
    case ActivationTag::Sigmoid: return "Sigmoid";
    case ActivationTag::Identity: return "Identity";
    case ActivationTag::Softmax: return "Softmax";
  }
  return "?";
}

ActivationKind ActivationKind::parse(const std::string& text) {
  if (text == "ReLU") return relu();
  if (text == "ELU") return elu();
  if (text == "Sigmoid") return sigmoid();
  if (text == "Identity") return identity();
  if (text == "Softmax") return softmax();
  if (text.size() >= 4 && (text[0] == 'E' || text[0] == 'O')) {
    const bool eru = text[0] == 'E';
    double r = 0.0;
    std::size_t used = 0;
    try {
      if (text.compare(1, 3, "RU(") == 0 && text.back() == ')') {
        const std::string inner = text.substr(4, text.size() - 5);
        r = std::stod(inner, &used);
        if (used != inner.size()) throw ConfigError("");
      } else if (text.size() > 3 && text.compare(text.size() - 2, 2, "RU") == 0) {
        const std::string digits = text.substr(1, text.size() - 3);
        r = std::stod(digits, &used);
        if (used != digits.size()) throw ConfigError("");
      } else {
        throw ConfigError("");
      }
    } catch (const std::exception&) {
      throw ConfigError("unrecognised activation '" + text + "'");
    }
    return eru ? ActivationKind::eru(r) : ActivationKind::oru(r);
  }
  throw ConfigError("unrecognised activation '" + text + "'");
}

template <typename T>
T activate(const ActivationKind& kind, T z) {
  switch (kind.tag()) {
    case ActivationTag::ReLU:
      detail::require_finite(z, "relu");
      return z > T(0) ? z : T(0);
    case ActivationTag::ELU: return elu_forward(z);
    case ActivationTag::ERU: return eru_forward(z, kind.radix());
    case ActivationTag::ORU: return oru_forward(z, kind.radix());
    case ActivationTag::Sigmoid: return sigmoid(z);
    case ActivationTag::Identity:
      detail::require_finite(z, "identity");
      return z;
    case ActivationTag::Softmax: break;
  }
  throw UnsupportedError("softmax is not an elementwise function");
}

template <typename T>
T activate_derivative(const ActivationKind& kind, T z) {
  switch (kind.tag()) {
    case ActivationTag::ReLU:
      detail::require_finite(z, "relu");
      return z > T(0) ? T(1) : T(0);
    case ActivationTag::ELU: return elu_derivative(z);
    case ActivationTag::ERU: return eru_derivative(z, kind.radix());
    case ActivationTag::ORU: return oru_derivative(z, kind.radix());
    case ActivationTag::Sigmoid: {
      const T s = sigmoid(z);
      return s * (T(1) - s);
    }
    case ActivationTag::Identity:
      detail::require_finite(z, "identity");
      return T(1);
    case ActivationTag::Softmax: break;
  }
  throw UnsupportedError("softmax derivative is handled by the cross-entropy loss");
}

namespace {

template <typename T>
BasicTensor<T> softmax_last_axis(const BasicTensor<T>& x) {
  if (x.shape().rank() == 0) throw ShapeError("softmax needs a class axis");
  const std::size_t classes = x.shape().back();
  BasicTensor<T> out(x.shape());
  for (std::size_t base = 0; base < x.size(); base += classes) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      detail::require_finite(x[base + c], "softmax");
      mx = std::max(mx, x[base + c]);
    }
    T sum = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      out[base + c] = std::exp(x[base + c] - mx);
      sum += out[base + c];
    }
    for (std::size_t c = 0; c < classes; ++c) out[base + c] /= sum;
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> activation_apply(const ActivationKind& kind, const BasicTensor<T>& x) {
  if (kind.tag() == ActivationTag::Softmax) return softmax_last_axis(x);
  BasicTensor<T> out(x.shape());
  std::transform(x.begin(), x.end(), out.begin(), [&](T z) { return activate(kind, z); });
  return out;
}

template <typename T>
BasicTensor<T> activation_derivative(const ActivationKind& kind, const BasicTensor<T>& x) {
  if (kind.tag() == ActivationTag::Softmax)
    throw UnsupportedError("softmax derivative is handled by the cross-entropy loss");
  BasicTensor<T> out(x.shape());
  std::transform(x.begin(), x.end(), out.begin(),
                 [&](T z) { return activate_derivative(kind, z); });
  return out;
}

template float activate(const ActivationKind&, float);
template double activate(const ActivationKind&, double);
template float activate_derivative(const ActivationKind&, float);
template double activate_derivative(const ActivationKind&, double);
template Tensor activation_apply(const ActivationKind&, const Tensor&);
template Tensor64 activation_apply(const ActivationKind&, const Tensor64&);
template Tensor activation_derivative(const ActivationKind&, const Tensor&);
template Tensor64 activation_derivative(const ActivationKind&, const Tensor64&);

}  // namespace bru
