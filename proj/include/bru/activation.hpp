#pragma once

// Transfer functions and their exact derivatives.
//
// Exponential root unit (ERU), radix r:
//   f(z) = (r^2 z + 1)^(1/r) - 1/r     z >= 0
//        = exp(r z) - 1/r              z <  0
//   f'(z) = r (r^2 z + 1)^((1-r)/r)    z >= 0
//         = r exp(r z)                 z <  0
//
// Odd root unit (ORU), radix r:
//   f(z)  = sgn(z) ((r^2 |z| + 1)^(1/r) - 1)
//   f'(z) = r (r^2 |z| + 1)^((1-r)/r)
//
// Both have slope r at the origin, which is also the maximum slope.
// ERU with r = 1 is ELU (alpha = 1); ORU with r = 1 is the identity.

#include <cmath>
#include <optional>
#include <string>

#include "bru/errors.hpp"
#include "bru/tensor.hpp"

namespace bru {

/// Positive, finite shape parameter of the root units.
class Radix {
 public:
  explicit Radix(double r) : r_(r) {
    if (!std::isfinite(r) || r <= 0.0)
      throw DomainError("radix must be positive and finite, got " + std::to_string(r));
  }
  double value() const noexcept { return r_; }
  friend bool operator==(const Radix&, const Radix&) = default;

 private:
  double r_;
};

enum class ActivationTag { ReLU, ELU, ERU, ORU, Sigmoid, Identity, Softmax };

/// A transfer function. ERU and ORU carry a radix; the others carry none.
class ActivationKind {
 public:
  static ActivationKind relu() { return ActivationKind(ActivationTag::ReLU); }
  static ActivationKind elu() { return ActivationKind(ActivationTag::ELU); }
  static ActivationKind sigmoid() { return ActivationKind(ActivationTag::Sigmoid); }
  static ActivationKind identity() { return ActivationKind(ActivationTag::Identity); }
  static ActivationKind softmax() { return ActivationKind(ActivationTag::Softmax); }
  static ActivationKind eru(double r) { return ActivationKind(ActivationTag::ERU, Radix(r)); }
  static ActivationKind oru(double r) { return ActivationKind(ActivationTag::ORU, Radix(r)); }

  ActivationTag tag() const noexcept { return tag_; }
  bool has_radix() const noexcept { return radix_.has_value(); }
  /// Throws UnsupportedError for tags without a radix.
  Radix radix() const;

  /// Short name: "ReLU", "ELU", "E2RU", "O3RU", "Sigmoid", ...
  /// Non-integer radices print as e.g. "ERU(2.5)".
  std::string name() const;
  /// Inverse of name().
  static ActivationKind parse(const std::string& text);

  friend bool operator==(const ActivationKind&, const ActivationKind&) = default;

 private:
  explicit ActivationKind(ActivationTag tag, std::optional<Radix> radix = std::nullopt)
      : tag_(tag), radix_(radix) {}

  ActivationTag tag_;
  std::optional<Radix> radix_;
};

namespace detail {

inline void require_finite(double z, const char* fn) {
  if (!std::isfinite(z)) throw DomainError(std::string(fn) + ": non-finite input");
}

/// (r^2 x + 1)^(1/r) for x >= 0, with exact paths for r = 1, 2, 3.
template <typename T>
T root_term(T x, double r) {
  if (r == 1.0) return x + T(1);
  if (r == 2.0) return std::sqrt(T(4) * x + T(1));
  if (r == 3.0) return std::cbrt(T(9) * x + T(1));
  const T rr = static_cast<T>(r);
  return std::pow(rr * rr * x + T(1), T(1) / rr);
}

/// r (r^2 x + 1)^((1-r)/r) for x >= 0.
template <typename T>
T root_slope(T x, double r) {
  if (r == 1.0) return T(1);
  if (r == 2.0) return T(2) / std::sqrt(T(4) * x + T(1));
  if (r == 3.0) {
    const T c = std::cbrt(T(9) * x + T(1));
    return T(3) / (c * c);
  }
  const T rr = static_cast<T>(r);
  return rr * std::pow(rr * rr * x + T(1), (T(1) - rr) / rr);
}

}  // namespace detail

template <typename T>
T eru_forward(T z, Radix radix) {
  detail::require_finite(z, "eru_forward");
  const double r = radix.value();
  const T inv = static_cast<T>(1.0 / r);
  if (z >= T(0)) return detail::root_term(z, r) - inv;
  // exp underflows to 0 for very negative r*z: f -> -1/r.
  return std::exp(static_cast<T>(r) * z) - inv;
}

template <typename T>
T eru_derivative(T z, Radix radix) {
  detail::require_finite(z, "eru_derivative");
  const double r = radix.value();
  if (z >= T(0)) return detail::root_slope(z, r);
  const T rr = static_cast<T>(r);
  return rr * std::exp(rr * z);
}

template <typename T>
T oru_forward(T z, Radix radix) {
  detail::require_finite(z, "oru_forward");
  const T mag = detail::root_term(std::abs(z), radix.value()) - T(1);
  return z < T(0) ? -mag : (z > T(0) ? mag : T(0));
}

template <typename T>
T oru_derivative(T z, Radix radix) {
  detail::require_finite(z, "oru_derivative");
  return detail::root_slope(std::abs(z), radix.value());
}

template <typename T>
T elu_forward(T z) {
  detail::require_finite(z, "elu_forward");
  return z >= T(0) ? z : std::expm1(z);
}

template <typename T>
T elu_derivative(T z) {
  detail::require_finite(z, "elu_derivative");
  return z >= T(0) ? T(1) : std::exp(z);
}

template <typename T>
T sigmoid(T z) {
  detail::require_finite(z, "sigmoid");
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

/// Scalar transfer function for every elementwise kind. Softmax is rejected.
template <typename T>
T activate(const ActivationKind& kind, T z);

/// Scalar derivative for every elementwise kind. ReLU'(0) is 0.
template <typename T>
T activate_derivative(const ActivationKind& kind, T z);

/// Elementwise transfer, or softmax along the last axis for Softmax.
/// Output shape equals input shape.
template <typename T>
BasicTensor<T> activation_apply(const ActivationKind& kind, const BasicTensor<T>& x);

/// Elementwise derivative. Softmax raises UnsupportedError; its Jacobian is
/// folded into the cross-entropy loss.
template <typename T>
BasicTensor<T> activation_derivative(const ActivationKind& kind, const BasicTensor<T>& x);

}  // namespace bru
