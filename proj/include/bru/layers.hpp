#pragma once

// Layer primitives over batch x height x width x maps tensors, their
// vector-Jacobian products, and radix-scaled weight initialisation.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bru/activation.hpp"
#include "bru/rng.hpp"
#include "bru/tensor.hpp"

namespace bru {

enum class Padding { Same, Valid };
enum class PoolMode { Avg, Max };
enum class Mode { Train, Eval };

/// Placement of a sliding window along one spatial axis.
struct AxisPlan {
  std::size_t out;     ///< output extent
  std::size_t pad_lo;  ///< implicit zero cells before the first input cell
};

/// Same: out = ceil(n / stride), total padding split with the extra cell
/// after the data (bottom/right). Valid: out = floor((n - k) / stride) + 1.
AxisPlan plan_axis(std::size_t n, std::size_t k, std::size_t stride, Padding padding);

/// Square-stride window over the two spatial axes.
struct Window2D {
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t stride = 1;
  Padding padding = Padding::Same;
};

// ---- dense ---------------------------------------------------------------

/// x[batch, in] * w[in, out].
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& x, const BasicTensor<T>& w);

template <typename T>
struct MatmulGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dw;
};

template <typename T>
MatmulGrads<T> matmul_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                               const BasicTensor<T>& dy);

/// Adds b[c] along the last axis.
template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& b);

/// Sum of dy over every axis but the last.
template <typename T>
BasicTensor<T> add_bias_backward(const BasicTensor<T>& dy);

/// x W + b, before activation.
template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& b) {
  return add_bias(matmul(x, w), b);
}

// ---- convolution -----------------------------------------------------------

/// Cross-correlation of x[b,h,w,cin] with kernels[kh,kw,cin,cout].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernels,
                      std::size_t stride, Padding padding);

template <typename T>
struct Conv2DGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dkernels;
};

template <typename T>
Conv2DGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernels,
                               const BasicTensor<T>& dy, std::size_t stride,
                               Padding padding);

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& kernels,
                              const BasicTensor<T>& b, std::size_t stride, Padding padding) {
  return add_bias(conv2d(x, kernels, stride, padding), b);
}

// ---- pooling ---------------------------------------------------------------

/// Pooling result. For Max, `argmax` holds the flat input index chosen for
/// each output element (first row-major maximum within the window).
template <typename T>
struct PoolResult {
  BasicTensor<T> y;
  std::vector<std::size_t> argmax;
};

/// Avg averages the in-bounds cells of each window; padded cells are not
/// counted. Max ignores padded cells.
template <typename T>
PoolResult<T> pool_forward(const BasicTensor<T>& x, const Window2D& window, PoolMode mode);

template <typename T>
BasicTensor<T> pool_backward(const Shape& x_shape, const Window2D& window, PoolMode mode,
                             const PoolResult<T>& forward, const BasicTensor<T>& dy);

// ---- dropout ---------------------------------------------------------------

/// Inverted dropout. Train: keep with probability keep_prob and scale by
/// 1/keep_prob; Eval: identity. `mask` holds the per-element multiplier.
template <typename T>
struct DropoutResult {
  BasicTensor<T> y;
  BasicTensor<T> mask;
};

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double keep_prob, Mode mode,
                                 CounterRng& rng);

// ---- initialisation --------------------------------------------------------

/// Weight variance for a layer with the given activation:
/// ERU(r): 6 / (n (2r + 1)); ORU(r): 2 / (n r); anything else 2 / n.
double init_variance(const ActivationKind& kind, long fan_in);

struct InitSpec {
  std::size_t fan_in;
  double variance;

  static InitSpec for_layer(const ActivationKind& kind, std::size_t fan_in) {
    return {fan_in, init_variance(kind, static_cast<long>(fan_in))};
  }
};

/// Fan-in of a weight tensor: product of every extent but the last
/// (in for dense [in,out]; kh*kw*cin for kernels [kh,kw,cin,cout]).
std::size_t fan_in_of(const Shape& weight_shape);

/// I.i.d. zero-mean Gaussian draws with variance spec.variance.
template <typename T>
BasicTensor<T> sample_weights(const InitSpec& spec, const Shape& shape, CounterRng& rng);

template <typename T>
BasicTensor<T> sample_weights(const InitSpec& spec, const Shape& shape, std::uint64_t seed) {
  CounterRng rng(seed, "weights");
  return sample_weights<T>(spec, shape, rng);
}

}  // namespace bru
