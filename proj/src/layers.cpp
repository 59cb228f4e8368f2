#include "bru/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bru {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// Bound on im2col scratch size (elements) per GEMM chunk.
constexpr std::size_t kIm2ColBudget = std::size_t{1} << 22;

struct ConvGeometry {
  std::size_t batch, h, w, cin;
  std::size_t kh, kw, cout;
  std::size_t stride;
  AxisPlan rows, cols;

  std::size_t out_rows() const { return batch * rows.out * cols.out; }
  std::size_t patch() const { return kh * kw * cin; }
  Shape out_shape() const { return Shape{batch, rows.out, cols.out, cout}; }
};

ConvGeometry conv_geometry(const Shape& xs, const Shape& ks, std::size_t stride, Padding pad) {
  if (xs.rank() != 4) throw ShapeError("conv2d input must be [batch,h,w,maps], got " + xs.str());
  if (ks.rank() != 4) throw ShapeError("conv2d kernels must be [kh,kw,in,out], got " + ks.str());
  if (ks[2] != xs[3])
    throw ShapeError("conv2d kernel input maps " + std::to_string(ks[2]) +
                     " do not match input maps " + std::to_string(xs[3]));
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ks[0], ks[1], ks[3], stride,
                 plan_axis(xs[1], ks[0], stride, pad), plan_axis(xs[2], ks[1], stride, pad)};
  return g;
}

// Fills rows [r0, r1) of the patch matrix.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::size_t r0, std::size_t r1, T* cols) {
  const std::size_t per_image = g.rows.out * g.cols.out;
  for (std::size_t r = r0; r < r1; ++r) {
    const std::size_t n = r / per_image;
    const std::size_t oy = (r % per_image) / g.cols.out;
    const std::size_t ox = r % g.cols.out;
    T* dst = cols + (r - r0) * g.patch();
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.rows.pad_lo);
      for (std::size_t kx = 0; kx < g.kw; ++kx, dst += g.cin) {
        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.cols.pad_lo);
        if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) || ix >= static_cast<long>(g.w)) {
          std::fill(dst, dst + g.cin, T(0));
        } else {
          const T* src = x + ((n * g.h + iy) * g.w + ix) * g.cin;
          std::copy(src, src + g.cin, dst);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, std::size_t r0, std::size_t r1, T* dx) {
  const std::size_t per_image = g.rows.out * g.cols.out;
  for (std::size_t r = r0; r < r1; ++r) {
    const std::size_t n = r / per_image;
    const std::size_t oy = (r % per_image) / g.cols.out;
    const std::size_t ox = r % g.cols.out;
    const T* src = cols + (r - r0) * g.patch();
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.rows.pad_lo);
      for (std::size_t kx = 0; kx < g.kw; ++kx, src += g.cin) {
        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.cols.pad_lo);
        if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) || ix >= static_cast<long>(g.w))
          continue;
        T* dst = dx + ((n * g.h + iy) * g.w + ix) * g.cin;
        for (std::size_t c = 0; c < g.cin; ++c) dst[c] += src[c];
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.rows.pad_lo == 0 && g.cols.pad_lo == 0 &&
         g.rows.out == g.h && g.cols.out == g.w;
}

std::size_t chunk_rows(const ConvGeometry& g) {
  return std::max<std::size_t>(1, kIm2ColBudget / g.patch());
}

}  // namespace

AxisPlan plan_axis(std::size_t n, std::size_t k, std::size_t stride, Padding padding) {
  if (k < 1 || stride < 1) throw ShapeError("window extent and stride must be >= 1");
  if (padding == Padding::Valid) {
    if (k > n)
      throw ShapeError("valid window " + std::to_string(k) + " exceeds input extent " +
                       std::to_string(n));
    return {(n - k) / stride + 1, 0};
  }
  const std::size_t out = (n + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + k;
  const std::size_t total = needed > n ? needed - n : 0;
  return {out, total / 2};
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& x, const BasicTensor<T>& w) {
  if (x.shape().rank() != 2 || w.shape().rank() != 2 || x.shape()[1] != w.shape()[0])
    throw ShapeError("matmul shape mismatch: " + x.shape().str() + " x " + w.shape().str());
  const auto b = x.shape()[0], in = x.shape()[1], out = w.shape()[1];
  BasicTensor<T> y(Shape{b, out});
  MatMap<T>(y.data(), b, out).noalias() =
      ConstMatMap<T>(x.data(), b, in) * ConstMatMap<T>(w.data(), in, out);
  return y;
}

template <typename T>
MatmulGrads<T> matmul_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                               const BasicTensor<T>& dy) {
  const auto b = x.shape()[0], in = x.shape()[1], out = w.shape()[1];
  if (dy.shape() != Shape{b, out})
    throw ShapeError("matmul_backward: upstream gradient " + dy.shape().str());
  MatmulGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(w.shape())};
  ConstMatMap<T> X(x.data(), b, in), W(w.data(), in, out), DY(dy.data(), b, out);
  MatMap<T>(g.dx.data(), b, in).noalias() = DY * W.transpose();
  MatMap<T>(g.dw.data(), in, out).noalias() = X.transpose() * DY;
  return g;
}

template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& b) {
  if (x.shape().rank() == 0 || b.shape().rank() != 1 || b.size() != x.shape().back())
    throw ShapeError("add_bias: bias " + b.shape().str() + " does not match " + x.shape().str());
  BasicTensor<T> y = x;
  const std::size_t c = b.size();
  for (std::size_t base = 0; base < y.size(); base += c)
    for (std::size_t j = 0; j < c; ++j) y[base + j] += b[j];
  return y;
}

template <typename T>
BasicTensor<T> add_bias_backward(const BasicTensor<T>& dy) {
  const std::size_t c = dy.shape().back();
  BasicTensor<T> db(Shape{c});
  for (std::size_t base = 0; base < dy.size(); base += c)
    for (std::size_t j = 0; j < c; ++j) db[j] += dy[base + j];
  return db;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernels, std::size_t stride,
                      Padding padding) {
  const ConvGeometry g = conv_geometry(x.shape(), kernels.shape(), stride, padding);
  BasicTensor<T> y(g.out_shape());
  ConstMatMap<T> K(kernels.data(), g.patch(), g.cout);
  if (is_pointwise(g)) {
    MatMap<T>(y.data(), g.out_rows(), g.cout).noalias() =
        ConstMatMap<T>(x.data(), g.out_rows(), g.cin) * K;
    return y;
  }
  const std::size_t step = chunk_rows(g);
  std::vector<T> cols(std::min(step, g.out_rows()) * g.patch());
  for (std::size_t r0 = 0; r0 < g.out_rows(); r0 += step) {
    const std::size_t r1 = std::min(g.out_rows(), r0 + step);
    im2col(x.data(), g, r0, r1, cols.data());
    MatMap<T>(y.data() + r0 * g.cout, r1 - r0, g.cout).noalias() =
        ConstMatMap<T>(cols.data(), r1 - r0, g.patch()) * K;
  }
  return y;
}

template <typename T>
Conv2DGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernels,
                               const BasicTensor<T>& dy, std::size_t stride, Padding padding) {
  const ConvGeometry g = conv_geometry(x.shape(), kernels.shape(), stride, padding);
  if (dy.shape() != g.out_shape())
    throw ShapeError("conv2d_backward: upstream gradient " + dy.shape().str() +
                     " expected " + g.out_shape().str());
  Conv2DGrads<T> out{BasicTensor<T>(x.shape()), BasicTensor<T>(kernels.shape())};
  ConstMatMap<T> K(kernels.data(), g.patch(), g.cout);
  MatMap<T> DK(out.dkernels.data(), g.patch(), g.cout);
  if (is_pointwise(g)) {
    ConstMatMap<T> X(x.data(), g.out_rows(), g.cin), DY(dy.data(), g.out_rows(), g.cout);
    DK.noalias() = X.transpose() * DY;
    MatMap<T>(out.dx.data(), g.out_rows(), g.cin).noalias() = DY * K.transpose();
    return out;
  }
  const std::size_t step = chunk_rows(g);
  const std::size_t cap = std::min(step, g.out_rows());
  std::vector<T> cols(cap * g.patch()), dcols(cap * g.patch());
  for (std::size_t r0 = 0; r0 < g.out_rows(); r0 += step) {
    const std::size_t r1 = std::min(g.out_rows(), r0 + step);
    const auto n = static_cast<Eigen::Index>(r1 - r0);
    im2col(x.data(), g, r0, r1, cols.data());
    ConstMatMap<T> C(cols.data(), n, g.patch());
    ConstMatMap<T> DY(dy.data() + r0 * g.cout, n, g.cout);
    DK.noalias() += C.transpose() * DY;
    MatMap<T>(dcols.data(), n, g.patch()).noalias() = DY * K.transpose();
    col2im_add(dcols.data(), g, r0, r1, out.dx.data());
  }
  return out;
}

template <typename T>
PoolResult<T> pool_forward(const BasicTensor<T>& x, const Window2D& win, PoolMode mode) {
  const Shape& xs = x.shape();
  if (xs.rank() != 4) throw ShapeError("pool input must be [batch,h,w,maps], got " + xs.str());
  const std::size_t batch = xs[0], h = xs[1], w = xs[2], c = xs[3];
  const AxisPlan pr = plan_axis(h, win.kh, win.stride, win.padding);
  const AxisPlan pc = plan_axis(w, win.kw, win.stride, win.padding);
  PoolResult<T> res{BasicTensor<T>(Shape{batch, pr.out, pc.out, c}), {}};
  if (mode == PoolMode::Max) res.argmax.resize(res.y.size());

  std::vector<T> acc(c);
  std::vector<std::size_t> best(c);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oy = 0; oy < pr.out; ++oy) {
      const long y0 = static_cast<long>(oy * win.stride) - static_cast<long>(pr.pad_lo);
      const long ylo = std::max<long>(y0, 0);
      const long yhi = std::min<long>(y0 + static_cast<long>(win.kh), static_cast<long>(h));
      for (std::size_t ox = 0; ox < pc.out; ++ox) {
        const long x0 = static_cast<long>(ox * win.stride) - static_cast<long>(pc.pad_lo);
        const long xlo = std::max<long>(x0, 0);
        const long xhi = std::min<long>(x0 + static_cast<long>(win.kw), static_cast<long>(w));
        const std::size_t out_base = ((n * pr.out + oy) * pc.out + ox) * c;
        if (mode == PoolMode::Avg) {
          std::fill(acc.begin(), acc.end(), T(0));
          for (long iy = ylo; iy < yhi; ++iy)
            for (long ix = xlo; ix < xhi; ++ix) {
              const T* src = x.data() + ((n * h + iy) * w + ix) * c;
              for (std::size_t k = 0; k < c; ++k) acc[k] += src[k];
            }
          const T count = static_cast<T>((yhi - ylo) * (xhi - xlo));
          for (std::size_t k = 0; k < c; ++k) res.y[out_base + k] = acc[k] / count;
        } else {
          std::fill(acc.begin(), acc.end(), -std::numeric_limits<T>::infinity());
          for (long iy = ylo; iy < yhi; ++iy)
            for (long ix = xlo; ix < xhi; ++ix) {
              const std::size_t base = ((n * h + iy) * w + ix) * c;
              for (std::size_t k = 0; k < c; ++k)
                if (x[base + k] > acc[k] || (iy == ylo && ix == xlo)) {
                  acc[k] = x[base + k];
                  best[k] = base + k;
                }
            }
          for (std::size_t k = 0; k < c; ++k) {
            res.y[out_base + k] = acc[k];
            res.argmax[out_base + k] = best[k];
          }
        }
      }
    }
  }
  return res;
}

template <typename T>
BasicTensor<T> pool_backward(const Shape& xs, const Window2D& win, PoolMode mode,
                             const PoolResult<T>& fwd, const BasicTensor<T>& dy) {
  if (dy.shape() != fwd.y.shape()) throw ShapeError("pool_backward: gradient shape mismatch");
  BasicTensor<T> dx(xs);
  if (mode == PoolMode::Max) {
    for (std::size_t i = 0; i < dy.size(); ++i) dx[fwd.argmax[i]] += dy[i];
    return dx;
  }
  const std::size_t batch = xs[0], h = xs[1], w = xs[2], c = xs[3];
  const AxisPlan pr = plan_axis(h, win.kh, win.stride, win.padding);
  const AxisPlan pc = plan_axis(w, win.kw, win.stride, win.padding);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t oy = 0; oy < pr.out; ++oy) {
      const long y0 = static_cast<long>(oy * win.stride) - static_cast<long>(pr.pad_lo);
      const long ylo = std::max<long>(y0, 0);
      const long yhi = std::min<long>(y0 + static_cast<long>(win.kh), static_cast<long>(h));
      for (std::size_t ox = 0; ox < pc.out; ++ox) {
        const long x0 = static_cast<long>(ox * win.stride) - static_cast<long>(pc.pad_lo);
        const long xlo = std::max<long>(x0, 0);
        const long xhi = std::min<long>(x0 + static_cast<long>(win.kw), static_cast<long>(w));
        const T count = static_cast<T>((yhi - ylo) * (xhi - xlo));
        const T* g = dy.data() + ((n * pr.out + oy) * pc.out + ox) * c;
        for (long iy = ylo; iy < yhi; ++iy)
          for (long ix = xlo; ix < xhi; ++ix) {
            T* dst = dx.data() + ((n * h + iy) * w + ix) * c;
            for (std::size_t k = 0; k < c; ++k) dst[k] += g[k] / count;
          }
      }
    }
  return dx;
}

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double keep_prob, Mode mode,
                                 CounterRng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0))
    throw DomainError("keep probability must lie in (0, 1]");
  DropoutResult<T> res{x, BasicTensor<T>(x.shape(), T(1))};
  if (mode == Mode::Eval || keep_prob == 1.0) return res;
  const T scale = static_cast<T>(1.0 / keep_prob);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = rng.bernoulli(keep_prob) ? scale : T(0);
    res.mask[i] = m;
    res.y[i] = x[i] * m;
  }
  return res;
}

double init_variance(const ActivationKind& kind, long fan_in) {
  if (fan_in < 1) throw DomainError("fan-in must be >= 1, got " + std::to_string(fan_in));
  const double n = static_cast<double>(fan_in);
  switch (kind.tag()) {
    case ActivationTag::ERU: return 6.0 / (n * (2.0 * kind.radix().value() + 1.0));
    case ActivationTag::ORU: return 2.0 / (n * kind.radix().value());
    default: return 2.0 / n;
  }
}

std::size_t fan_in_of(const Shape& s) {
  if (s.rank() < 2) throw ShapeError("weight tensor needs rank >= 2, got " + s.str());
  return s.size() / s.back();
}

template <typename T>
BasicTensor<T> sample_weights(const InitSpec& spec, const Shape& shape, CounterRng& rng) {
  if (!(spec.variance > 0.0) || !std::isfinite(spec.variance))
    throw DomainError("initialisation variance must be positive");
  if (shape.rank() >= 2 && fan_in_of(shape) != spec.fan_in)
    throw ShapeError("weight shape " + shape.str() + " has fan-in " +
                     std::to_string(fan_in_of(shape)) + ", expected " +
                     std::to_string(spec.fan_in));
  const double sd = std::sqrt(spec.variance);
  BasicTensor<T> w(shape);
  for (auto& v : w) v = static_cast<T>(sd * rng.normal());
  return w;
}

#define BRU_INSTANTIATE_LAYERS(T)                                                            \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template MatmulGrads<T> matmul_backward(const BasicTensor<T>&, const BasicTensor<T>&,      \
                                          const BasicTensor<T>&);                            \
  template BasicTensor<T> add_bias(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template BasicTensor<T> add_bias_backward(const BasicTensor<T>&);                          \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,  \
                                 Padding);                                                   \
  template Conv2DGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,      \
                                          const BasicTensor<T>&, std::size_t, Padding);      \
  template PoolResult<T> pool_forward(const BasicTensor<T>&, const Window2D&, PoolMode);     \
  template BasicTensor<T> pool_backward(const Shape&, const Window2D&, PoolMode,             \
                                        const PoolResult<T>&, const BasicTensor<T>&);        \
  template DropoutResult<T> dropout_forward(const BasicTensor<T>&, double, Mode,             \
                                            CounterRng&);                                    \
  template BasicTensor<T> sample_weights(const InitSpec&, const Shape&, CounterRng&);

BRU_INSTANTIATE_LAYERS(float)
BRU_INSTANTIATE_LAYERS(double)

#undef BRU_INSTANTIATE_LAYERS

}  // namespace bru
