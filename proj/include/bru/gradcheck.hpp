#pragma once

// Central-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <span>
#include <vector>

#include "bru/graph.hpp"
#include "bru/rng.hpp"
#include "bru/tensor.hpp"

namespace bru {

/// (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate i.
template <typename T>
BasicTensor<T> fd_gradient(const std::function<double(const BasicTensor<T>&)>& f,
                           const BasicTensor<T>& p, double h) {
  BasicTensor<T> grad(p.shape());
  BasicTensor<T> probe = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    probe[i] = static_cast<T>(p[i] + h);
    const double up = f(probe);
    probe[i] = static_cast<T>(p[i] - h);
    const double down = f(probe);
    probe[i] = p[i];
    grad[i] = static_cast<T>((up - down) / (2.0 * h));
  }
  return grad;
}

/// Central differences for a subset of coordinates, in `indices` order.
template <typename T>
std::vector<double> fd_gradient(const std::function<double(const BasicTensor<T>&)>& f,
                                const BasicTensor<T>& p, double h,
                                std::span<const std::size_t> indices) {
  std::vector<double> out;
  out.reserve(indices.size());
  BasicTensor<T> probe = p;
  for (std::size_t i : indices) {
    probe[i] = static_cast<T>(p[i] + h);
    const double up = f(probe);
    probe[i] = static_cast<T>(p[i] - h);
    const double down = f(probe);
    probe[i] = p[i];
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

/// |a - b| / max(|a|, |b|); 0 when both are exactly 0.
inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Outcome of comparing an analytic gradient against the oracle.
struct GradCheckStats {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double max_relative = 0.0;
  double max_absolute = 0.0;

  /// A coordinate passes when its relative error is below `rel_tol` or,
  /// for near-zero gradients, its absolute error is below `abs_tol`.
  void add(double analytic, double numeric, double rel_tol, double abs_tol) {
    ++checked;
    const double rel = relative_error(analytic, numeric);
    const double abs = std::abs(analytic - numeric);
    max_relative = std::max(max_relative, rel);
    max_absolute = std::max(max_absolute, abs);
    if (!(rel < rel_tol || abs < abs_tol)) ++failures;
  }
  bool ok() const { return checked > 0 && failures == 0; }
};

/// `count` distinct coordinates of [0, n), or all of them when n <= count.
inline std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t count,
                                                   CounterRng& rng) {
  auto perm = rng.permutation(n);
  if (perm.size() > count) perm.resize(count);
  std::sort(perm.begin(), perm.end());
  return perm;
}

/// Standard normal tensor scaled by `stddev`, drawn in double precision so
/// that 32- and 64-bit twins start from the same values.
template <typename T>
BasicTensor<T> normal_tensor(const Shape& shape, CounterRng& rng, double stddev = 1.0) {
  BasicTensor<T> t(shape);
  for (auto& v : t) v = static_cast<T>(stddev * rng.normal());
  return t;
}

/// Backward of `analytic` against central differences of `oracle`, a
/// 64-bit graph with the same construction sequence. Parameters of the
/// oracle are overwritten with those of `analytic`. `wrt` names input or
/// parameter nodes; `count` coordinates are drawn across all of them.
/// Dropout in both graphs replays stream ("dropout") of `dropout_seed`.
template <typename T>
GradCheckStats check_graph_gradients(Graph<T>& analytic, Graph<double>& oracle,
                                     const std::map<std::string, BasicTensor<double>>& feed,
                                     NodeId loss, const std::vector<NodeId>& wrt,
                                     std::size_t count, double h, double rel_tol, double abs_tol,
                                     std::uint64_t sample_seed = 1, std::uint64_t dropout_seed = 1) {
  for (NodeId id : analytic.parameter_ids())
    oracle.parameter_value(id) = analytic.parameter_value(id).template cast<double>();

  typename Graph<T>::Feed feed_t;
  for (const auto& [k, v] : feed) feed_t.emplace(k, v.template cast<T>());
  CounterRng drop_a(dropout_seed, "dropout");
  analytic.forward(feed_t, Mode::Train, &drop_a);
  analytic.backward(loss);

  std::vector<std::size_t> offsets{0};
  for (NodeId id : wrt) offsets.push_back(offsets.back() + analytic.gradient(id).size());
  CounterRng pick(sample_seed, "gradcheck");
  const auto coords = sample_coordinates(offsets.back(), count, pick);

  // The oracle sees the inputs exactly as the analytic graph does.
  std::map<std::string, BasicTensor<double>> feed_d;
  for (const auto& [k, v] : feed_t) feed_d.emplace(k, v.template cast<double>());
  auto eval = [&]() {
    CounterRng drop(dropout_seed, "dropout");
    oracle.forward(feed_d, Mode::Train, &drop);
    return static_cast<double>(oracle.value(loss)[0]);
  };

  GradCheckStats stats;
  for (std::size_t c : coords) {
    std::size_t k = 0;
    while (c >= offsets[k + 1]) ++k;
    const std::size_t i = c - offsets[k];
    const NodeId id = wrt[k];
    const bool is_input = oracle.kind(id) == "input";
    double& slot = is_input ? feed_d.at(oracle.name(id))[i] : oracle.parameter_value(id)[i];
    const double saved = slot;
    slot = saved + h;
    const double up = eval();
    slot = saved - h;
    const double down = eval();
    slot = saved;
    stats.add(static_cast<double>(analytic.gradient(id)[i]), (up - down) / (2.0 * h), rel_tol, abs_tol);
  }
  return stats;
}

}  // namespace bru
