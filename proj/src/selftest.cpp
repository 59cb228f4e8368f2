#include "bru/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "bru/activation.hpp"
#include "bru/data.hpp"
#include "bru/errors.hpp"
#include "bru/gradcheck.hpp"
#include "bru/graph.hpp"
#include "bru/layers.hpp"

namespace bru {

bool SelftestReport::passed() const { return failures() == 0 && !checks.empty(); }

std::size_t SelftestReport::failures() const {
  std::size_t n = 0;
  for (const auto& c : checks) n += c.passed ? 0 : 1;
  return n;
}

void SelftestReport::print(std::ostream& os) const {
  for (const auto& c : checks) {
    os << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) os << " (" << c.detail << ")";
    os << '\n';
  }
  os << checks.size() - failures() << "/" << checks.size() << " checks passed\n";
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const std::vector<ActivationKind>& bru_kinds() {
  static const std::vector<ActivationKind> kinds{
      ActivationKind::eru(1), ActivationKind::eru(2), ActivationKind::eru(3),
      ActivationKind::oru(1), ActivationKind::oru(2), ActivationKind::oru(3)};
  return kinds;
}

// ---- activation properties ----------------------------------------------------------

void activation_properties(SelftestReport& report) {
  for (const auto& k : bru_kinds()) {
    const double r = k.radix().value();
    const double left = activate<double>(k, -1e-12), right = activate<double>(k, 1e-12);
    const double at0 = activate<double>(k, 0.0);
    const bool cont = std::abs(left - at0) < 1e-9 && std::abs(right - at0) < 1e-9;
    report.checks.push_back({"continuity at 0 " + k.name(), cont, "f(0)=" + num(at0)});

    const double dl = activate_derivative<double>(k, -1e-300), d0 = activate_derivative<double>(k, 0.0);
    bool peak = std::abs(d0 - r) < 1e-12 && std::abs(dl - r) < 1e-12;
    for (double z : {-3.0, -0.5, -1e-3, 1e-3, 0.5, 3.0}) peak = peak && activate_derivative<double>(k, z) <= r + 1e-12;
    report.checks.push_back({"slope maximum r at 0 " + k.name(), peak, "f'(0)=" + num(d0)});
  }

  double worst_elu = 0.0, worst_id = 0.0;
  bool odd = true;
  for (int i = -400; i <= 400; ++i) {
    const double z = i * 0.025;
    worst_elu = std::max(worst_elu, std::abs(activate<double>(ActivationKind::eru(1), z) - elu_forward(z)));
    worst_id = std::max(worst_id, std::abs(activate<double>(ActivationKind::oru(1), z) - z));
    for (double r : {1.0, 2.0, 3.0, 2.5})
      odd = odd && oru_forward(-z, Radix(r)) == -oru_forward(z, Radix(r));
  }
  report.checks.push_back({"E1RU equals ELU", worst_elu <= 1e-12, "max diff " + num(worst_elu)});
  report.checks.push_back({"O1RU equals identity", worst_id <= 1e-12, "max diff " + num(worst_id)});
  report.checks.push_back({"ORU is odd", odd, ""});
}

// ---- gradient checks ------------------------------------------------------------------

void activation_gradients(SelftestReport& report, const SelftestFaults& faults) {
  std::vector<ActivationKind> kinds = bru_kinds();
  kinds.push_back(ActivationKind::elu());
  kinds.push_back(ActivationKind::sigmoid());
  for (const auto& k : kinds) {
    const double factor = faults.eru_derivative_doubled && k.tag() == ActivationTag::ERU ? 2.0 : 1.0;
    GradCheckStats stats;
    for (int i = -60; i <= 60; ++i) {
      if (i == 0) continue;
      const double z = i * 0.05 + 0.013;
      const double h = 1e-6;
      const double fd = (activate<double>(k, z + h) - activate<double>(k, z - h)) / (2 * h);
      stats.add(factor * activate_derivative<double>(k, z), fd, 1e-5, 1e-10);
    }
    report.checks.push_back({"gradcheck activation " + k.name(), stats.ok(),
                             "max rel err " + num(stats.max_relative)});
  }
}

struct Built {
  NodeId loss;
  std::vector<NodeId> wrt;
};

using Feed64 = std::map<std::string, Tensor64>;
using Builder = std::function<Built(Graph<double>&)>;

void graph_check(SelftestReport& report, const std::string& name, const Builder& build,
                 const Feed64& feed) {
  try {
    Graph<double> a, o;
    const Built ba = build(a);
    build(o);
    const auto stats = check_graph_gradients(a, o, feed, ba.loss, ba.wrt, 200, 1e-6, 1e-5, 1e-9);
    report.checks.push_back({"gradcheck " + name, stats.ok(),
                             std::to_string(stats.checked) + " coords, max rel err " + num(stats.max_relative)});
  } catch (const std::exception& e) {
    report.checks.push_back({"gradcheck " + name, false, e.what()});
  }
}

void primitive_gradients(SelftestReport& report) {
  CounterRng rng(11, "selftest");
  Feed64 dense_feed{{"x", normal_tensor<double>(Shape{4, 6}, rng)}};
  graph_check(report, "dense", [](Graph<double>& g) {
    CounterRng p(1, "params");
    const NodeId x = g.input("x", Shape{6});
    const NodeId w = g.parameter("w", normal_tensor<double>(Shape{6, 5}, p, 0.5));
    const NodeId b = g.parameter("b", normal_tensor<double>(Shape{5}, p, 0.5));
    const NodeId y = g.add_bias(g.matmul(x, w), b);
    return Built{g.half_squared_norm(y), {x, w, b}};
  }, dense_feed);

  Feed64 img_feed{{"x", normal_tensor<double>(Shape{2, 5, 5, 3}, rng)}};
  auto conv_case = [](std::size_t k, std::size_t stride, Padding pad) {
    return [=](Graph<double>& g) {
      CounterRng p(2, "params");
      const NodeId x = g.input("x", Shape{5, 5, 3});
      const NodeId w = g.parameter("w", normal_tensor<double>(Shape{k, k, 3, 4}, p, 0.3));
      return Built{g.half_squared_norm(g.conv2d(x, w, stride, pad)), {x, w}};
    };
  };
  graph_check(report, "conv2d 3x3 same", conv_case(3, 1, Padding::Same), img_feed);
  graph_check(report, "conv2d 2x2/2 valid", conv_case(2, 2, Padding::Valid), img_feed);
  graph_check(report, "conv2d 1x1", conv_case(1, 1, Padding::Same), img_feed);

  auto pool_case = [](std::size_t k, std::size_t stride, Padding pad, PoolMode mode) {
    return [=](Graph<double>& g) {
      const NodeId x = g.input("x", Shape{5, 5, 3});
      return Built{g.half_squared_norm(g.pool(x, Window2D{k, k, stride, pad}, mode)), {x}};
    };
  };
  graph_check(report, "avgpool 2x2/2 same", pool_case(2, 2, Padding::Same, PoolMode::Avg), img_feed);
  graph_check(report, "maxpool 3x3/2 valid", pool_case(3, 2, Padding::Valid, PoolMode::Max), img_feed);

  for (const auto& k : {ActivationKind::eru(2), ActivationKind::oru(3), ActivationKind::elu(),
                        ActivationKind::sigmoid()}) {
    graph_check(report, "activation node " + k.name(), [k](Graph<double>& g) {
      const NodeId x = g.input("x", Shape{6});
      return Built{g.half_squared_norm(g.activation(x, k)), {x}};
    }, dense_feed);
  }

  graph_check(report, "dropout", [](Graph<double>& g) {
    const NodeId x = g.input("x", Shape{6});
    return Built{g.half_squared_norm(g.dropout(x, 0.5)), {x}};
  }, dense_feed);

  Tensor64 labels(Shape{4}, std::vector<double>{3, 0, 9, 5});
  graph_check(report, "softmax cross entropy", [](Graph<double>& g) {
    CounterRng p(3, "params");
    const NodeId z = g.parameter("z", normal_tensor<double>(Shape{4, 10}, p, 2.0));
    const NodeId y = g.input("labels", Shape{});
    return Built{g.softmax_cross_entropy(z, y), {z}};
  }, Feed64{{"labels", labels}});

  Tensor64 targets(Shape{3, 8});
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = (i % 5) / 4.0;
  graph_check(report, "sigmoid cross entropy", [](Graph<double>& g) {
    CounterRng p(4, "params");
    const NodeId z = g.parameter("z", normal_tensor<double>(Shape{3, 8}, p, 2.0));
    const NodeId t = g.input("t", Shape{8});
    return Built{g.sigmoid_cross_entropy(z, t), {z}};
  }, Feed64{{"t", targets}});

  Feed64 net_feed{{"x", normal_tensor<double>(Shape{1, 784}, rng)},
                  {"labels", Tensor64(Shape{1}, std::vector<double>{7})}};
  graph_check(report, "two-layer BRU network", [](Graph<double>& g) {
    CounterRng p(5, "params");
    const NodeId x = g.input("x", Shape{784});
    const NodeId w1 = g.parameter("w1", normal_tensor<double>(Shape{784, 32}, p, std::sqrt(6.0 / (784 * 5))));
    const NodeId b1 = g.parameter("b1", normal_tensor<double>(Shape{32}, p, 0.1));
    const NodeId w2 = g.parameter("w2", normal_tensor<double>(Shape{32, 16}, p, std::sqrt(2.0 / (32 * 3))));
    const NodeId b2 = g.parameter("b2", normal_tensor<double>(Shape{16}, p, 0.1));
    const NodeId w3 = g.parameter("w3", normal_tensor<double>(Shape{16, 10}, p, std::sqrt(2.0 / 16)));
    const NodeId b3 = g.parameter("b3", Tensor64(Shape{10}));
    NodeId h = g.activation(g.add_bias(g.matmul(x, w1), b1), ActivationKind::eru(2));
    h = g.activation(g.add_bias(g.matmul(h, w2), b2), ActivationKind::oru(3));
    const NodeId z = g.add_bias(g.matmul(h, w3), b3);
    const NodeId y = g.input("labels", Shape{});
    return Built{g.softmax_cross_entropy(z, y), {w1, b1, w2, b2, w3, b3}};
  }, net_feed);
}

// ---- parser fixtures -------------------------------------------------------------------

void parser_fixtures(SelftestReport& report) {
  auto check = [&](const std::string& name, const std::function<bool(std::string&)>& body) {
    std::string detail;
    bool ok = false;
    try {
      ok = body(detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    report.checks.push_back({name, ok, detail});
  };
  const std::vector<std::uint8_t> images = [] {
    std::vector<std::uint8_t> b{0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2};
    b.insert(b.end(), {255, 0, 0, 0});
    return b;
  }();
  const std::vector<std::uint8_t> labels{0, 0, 8, 1, 0, 0, 0, 1, 4};

  check("IDX golden fixture", [&](std::string&) {
    const Dataset ds = parse_mnist_idx(images, labels);
    return ds.size() == 1 && ds.labels[0] == 4 && ds.images[0] == 255.0f && ds.images[1] == 0.0f &&
           ds.images.shape() == Shape{1, 2, 2, 1};
  });
  check("IDX bad magic rejected", [&](std::string& d) {
    auto bad = images;
    bad[2] = bad[3] = 0;
    try {
      parse_mnist_idx(bad, labels);
    } catch (const ParseError& e) {
      d = e.what();
      return true;
    }
    return false;
  });
  check("IDX truncation rejected", [&](std::string& d) {
    const std::vector<std::uint8_t> cut(images.begin(), images.end() - 1);
    try {
      parse_mnist_idx(cut, labels);
    } catch (const ParseError& e) {
      d = e.what();
      return true;
    }
    return false;
  });
  check("CIFAR-10 golden fixture", [&](std::string&) {
    std::vector<std::uint8_t> rec(1 + 3072, 0);
    rec[0] = 7;
    const Dataset ds = parse_cifar(rec, CifarVariant::C10);
    bool zero = true;
    for (float v : ds.images) zero = zero && v == 0.0f;
    return ds.size() == 1 && ds.labels[0] == 7 && zero;
  });
  check("CIFAR-100 fine label", [&](std::string&) {
    std::vector<std::uint8_t> rec(2 + 3072, 0);
    rec[0] = 3;
    rec[1] = 42;
    return parse_cifar(rec, CifarVariant::C100).labels[0] == 42;
  });
  check("CIFAR length check", [&](std::string& d) {
    std::vector<std::uint8_t> rec(3072, 0);
    try {
      parse_cifar(rec, CifarVariant::C10);
    } catch (const ParseError& e) {
      d = e.what();
      return true;
    }
    return false;
  });
}

// ---- initialisation ----------------------------------------------------------------------

double expected_variance(const ActivationKind& k, double n) {
  switch (k.tag()) {
    case ActivationTag::ERU: return 6.0 / (n * (2.0 * k.radix().value() + 1.0));
    case ActivationTag::ORU: return 2.0 / (n * k.radix().value());
    default: return 2.0 / n;
  }
}

void init_statistics(SelftestReport& report, const SelftestFaults& faults) {
  std::vector<ActivationKind> kinds = bru_kinds();
  kinds.push_back(ActivationKind::relu());
  for (const auto& k : kinds) {
    for (std::size_t n : {128u, 784u}) {
      double variance = init_variance(k, static_cast<long>(n));
      if (faults.oru2_init_two_over_n && k == ActivationKind::oru(2)) variance = 2.0 / n;
      const std::size_t cols = (1000000 + n - 1) / n;
      const Tensor64 w = sample_weights<double>(InitSpec{n, variance}, Shape{n, cols}, 20250101);
      double mean = 0.0;
      for (double v : w) mean += v;
      mean /= static_cast<double>(w.size());
      double var = 0.0;
      for (double v : w) var += (v - mean) * (v - mean);
      var /= static_cast<double>(w.size());
      const double want = expected_variance(k, static_cast<double>(n));
      const double rel = std::abs(var - want) / want;
      report.checks.push_back({"init variance " + k.name() + " n=" + std::to_string(n), rel < 0.01,
                               "empirical " + num(var) + " vs " + num(want)});
    }
  }
}

}  // namespace

SelftestReport run_selftest(const SelftestFaults& faults) {
  SelftestReport report;
  activation_properties(report);
  activation_gradients(report, faults);
  primitive_gradients(report);
  parser_fixtures(report);
  init_statistics(report, faults);
  return report;
}

}  // namespace bru
