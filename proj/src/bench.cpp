#include "bru/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "bru/errors.hpp"
#include "bru/loss.hpp"
#include "bru/network.hpp"

namespace bru {

// ---- configuration --------------------------------------------------------------

RunConfig RunConfig::defaults_for(Architecture experiment) {
  RunConfig cfg;
  cfg.experiment = experiment;
  if (experiment == Architecture::MLP) {
    cfg.optimizer = OptimizerConfig::sgd(0.01);
    cfg.batch_size = 64;
  } else {
    cfg.optimizer = OptimizerConfig::adam(1e-4, 0.9, 0.999, 1e-3);
    cfg.batch_size = 120;
  }
  cfg.dataset = experiment == Architecture::ConvPool ? DatasetName::CIFAR10 : DatasetName::MNIST;
  return cfg;
}

void RunConfig::validate() const {
  const bool cifar = dataset != DatasetName::MNIST;
  if ((experiment == Architecture::ConvPool) != cifar)
    throw ConfigError(to_string(experiment) + " does not run on " + to_string(dataset));
  if (experiment == Architecture::MLP && (depth < 4 || depth > 8))
    throw ConfigError("MLP depth must lie in 4..8, got " + std::to_string(depth));
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0))
    throw ConfigError("subset fraction must lie in (0, 1]");
  if (conv9_maps < 1) throw ConfigError("conv9 maps must be >= 1");
  optimizer.validate();
}

ModelSpec RunConfig::model() const {
  switch (experiment) {
    case Architecture::MLP: return build_mlp(depth, family);
    case Architecture::SAE: return build_sae(family);
    case Architecture::LeNetS: return build_lenet(family);
    case Architecture::ConvPool:
      return build_convpool(dataset == DatasetName::CIFAR100 ? 100 : 10, family, conv9_maps);
  }
  throw ConfigError("unknown experiment");
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<Int>(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

std::string normalise_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

}  // namespace

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "experiment=" << to_string(experiment) << '\n'
     << "depth=" << depth << '\n'
     << "dataset=" << to_string(dataset) << '\n'
     << "family=" << to_string(family) << '\n'
     << "optimizer=" << to_string(optimizer.kind) << '\n'
     << "learning_rate=" << fmt(optimizer.learning_rate) << '\n'
     << "beta1=" << fmt(optimizer.beta1) << '\n'
     << "beta2=" << fmt(optimizer.beta2) << '\n'
     << "epsilon=" << fmt(optimizer.epsilon) << '\n'
     << "batch_size=" << batch_size << '\n'
     << "epochs=" << epochs << '\n'
     << "seed=" << seed << '\n'
     << "data_dir=" << data_dir.string() << '\n'
     << "out=" << output_path.string() << '\n'
     << "subset_fraction=" << fmt(subset_fraction) << '\n'
     << "conv9_maps=" << conv9_maps << '\n';
  return os.str();
}

void apply_setting(RunConfig& cfg, const std::string& raw_key, const std::string& value) {
  const std::string key = normalise_key(raw_key);
  if (key == "experiment") cfg.experiment = parse_architecture(value);
  else if (key == "depth") cfg.depth = parse_int<int>(key, value);
  else if (key == "family") cfg.family = parse_family(value);
  else if (key == "dataset") cfg.dataset = parse_dataset_name(value);
  else if (key == "classes") {
    const int c = parse_int<int>(key, value);
    if (c != 10 && c != 100) throw ConfigError("classes must be 10 or 100, got " + value);
    cfg.dataset = c == 10 ? DatasetName::CIFAR10 : DatasetName::CIFAR100;
  } else if (key == "optimizer") {
    const OptimizerKind kind = parse_optimizer_kind(value);
    if (kind != cfg.optimizer.kind)
      cfg.optimizer = kind == OptimizerKind::SGD ? OptimizerConfig::sgd(0.01) : OptimizerConfig::adam();
  } else if (key == "learning_rate" || key == "lr") cfg.optimizer.learning_rate = parse_real(key, value);
  else if (key == "beta1") cfg.optimizer.beta1 = parse_real(key, value);
  else if (key == "beta2") cfg.optimizer.beta2 = parse_real(key, value);
  else if (key == "epsilon") cfg.optimizer.epsilon = parse_real(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_int<std::size_t>(key, value);
  else if (key == "epochs") cfg.epochs = parse_int<int>(key, value);
  else if (key == "seed") cfg.seed = parse_int<std::uint64_t>(key, value);
  else if (key == "data_dir") cfg.data_dir = value;
  else if (key == "out" || key == "output_path") cfg.output_path = value;
  else if (key == "subset_fraction") cfg.subset_fraction = parse_real(key, value);
  else if (key == "conv9_maps") cfg.conv9_maps = parse_int<std::size_t>(key, value);
  else throw ConfigError("unknown setting '" + raw_key + "'");
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    out[normalise_key(trim(line.substr(0, eq)))] = trim(line.substr(eq + 1));
  }
  return out;
}

RunConfig resolve_config(const std::map<std::string, std::string>& file,
                         const std::map<std::string, std::string>& flags) {
  auto lookup = [&](const std::string& key) -> std::optional<std::string> {
    if (auto it = flags.find(key); it != flags.end()) return it->second;
    if (auto it = file.find(key); it != file.end()) return it->second;
    return std::nullopt;
  };
  RunConfig cfg = RunConfig::defaults_for(parse_architecture(lookup("experiment").value_or("MLP")));
  auto layer = [&](const std::map<std::string, std::string>& kv) {
    // The optimizer kind resets its hyperparameters, so it goes first.
    if (auto it = kv.find("optimizer"); it != kv.end()) apply_setting(cfg, it->first, it->second);
    for (const auto& [k, v] : kv)
      if (k != "optimizer") apply_setting(cfg, k, v);
  };
  layer(file);
  if (const char* env = std::getenv(kDataDirEnv); env && *env) cfg.data_dir = env;
  layer(flags);
  cfg.validate();
  return cfg;
}

// ---- training ---------------------------------------------------------------------

std::string format_metrics_row(const EpochMetrics& m) {
  std::string row = std::to_string(m.epoch) + "," + (m.split == Split::Train ? "train" : "test") +
                    "," + fmt9(m.loss) + ",";
  if (m.error_quotient) row += fmt9(*m.error_quotient);
  row += ",";
  if (m.reconstruction_error) row += fmt9(*m.reconstruction_error);
  char wall[32];
  std::snprintf(wall, sizeof wall, ",%.3f", m.wall_seconds);
  return row + wall;
}

std::uint64_t tensor_hash(const Tensor& t) {
  std::uint64_t h = 14695981039346656037ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
  for (std::size_t i = 0; i < t.size() * sizeof(float); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

using Clock = std::chrono::steady_clock;

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw ConfigError("cannot write metrics to " + path.string());
    out_ << kMetricsHeader << '\n';
    out_.flush();
  }
  void write(const EpochMetrics& m) {
    out_ << format_metrics_row(m) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::filesystem::path sidecar(const std::filesystem::path& csv, const char* ext) {
  return std::filesystem::path(csv.string() + ext);
}

void augment_batch(Tensor& images, CounterRng& rng) {
  const std::size_t n = images.shape()[0];
  const Shape one = images.shape().tail();
  const std::size_t stride = one.size();
  for (std::size_t i = 0; i < n; ++i) {
    Tensor img(one, std::vector<float>(images.begin() + i * stride, images.begin() + (i + 1) * stride));
    const Tensor out = augment_pad_crop_flip(img, rng);
    std::copy(out.begin(), out.end(), images.begin() + i * stride);
  }
}

struct Accumulator {
  double loss = 0.0;
  double errors = 0.0;
  double recon = 0.0;
  std::size_t count = 0;

  void add(const Network<float>& net, const Batch& b) {
    const std::size_t n = b.labels.size();
    loss += net.loss_value() * n;
    const auto& g = net.graph();
    if (net.reconstructs()) {
      recon += reconstruction_error(g.value(net.output()),
                                    b.images.reshaped(Shape{n, b.images.size() / n})) * n;
    } else {
      errors += static_cast<double>(misclassified(g.value(net.logits()), b.labels));
    }
    count += n;
  }

  EpochMetrics finish(int epoch, Split split, bool reconstructs, double wall) const {
    EpochMetrics m;
    m.epoch = epoch;
    m.split = split;
    m.loss = loss / count;
    if (reconstructs) m.reconstruction_error = recon / count;
    else m.error_quotient = errors / count;
    m.wall_seconds = wall;
    return m;
  }
};

void check_finite(double loss, int epoch, std::size_t batch) {
  if (!std::isfinite(loss))
    throw DivergenceError("non-finite training loss " + fmt9(loss) + " at epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(batch),
                          epoch, static_cast<long>(batch));
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg, const RunHooks& hooks) {
  cfg.validate();
  DatasetPair data = cfg.dataset == DatasetName::MNIST
                         ? load_mnist_dir(cfg.data_dir)
                         : load_cifar_dir(cfg.data_dir, cfg.dataset == DatasetName::CIFAR10
                                                            ? CifarVariant::C10
                                                            : CifarVariant::C100);
  return run_experiment(cfg, std::move(data), hooks);
}

RunResult run_experiment(const RunConfig& cfg, DatasetPair data, const RunHooks& hooks) {
  cfg.validate();
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  if (cfg.experiment == Architecture::MLP || cfg.experiment == Architecture::SAE) {
    scale01(data.train);
    scale01(data.test);
  } else {
    standardize(data.train, data.test);
  }
  if (cfg.subset_fraction < 1.0) {
    const auto keep = stratified_subset(data.train.labels, cfg.subset_fraction, cfg.seed);
    data.train = data.train.subset(keep);
  }

  const ModelSpec spec = cfg.model();
  if (data.train.image_shape() != spec.input_shape)
    throw ShapeError("dataset images are " + data.train.image_shape().str() + ", model expects " +
                     spec.input_shape.str());
  Network<float> net(spec, cfg.seed);
  Optimizer<float> opt(cfg.optimizer);
  const bool augment = cfg.experiment == Architecture::ConvPool;

  CsvWriter csv(cfg.output_path);
  write_text(sidecar(cfg.output_path, ".config"), cfg.serialize());
  write_text(sidecar(cfg.output_path, ".model"), spec.serialize());

  RunResult result;
  result.parameter_count = net.graph().parameter_count();
  const BatchPlan plan{std::min(cfg.batch_size, data.train.size()), false};
  const std::size_t eval_batch = std::max<std::size_t>(cfg.batch_size, 100);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Accumulator train;
    CounterRng aug_rng(cfg.seed, "augment", static_cast<std::uint64_t>(epoch));
    const auto order = batches(data.train.size(), plan, cfg.seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t bi = 0; bi < order.size(); ++bi) {
      Batch b = gather(data.train, order[bi]);
      if (augment) augment_batch(b.images, aug_rng);
      try {
        net.forward(b.images, b.labels, Mode::Train);
      } catch (const DomainError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(bi),
                              epoch, static_cast<long>(bi));
      }
      check_finite(net.loss_value(), epoch, bi);
      train.add(net, b);
      net.graph().backward(net.loss());
      auto params = net.graph().parameter_values();
      auto grads = net.graph().parameter_gradients();
      opt.step(params, grads);
    }
    const EpochMetrics train_row = train.finish(epoch, Split::Train, net.reconstructs(), elapsed());
    csv.write(train_row);
    result.rows.push_back(train_row);

    Accumulator test;
    for (std::size_t lo = 0; lo < data.test.size(); lo += eval_batch) {
      std::vector<std::size_t> idx(std::min(eval_batch, data.test.size() - lo));
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = lo + i;
      const Batch b = gather(data.test, idx);
      try {
        net.forward(b.images, b.labels, Mode::Eval);
      } catch (const DomainError& e) {
        throw DivergenceError(std::string(e.what()) + " evaluating epoch " + std::to_string(epoch),
                              epoch, -1);
      }
      test.add(net, b);
    }
    const EpochMetrics test_row = test.finish(epoch, Split::Test, net.reconstructs(), elapsed());
    if (!std::isfinite(test_row.loss))
      throw DivergenceError("non-finite test loss at epoch " + std::to_string(epoch), epoch, -1);
    csv.write(test_row);
    result.rows.push_back(test_row);

    if (hooks.log) {
      *hooks.log << spec.name << ' ' << to_string(cfg.family) << " seed " << cfg.seed << " epoch "
                 << epoch << ": train loss " << fmt9(train_row.loss) << ", test loss "
                 << fmt9(test_row.loss) << ", " << std::fixed << std::setprecision(1)
                 << test_row.wall_seconds << " s" << std::defaultfloat << std::endl;
    }
    if (hooks.on_epoch && !hooks.on_epoch(train_row, test_row)) break;
  }

  for (NodeId id : net.graph().parameter_ids())
    result.parameter_hashes.push_back(tensor_hash(net.graph().value(id)));
  return result;
}

// ---- comparison ---------------------------------------------------------------------

RunFile read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics file " + path.string());
  RunFile run;
  run.path = path;
  const auto cfg_path = sidecar(path, ".config");
  if (!std::filesystem::exists(cfg_path))
    throw ConfigError("missing run description " + cfg_path.string());
  RunConfig cfg;
  const auto kv = read_key_values(cfg_path);
  if (auto it = kv.find("experiment"); it != kv.end()) cfg = RunConfig::defaults_for(parse_architecture(it->second));
  for (const auto& [k, v] : kv) apply_setting(cfg, k, v);
  run.experiment = cfg.model().name;
  run.family = cfg.family;

  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw ParseError(path.string() + ": unexpected header");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 6)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 6 cells");
    EpochMetrics m;
    m.epoch = std::stoi(cells[0]);
    if (cells[1] != "train" && cells[1] != "test")
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad split '" + cells[1] + "'");
    m.split = cells[1] == "train" ? Split::Train : Split::Test;
    m.loss = std::stod(cells[2]);
    if (!cells[3].empty()) m.error_quotient = std::stod(cells[3]);
    if (!cells[4].empty()) m.reconstruction_error = std::stod(cells[4]);
    m.wall_seconds = cells[5].empty() ? 0.0 : std::stod(cells[5]);
    run.rows.push_back(m);
  }
  return run;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

const FamilySeries& CompareReport::of(Family f) const {
  for (const auto& s : series)
    if (s.family == f) return s;
  throw ConfigError("no runs for family " + to_string(f));
}

namespace {

std::optional<double> metric_of(const EpochMetrics& m, const std::string& metric) {
  if (metric == "loss") return m.loss;
  if (metric == "error_quotient") return m.error_quotient;
  if (metric == "reconstruction_error") return m.reconstruction_error;
  throw ConfigError("unknown metric '" + metric + "'");
}

/// Median across runs of `metric` on `split` per epoch, restricted to epochs all runs share.
std::map<int, double> median_by_epoch(const std::vector<const RunFile*>& runs, const std::string& metric,
                                      Split split, std::optional<int> first, std::optional<int> last) {
  std::map<int, std::vector<double>> by_epoch;
  for (const RunFile* r : runs)
    for (const auto& m : r->rows) {
      if (m.split != split) continue;
      if ((first && m.epoch < *first) || (last && m.epoch > *last)) continue;
      if (auto v = metric_of(m, metric)) by_epoch[m.epoch].push_back(*v);
    }
  std::map<int, double> out;
  for (auto& [e, v] : by_epoch)
    if (v.size() == runs.size()) out[e] = quantile(v, 0.5);
  return out;
}

}  // namespace

CompareReport compare_runs(const std::vector<std::filesystem::path>& csv_paths, const std::string& metric,
                           Split split, std::optional<int> first_epoch, std::optional<int> last_epoch) {
  std::vector<RunFile> runs;
  for (const auto& p : csv_paths) runs.push_back(read_run(p));
  return compare_runs(runs, metric, split, first_epoch, last_epoch);
}

CompareReport compare_runs(const std::vector<RunFile>& runs, const std::string& metric, Split split,
                           std::optional<int> first_epoch, std::optional<int> last_epoch) {
  if (runs.empty()) throw ConfigError("no runs to compare");
  metric_of(EpochMetrics{}, metric);
  CompareReport report;
  report.experiment = runs.front().experiment;
  report.metric = metric;
  report.split = split;

  std::vector<Family> families;
  std::map<Family, std::vector<const RunFile*>> grouped;
  for (const auto& r : runs) {
    if (r.experiment != report.experiment)
      throw ConfigError("cannot compare " + report.experiment + " with " + r.experiment + " (" +
                        r.path.string() + ")");
    if (!grouped.count(r.family)) families.push_back(r.family);
    grouped[r.family].push_back(&r);
  }

  for (Family f : families) {
    const auto& group = grouped[f];
    FamilySeries s;
    s.family = f;
    s.runs = group.size();
    std::map<int, std::vector<double>> by_epoch;
    for (const RunFile* r : group)
      for (const auto& m : r->rows) {
        if (m.split != split) continue;
        if ((first_epoch && m.epoch < *first_epoch) || (last_epoch && m.epoch > *last_epoch)) continue;
        if (auto v = metric_of(m, metric)) by_epoch[m.epoch].push_back(*v);
      }
    for (auto& [e, v] : by_epoch) {
      if (v.size() != group.size()) continue;
      s.epochs.push_back(e);
      s.median.push_back(quantile(v, 0.5));
      s.q1.push_back(quantile(v, 0.25));
      s.q3.push_back(quantile(v, 0.75));
    }
    report.series.push_back(std::move(s));

    const auto test_loss = median_by_epoch(group, "loss", Split::Test, first_epoch, last_epoch);
    if (!test_loss.empty()) {
      double best = test_loss.begin()->second;
      for (const auto& [e, v] : test_loss) best = std::min(best, v);
      report.min_test_loss[f] = best;
    }
    const auto test_err = median_by_epoch(group, "error_quotient", Split::Test, first_epoch, last_epoch);
    if (!test_err.empty()) {
      double best = test_err.begin()->second;
      for (const auto& [e, v] : test_err) best = std::min(best, v);
      report.min_test_error_quotient[f] = best;
    }
  }

  std::map<int, std::vector<std::pair<double, Family>>> at_epoch;
  for (const auto& s : report.series)
    for (std::size_t i = 0; i < s.epochs.size(); ++i) at_epoch[s.epochs[i]].push_back({s.median[i], s.family});
  for (auto& [e, v] : at_epoch) {
    if (v.size() != report.series.size()) continue;
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Family> order;
    for (const auto& p : v) order.push_back(p.second);
    report.ordering.push_back(std::move(order));
  }
  return report;
}

std::string CompareReport::render() const {
  std::ostringstream os;
  os << "experiment " << experiment << ", metric " << metric << " ("
     << (split == Split::Train ? "train" : "test") << "), median [q1, q3] across runs\n";
  os << "epoch";
  for (const auto& s : series) os << "  " << to_string(s.family) << "(n=" << s.runs << ")";
  os << "  ordering\n";
  std::map<int, std::vector<std::string>> cells;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.epochs.size(); ++i)
      cells[s.epochs[i]].push_back(fmt9(s.median[i]) + " [" + fmt9(s.q1[i]) + ", " + fmt9(s.q3[i]) + "]");
  std::size_t k = 0;
  for (const auto& [e, c] : cells) {
    os << e;
    for (const auto& x : c) os << "  " << x;
    if (c.size() == series.size() && k < ordering.size()) {
      os << "  ";
      for (std::size_t i = 0; i < ordering[k].size(); ++i) os << (i ? " < " : "") << to_string(ordering[k][i]);
      ++k;
    }
    os << '\n';
  }
  for (const auto& [f, v] : min_test_loss) os << "min test loss " << to_string(f) << ": " << fmt9(v) << '\n';
  for (const auto& [f, v] : min_test_error_quotient)
    os << "min test error quotient " << to_string(f) << ": " << fmt9(v) << '\n';
  return os.str();
}

}  // namespace bru
