#pragma once

// Experiment runner: run configuration, seeded training loop, metrics CSV
// and cross-family comparison.
//
// Random streams derived from the run seed:
//   ("weights", layer)  parameter initialisation
//   ("dropout")         dropout masks, in batch order
//   ("shuffle", epoch)  minibatch permutation
//   ("augment", epoch)  pad/crop/flip draws, in batch order
//   ("subset")          stratified training subset

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bru/data.hpp"
#include "bru/model.hpp"
#include "bru/optim.hpp"

namespace bru {

struct RunConfig {
  Architecture experiment = Architecture::MLP;
  int depth = 4;  ///< MLP only
  DatasetName dataset = DatasetName::MNIST;
  Family family = Family::BRU;
  OptimizerConfig optimizer = OptimizerConfig::sgd(0.01);
  std::size_t batch_size = 64;
  int epochs = 200;
  std::uint64_t seed = 1;
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_path = "metrics.csv";
  double subset_fraction = 1.0;
  std::size_t conv9_maps = 10;  ///< ConvPool only

  /// MLP: SGD 0.01, batch 64. Others: Adam 1e-4/0.9/0.999/1e-3, batch 120.
  /// ConvPool defaults to CIFAR-10, the rest to MNIST.
  static RunConfig defaults_for(Architecture experiment);

  /// Throws ConfigError for out-of-range values or dataset pairings other
  /// than MLP/SAE/LeNetS on MNIST and ConvPool on CIFAR-10/100.
  void validate() const;
  ModelSpec model() const;

  /// Flat key=value lines, readable by apply_setting.
  std::string serialize() const;
};

/// Sets one field from its text form. Keys: experiment, depth, family,
/// dataset, classes, optimizer, learning_rate, beta1, beta2, epsilon,
/// batch_size, epochs, seed, data_dir, out, subset_fraction, conv9_maps.
/// Dashes in keys are accepted as underscores.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses a key=value file ('#' comments, blank lines ignored).
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

/// Environment variable overriding data_dir.
inline constexpr const char* kDataDirEnv = "BRU_DATA_DIR";

/// Layers a configuration: experiment defaults, then `file`, then the
/// data-dir environment variable, then `flags`.
RunConfig resolve_config(const std::map<std::string, std::string>& file,
                         const std::map<std::string, std::string>& flags);

// ---- training -----------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  Split split = Split::Train;
  double loss = 0.0;
  std::optional<double> error_quotient;        ///< classifiers
  std::optional<double> reconstruction_error;  ///< auto-encoder
  double wall_seconds = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,split,loss,error_quotient,reconstruction_error,wall_seconds";

/// One CSV row without the trailing newline.
std::string format_metrics_row(const EpochMetrics& m);

struct RunResult {
  std::vector<EpochMetrics> rows;  ///< train then test, per epoch
  std::size_t parameter_count = 0;
  std::vector<std::uint64_t> parameter_hashes;  ///< one per parameter tensor, final state
};

struct RunHooks {
  /// Called after each epoch's test row; returning false stops the run.
  std::function<bool(const EpochMetrics& train, const EpochMetrics& test)> on_epoch;
  /// Writes progress lines here when set.
  std::ostream* log = nullptr;
};

/// Loads the datasets named by `cfg` from its data directory and trains.
RunResult run_experiment(const RunConfig& cfg, const RunHooks& hooks = {});

/// Trains on already-loaded raw (byte-range) data.
RunResult run_experiment(const RunConfig& cfg, DatasetPair data, const RunHooks& hooks = {});

/// FNV-1a over the bytes of a tensor.
std::uint64_t tensor_hash(const Tensor& t);

// ---- comparison -------------------------------------------------------------------

struct RunFile {
  std::filesystem::path path;
  std::string experiment;  ///< from the .config sidecar
  Family family = Family::BRU;
  std::vector<EpochMetrics> rows;
};

/// Reads a metrics CSV and its sidecar `<path>.config`.
RunFile read_run(const std::filesystem::path& path);

struct FamilySeries {
  Family family = Family::BRU;
  std::size_t runs = 0;
  std::vector<int> epochs;
  std::vector<double> median;
  std::vector<double> q1;
  std::vector<double> q3;
};

struct CompareReport {
  std::string experiment;
  std::string metric;
  Split split = Split::Train;
  std::vector<FamilySeries> series;
  /// Per epoch, families ordered by ascending median (ties keep input order).
  std::vector<std::vector<Family>> ordering;
  std::map<Family, double> min_test_loss;            ///< minimum over epochs of the median
  std::map<Family, double> min_test_error_quotient;  ///< absent for the auto-encoder

  const FamilySeries& of(Family f) const;
  std::string render() const;
};

/// Median and interquartile range across seeds. `metric` is one of loss,
/// error_quotient, reconstruction_error; `epochs` restricts the window
/// (inclusive, both ends optional).
CompareReport compare_runs(const std::vector<std::filesystem::path>& csv_paths,
                           const std::string& metric, Split split = Split::Train,
                           std::optional<int> first_epoch = std::nullopt,
                           std::optional<int> last_epoch = std::nullopt);
CompareReport compare_runs(const std::vector<RunFile>& runs, const std::string& metric,
                           Split split = Split::Train, std::optional<int> first_epoch = std::nullopt,
                           std::optional<int> last_epoch = std::nullopt);

/// Linear-interpolation quantile (q in [0, 1]) of an unsorted sample.
double quantile(std::vector<double> values, double q);

}  // namespace bru
