#pragma once

// Dataset parsers (MNIST IDX, CIFAR-10/100 binary), preprocessing,
// augmentation and seeded minibatch iteration.
//
// IDX: big-endian. Images: magic 0x00000803, count, rows, cols, then
// count*rows*cols unsigned bytes. Labels: magic 0x00000801, count, bytes.
// CIFAR-10 record: 1 label byte + 3072 pixel bytes; CIFAR-100 record:
// coarse byte, fine byte + 3072 pixel bytes. Pixels are planar R, G, B,
// each 32 rows of 32. Images are held as [n, h, w, maps].

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bru/rng.hpp"
#include "bru/tensor.hpp"

namespace bru {

enum class DatasetName { MNIST, CIFAR10, CIFAR100 };
enum class CifarVariant { C10, C100 };
enum class Split { Train, Test };

std::string to_string(DatasetName name);
DatasetName parse_dataset_name(const std::string& text);

struct Dataset {
  DatasetName name = DatasetName::MNIST;
  Tensor images;            ///< [n, h, w, maps]
  std::vector<int> labels;  ///< length n

  std::size_t size() const noexcept { return labels.size(); }
  Shape image_shape() const { return images.shape().tail(); }
  std::size_t classes() const { return name == DatasetName::CIFAR100 ? 100 : 10; }

  /// Rows `indices` in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

// ---- parsing ---------------------------------------------------------------

/// Reads a whole file; paths ending in ".gz" are decompressed.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

Dataset parse_mnist_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path);

/// Records of one CIFAR binary file. CIFAR-100 keeps the fine label.
Dataset parse_cifar(std::span<const std::uint8_t> bytes, CifarVariant variant);
Dataset load_cifar_file(const std::filesystem::path& path, CifarVariant variant);

/// Concatenates the official split files found in `dir` (data_batch_1..5.bin
/// and test_batch.bin for CIFAR-10; train.bin and test.bin for CIFAR-100).
Dataset load_cifar(const std::filesystem::path& dir, CifarVariant variant, Split split);

/// Locates the official files under `data_dir` (directly or in the usual
/// sub-directories mnist/, cifar-10-batches-bin/, cifar-100-binary/).
/// Throws ConfigError naming the missing file.
DatasetPair load_mnist_dir(const std::filesystem::path& data_dir);
DatasetPair load_cifar_dir(const std::filesystem::path& data_dir, CifarVariant variant);

// ---- fixture writers ---------------------------------------------------------

/// Pixels must be integers in [0, 255].
std::vector<std::uint8_t> encode_mnist_images(const Dataset& ds);
std::vector<std::uint8_t> encode_mnist_labels(const Dataset& ds);
/// `coarse` supplies CIFAR-100 coarse labels; zeros when empty.
std::vector<std::uint8_t> encode_cifar(const Dataset& ds, CifarVariant variant,
                                       std::span<const int> coarse = {});
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// ---- preprocessing -------------------------------------------------------------

/// Scalar statistics pooled over every pixel and channel.
struct PixelStats {
  double mean = 0.0;
  double stddev = 1.0;
};

PixelStats pixel_stats(const Dataset& ds);
/// (x - mean) / stddev. Zero stddev raises DomainError.
void standardize(Dataset& ds, const PixelStats& stats);
/// Standardises both splits with statistics of the training split.
PixelStats standardize(Dataset& train, Dataset& test);
/// Divides byte-range pixels by 255.
void scale01(Dataset& ds);

// ---- augmentation ----------------------------------------------------------------

/// Zero-pad by one pixel, crop back at offset (dy, dx) in {0,1,2}, then
/// optionally mirror left-right. `image` is [h, w, maps].
Tensor pad_crop_flip(const Tensor& image, std::size_t dy, std::size_t dx, bool flip);

/// Random offsets (uniform over {0,1,2}^2) and a fair-coin flip, drawn in
/// that order from `rng`.
Tensor augment_pad_crop_flip(const Tensor& image, CounterRng& rng);

// ---- batching ----------------------------------------------------------------------

struct BatchPlan {
  std::size_t batch_size = 64;
  bool drop_last = false;
};

/// Partition of a per-epoch permutation of [0, n) into consecutive batches.
/// The permutation comes from stream ("shuffle", epoch) of `seed`.
std::vector<std::vector<std::size_t>> batches(std::size_t n, const BatchPlan& plan,
                                              std::uint64_t seed, std::uint64_t epoch);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> indices);

/// Per-class random subset holding round(fraction * class count) rows
/// (at least one per non-empty class), returned in ascending order.
std::vector<std::size_t> stratified_subset(std::span<const int> labels, double fraction,
                                           std::uint64_t seed);

}  // namespace bru
