#include "bru/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "bru/errors.hpp"

namespace bru {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPixels = kCifarSide * kCifarSide * 3;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t offset, const char* what) {
  if (b.size() < offset + 4)
    throw ParseError(std::string(what) + ": truncated header at offset " +
                     std::to_string(offset) + " (file is " + std::to_string(b.size()) +
                     " bytes)");
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

std::uint8_t to_byte(float v) {
  if (!(v >= 0.0f && v <= 255.0f) || v != std::floor(v))
    throw DomainError("pixel value " + std::to_string(v) + " is not a byte");
  return static_cast<std::uint8_t>(v);
}

fs::path first_existing(const std::vector<fs::path>& candidates) {
  for (const auto& p : candidates) {
    if (fs::exists(p)) return p;
    fs::path gz = p;
    gz += ".gz";
    if (fs::exists(gz)) return gz;
  }
  return {};
}

}  // namespace

std::string to_string(DatasetName name) {
  switch (name) {
    case DatasetName::MNIST: return "MNIST";
    case DatasetName::CIFAR10: return "CIFAR10";
    case DatasetName::CIFAR100: return "CIFAR100";
  }
  return "?";
}

DatasetName parse_dataset_name(const std::string& text) {
  if (text == "MNIST" || text == "mnist") return DatasetName::MNIST;
  if (text == "CIFAR10" || text == "cifar10") return DatasetName::CIFAR10;
  if (text == "CIFAR100" || text == "cifar100") return DatasetName::CIFAR100;
  throw ConfigError("unknown dataset '" + text + "'");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ShapeError("empty dataset subset");
  const Shape img = image_shape();
  const std::size_t stride = img.size();
  Dataset out;
  out.name = name;
  out.images = Tensor(img.with_batch(indices.size()));
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= size()) throw ShapeError("subset index out of range");
    std::copy_n(images.data() + i * stride, stride, out.images.data() + k * stride);
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("file not found: " + path.string());
  std::vector<std::uint8_t> bytes;
  if (path.extension() == ".gz") {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw ConfigError("cannot open " + path.string());
    std::uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + n);
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw ParseError(path.string() + ": corrupt gzip stream at offset " +
                                 std::to_string(bytes.size()));
    return bytes;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return bytes;
}

Dataset parse_mnist_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  const std::uint32_t im_magic = read_be32(images, 0, "IDX images");
  if (im_magic != kIdxImagesMagic)
    throw ParseError("IDX images: bad magic " + hex(im_magic) + " at offset 0, expected " +
                     hex(kIdxImagesMagic));
  const std::uint32_t lb_magic = read_be32(labels, 0, "IDX labels");
  if (lb_magic != kIdxLabelsMagic)
    throw ParseError("IDX labels: bad magic " + hex(lb_magic) + " at offset 0, expected " +
                     hex(kIdxLabelsMagic));

  const std::size_t count = read_be32(images, 4, "IDX images");
  const std::size_t rows = read_be32(images, 8, "IDX images");
  const std::size_t cols = read_be32(images, 12, "IDX images");
  const std::size_t label_count = read_be32(labels, 4, "IDX labels");
  if (count != label_count)
    throw ParseError("IDX: image count " + std::to_string(count) + " (offset 4) does not match label count " +
                     std::to_string(label_count) + " (offset 4)");
  if (count == 0 || rows == 0 || cols == 0) throw ParseError("IDX images: zero dimension in header at offset 4");

  const std::size_t need_images = 16 + count * rows * cols;
  if (images.size() < need_images)
    throw ParseError("IDX images: truncated at offset " + std::to_string(images.size()) +
                     ", expected " + std::to_string(need_images) + " bytes");
  const std::size_t need_labels = 8 + count;
  if (labels.size() < need_labels)
    throw ParseError("IDX labels: truncated at offset " + std::to_string(labels.size()) +
                     ", expected " + std::to_string(need_labels) + " bytes");

  Dataset ds;
  ds.name = DatasetName::MNIST;
  ds.images = Tensor(Shape{count, rows, cols, 1});
  std::transform(images.begin() + 16, images.begin() + static_cast<std::ptrdiff_t>(need_images),
                 ds.images.begin(), [](std::uint8_t b) { return static_cast<float>(b); });
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = labels[8 + i];
    if (label > 9)
      throw ParseError("IDX labels: label " + std::to_string(label) + " out of range at offset " +
                       std::to_string(8 + i));
    ds.labels[i] = label;
  }
  return ds;
}

Dataset load_mnist_idx(const fs::path& images_path, const fs::path& labels_path) {
  const auto images = read_file_bytes(images_path);
  const auto labels = read_file_bytes(labels_path);
  try {
    return parse_mnist_idx(images, labels);
  } catch (const ParseError& e) {
    throw ParseError(images_path.filename().string() + "/" + labels_path.filename().string() +
                     ": " + e.what());
  }
}

Dataset parse_cifar(std::span<const std::uint8_t> bytes, CifarVariant variant) {
  const std::size_t label_bytes = variant == CifarVariant::C10 ? 1 : 2;
  const std::size_t record = label_bytes + kCifarPixels;
  if (bytes.empty() || bytes.size() % record != 0)
    throw ParseError("CIFAR: file length " + std::to_string(bytes.size()) +
                     " is not a multiple of the " + std::to_string(record) +
                     "-byte record; partial record at offset " +
                     std::to_string(bytes.size() - bytes.size() % record));
  const std::size_t n = bytes.size() / record;
  const std::size_t classes = variant == CifarVariant::C10 ? 10 : 100;
  Dataset ds;
  ds.name = variant == CifarVariant::C10 ? DatasetName::CIFAR10 : DatasetName::CIFAR100;
  ds.images = Tensor(Shape{n, kCifarSide, kCifarSide, 3});
  ds.labels.resize(n);
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * record;
    const int label = rec[label_bytes - 1];
    if (static_cast<std::size_t>(label) >= classes)
      throw ParseError("CIFAR: label " + std::to_string(label) + " out of range at offset " +
                       std::to_string(i * record + label_bytes - 1));
    ds.labels[i] = label;
    const std::uint8_t* px = rec + label_bytes;
    float* dst = ds.images.data() + i * kCifarPixels;
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) dst[p * 3 + c] = px[c * plane + p];
  }
  return ds;
}

Dataset load_cifar_file(const fs::path& path, CifarVariant variant) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_cifar(bytes, variant);
  } catch (const ParseError& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
}

Dataset load_cifar(const fs::path& dir, CifarVariant variant, Split split) {
  std::vector<std::string> files;
  if (variant == CifarVariant::C10) {
    if (split == Split::Train)
      for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
    else
      files.push_back("test_batch.bin");
  } else {
    files.push_back(split == Split::Train ? "train.bin" : "test.bin");
  }
  std::vector<Dataset> parts;
  std::size_t total = 0;
  for (const auto& f : files) {
    const fs::path p = first_existing({dir / f});
    if (p.empty()) throw ConfigError("missing CIFAR file " + (dir / f).string());
    parts.push_back(load_cifar_file(p, variant));
    total += parts.back().size();
  }
  Dataset out;
  out.name = parts.front().name;
  out.images = Tensor(Shape{total, kCifarSide, kCifarSide, 3});
  std::size_t offset = 0;
  for (const auto& part : parts) {
    std::copy(part.images.begin(), part.images.end(), out.images.data() + offset * kCifarPixels);
    out.labels.insert(out.labels.end(), part.labels.begin(), part.labels.end());
    offset += part.size();
  }
  return out;
}

DatasetPair load_mnist_dir(const fs::path& data_dir) {
  auto locate = [&](const std::string& name) {
    const fs::path p = first_existing({data_dir / name, data_dir / "mnist" / name,
                                       data_dir / "MNIST" / "raw" / name});
    if (p.empty()) throw ConfigError("missing MNIST file " + name + " under " + data_dir.string());
    return p;
  };
  DatasetPair pair;
  pair.train = load_mnist_idx(locate("train-images-idx3-ubyte"), locate("train-labels-idx1-ubyte"));
  pair.test = load_mnist_idx(locate("t10k-images-idx3-ubyte"), locate("t10k-labels-idx1-ubyte"));
  return pair;
}

DatasetPair load_cifar_dir(const fs::path& data_dir, CifarVariant variant) {
  const std::string sub = variant == CifarVariant::C10 ? "cifar-10-batches-bin" : "cifar-100-binary";
  const std::string probe = variant == CifarVariant::C10 ? "test_batch.bin" : "test.bin";
  fs::path dir = data_dir;
  if (!first_existing({data_dir / sub / probe}).empty()) dir = data_dir / sub;
  DatasetPair pair;
  pair.train = load_cifar(dir, variant, Split::Train);
  pair.test = load_cifar(dir, variant, Split::Test);
  return pair;
}

std::vector<std::uint8_t> encode_mnist_images(const Dataset& ds) {
  const Shape& s = ds.images.shape();
  if (s.rank() != 4 || s[3] != 1) throw ShapeError("MNIST images must be [n,h,w,1]");
  std::vector<std::uint8_t> out;
  out.reserve(16 + ds.images.size());
  put_be32(out, kIdxImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(s[0]));
  put_be32(out, static_cast<std::uint32_t>(s[1]));
  put_be32(out, static_cast<std::uint32_t>(s[2]));
  for (float v : ds.images) out.push_back(to_byte(v));
  return out;
}

std::vector<std::uint8_t> encode_mnist_labels(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + ds.size());
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) out.push_back(static_cast<std::uint8_t>(l));
  return out;
}

std::vector<std::uint8_t> encode_cifar(const Dataset& ds, CifarVariant variant,
                                       std::span<const int> coarse) {
  const Shape& s = ds.images.shape();
  if (s.rank() != 4 || s[1] != kCifarSide || s[2] != kCifarSide || s[3] != 3)
    throw ShapeError("CIFAR images must be [n,32,32,3]");
  const std::size_t plane = kCifarSide * kCifarSide;
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (variant == CifarVariant::C100)
      out.push_back(static_cast<std::uint8_t>(coarse.empty() ? 0 : coarse[i]));
    out.push_back(static_cast<std::uint8_t>(ds.labels[i]));
    const float* src = ds.images.data() + i * kCifarPixels;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < plane; ++p) out.push_back(to_byte(src[p * 3 + c]));
  }
  return out;
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

PixelStats pixel_stats(const Dataset& ds) {
  const double n = static_cast<double>(ds.images.size());
  double sum = 0.0;
  for (float v : ds.images) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (float v : ds.images) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / n)};
}

void standardize(Dataset& ds, const PixelStats& stats) {
  if (!(stats.stddev > 0.0)) throw DomainError("cannot standardise: pixel variance is zero");
  for (float& v : ds.images) v = static_cast<float>((v - stats.mean) / stats.stddev);
}

PixelStats standardize(Dataset& train, Dataset& test) {
  const PixelStats stats = pixel_stats(train);
  standardize(train, stats);
  standardize(test, stats);
  return stats;
}

void scale01(Dataset& ds) {
  for (float& v : ds.images) v /= 255.0f;
}

Tensor pad_crop_flip(const Tensor& image, std::size_t dy, std::size_t dx, bool flip) {
  const Shape& s = image.shape();
  if (s.rank() != 3) throw ShapeError("augment expects [h,w,maps], got " + s.str());
  if (dy > 2 || dx > 2) throw DomainError("crop offset must lie in {0,1,2}");
  const std::size_t h = s[0], w = s[1], c = s[2];
  Tensor out(s);
  for (std::size_t y = 0; y < h; ++y) {
    const long sy = static_cast<long>(y + dy) - 1;
    if (sy < 0 || sy >= static_cast<long>(h)) continue;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t cx = flip ? w - 1 - x : x;
      const long sx = static_cast<long>(cx + dx) - 1;
      if (sx < 0 || sx >= static_cast<long>(w)) continue;
      std::copy_n(image.data() + (sy * w + sx) * c, c, out.data() + (y * w + x) * c);
    }
  }
  return out;
}

Tensor augment_pad_crop_flip(const Tensor& image, CounterRng& rng) {
  const auto dy = static_cast<std::size_t>(rng.below(3));
  const auto dx = static_cast<std::size_t>(rng.below(3));
  const bool flip = rng.bernoulli(0.5);
  return pad_crop_flip(image, dy, dx, flip);
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, const BatchPlan& plan,
                                              std::uint64_t seed, std::uint64_t epoch) {
  if (plan.batch_size < 1) throw ConfigError("batch size must be >= 1");
  CounterRng rng(seed, "shuffle", epoch);
  const auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    const std::size_t end = std::min(n, start + plan.batch_size);
    if (plan.drop_last && end - start < plan.batch_size) break;
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                     perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset sub = ds.subset(indices);
  return {std::move(sub.images), std::move(sub.labels)};
}

std::vector<std::size_t> stratified_subset(std::span<const int> labels, double fraction,
                                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("subset fraction must lie in (0, 1]");
  std::vector<std::size_t> all(labels.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  if (fraction == 1.0) return all;

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  CounterRng rng(seed, "subset");
  std::vector<std::size_t> keep;
  for (auto& [label, members] : by_class) {
    const auto take = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size()))));
    const auto perm = rng.permutation(members.size());
    for (std::size_t k = 0; k < take; ++k) keep.push_back(members[perm[k]]);
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

}  // namespace bru
