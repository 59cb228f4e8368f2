#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bru::test {

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("bru-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

/// Copy of a tensor's elements, for comparison against literals.
template <typename TensorT>
auto vec(const TensorT& t) {
  return std::vector<typename TensorT::value_type>(t.begin(), t.end());
}

/// Dataset directory from BRU_DATA_DIR, if set.
inline std::optional<std::filesystem::path> data_dir() {
  const char* env = std::getenv("BRU_DATA_DIR");
  if (!env || !*env) return std::nullopt;
  return std::filesystem::path(env);
}

}  // namespace bru::test
