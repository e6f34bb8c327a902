#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "recapfx/market_data.hpp"
#include "recapfx/random.hpp"

namespace testing_support {

/// Directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("recapfx_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name, const std::string& content) const {
    const auto p = path_ / name;
    std::ofstream(p) << content;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline recapfx::Timestamp at(int y, unsigned m, unsigned d, int hour = 0, int minute = 0) {
  return recapfx::Timestamp{std::chrono::sys_days{std::chrono::year{y} / m / d}} + std::chrono::hours(hour) +
         std::chrono::minutes(minute);
}

/// Frame of `rows` 15-minute rows with `features` random columns and a
/// random label named `y`.
inline recapfx::FeatureFrame random_frame(std::size_t rows, std::size_t features, std::uint64_t seed) {
  recapfx::Rng rng(seed);
  std::vector<recapfx::Timestamp> idx;
  for (std::size_t i = 0; i < rows; ++i) idx.push_back(at(2016, 3, 1) + std::chrono::minutes(15) * static_cast<int>(i));
  recapfx::FeatureFrame f(idx);
  for (std::size_t c = 0; c < features; ++c) {
    std::vector<double> v(rows);
    for (auto& x : v) x = rng.normal();
    f.set_column("f" + std::to_string(c), std::move(v));
  }
  std::vector<double> y(rows);
  for (auto& x : y) x = rng.normal();
  f.set_column("y", std::move(y));
  f.set_label("y");
  return f;
}

}  // namespace testing_support
