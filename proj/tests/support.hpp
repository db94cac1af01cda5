#pragma once

// Shared test helpers: scratch directories and random fixtures.

#include <atomic>
#include <filesystem>
#include <string>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "jigsawhsi/hsi_io.hpp"
#include "jigsawhsi/random.hpp"
#include "jigsawhsi/tensor.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("jigsawhsi-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <class T>
jigsawhsi::nn::Tensor4<T> random_tensor(jigsawhsi::nn::Shape4 shape, jigsawhsi::Rng& rng, double lo = -1.0,
                                        double hi = 1.0) {
  jigsawhsi::nn::Tensor4<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
std::vector<T> random_vector(std::size_t n, jigsawhsi::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return v;
}

inline jigsawhsi::HSICube random_cube(std::size_t h, std::size_t w, std::size_t b, jigsawhsi::Rng& rng) {
  jigsawhsi::HSICube cube(h, w, b);
  for (auto& v : cube.data) v = static_cast<float>(rng.normal());
  return cube;
}

}  // namespace testing
