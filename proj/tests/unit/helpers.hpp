#pragma once

#include <doctest.h>

#include <filesystem>
#include <string>

#include <unistd.h>

#include "bwn/error.hpp"
#include "bwn/rng.hpp"
#include "bwn/tensor.hpp"

namespace bwn::test {

inline Tensor random_tensor(Rng& rng, Extents shape, double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(stddev * rng.normal());
  return t;
}

inline TensorD random_tensor_d(Rng& rng, Extents shape, double stddev = 1.0) {
  TensorD t(std::move(shape));
  for (double& v : t.data()) v = stddev * rng.normal();
  return t;
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("bwn_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename F>
Errc error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected bwn::Error");
  return Errc::invalid_argument;
}

}  // namespace bwn::test
