#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "cafe/feature_store.hpp"
#include "cafe/random.hpp"

namespace cafe::testing {

inline FeatureDataset random_dataset(Rng& rng, std::size_t n, std::size_t c, std::size_t d,
                                     std::uint32_t classes = 7, std::string name = "random") {
  MatrixF f(n, c);
  MatrixF x(n, d);
  for (float& v : f.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (float& v : x.values()) v = static_cast<float>(rng.normal());
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.uniform_index(classes));
  return FeatureDataset(std::move(name), std::move(f), std::move(x), std::move(y), classes);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cafe_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace cafe::testing
