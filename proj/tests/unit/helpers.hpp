#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "lvseg/volume.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lvseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

inline lvseg::Volume3D random_volume(const lvseg::Index3& dims, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f,
                                     lvseg::Vec3 spacing = {1.0, 1.0, 1.0}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  lvseg::Volume3D v(lvseg::GridGeometry{dims, spacing, {0.0, 0.0, 0.0}});
  for (auto& x : v.voxels()) x = u(rng);
  return v;
}

inline lvseg::LabelVolume random_mask(const lvseg::Index3& dims, std::uint64_t seed, double p,
                                      lvseg::Vec3 spacing = {1.0, 1.0, 1.0}) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  lvseg::LabelVolume m(lvseg::GridGeometry{dims, spacing, {0.0, 0.0, 0.0}});
  for (auto& x : m.voxels()) x = b(rng) ? 1 : 0;
  return m;
}

}  // namespace testutil
