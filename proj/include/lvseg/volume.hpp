#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lvseg/error.hpp"

namespace lvseg {

using Index3 = std::array<int, 3>;  // (x, y, z)
using Vec3 = std::array<double, 3>;

struct GridGeometry {
  Index3 dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};  // mm per voxel
  Vec3 origin{0.0, 0.0, 0.0};   // mm

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  bool contains(const Index3& p) const {
    return p[0] >= 0 && p[1] >= 0 && p[2] >= 0 && p[0] < dims[0] && p[1] < dims[1] && p[2] < dims[2];
  }
  std::size_t linear(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(dims[0]) +
           static_cast<std::size_t>(x);
  }
  // Throws GridError on non-positive dims or spacing.
  void validate() const;

  bool operator==(const GridGeometry&) const = default;
};

// Dense scalar grid in x-fastest order.
template <class T>
class Grid3 {
 public:
  using value_type = T;

  Grid3() = default;
  explicit Grid3(const GridGeometry& geometry, T fill = T{}) : geometry_(geometry) {
    geometry_.validate();
    voxels_.assign(geometry_.voxel_count(), fill);
  }
  Grid3(const GridGeometry& geometry, std::vector<T> voxels) : geometry_(geometry), voxels_(std::move(voxels)) {
    geometry_.validate();
    if (voxels_.size() != geometry_.voxel_count()) throw GridError("voxel count does not match grid dimensions");
  }

  const GridGeometry& geometry() const { return geometry_; }
  const Index3& dims() const { return geometry_.dims; }
  const Vec3& spacing() const { return geometry_.spacing; }
  std::size_t size() const { return voxels_.size(); }

  T& at(int x, int y, int z) { return voxels_[geometry_.linear(x, y, z)]; }
  const T& at(int x, int y, int z) const { return voxels_[geometry_.linear(x, y, z)]; }
  T& operator[](const Index3& p) { return at(p[0], p[1], p[2]); }
  const T& operator[](const Index3& p) const { return at(p[0], p[1], p[2]); }

  std::span<T> voxels() { return voxels_; }
  std::span<const T> voxels() const { return voxels_; }

  bool operator==(const Grid3&) const = default;

 private:
  GridGeometry geometry_;
  std::vector<T> voxels_;
};

// Image intensities (HU-like before normalization, [0,1] after).
using Volume3D = Grid3<float>;
// Binary mask, values 0 or 1.
using LabelVolume = Grid3<std::uint8_t>;

struct NormalizationWindow {
  double lo = -200.0;
  double hi = 800.0;
  void validate() const;
};

// clamp((v - lo) / (hi - lo), 0, 1) per voxel.
Volume3D normalize(const Volume3D& vol, const NormalizationWindow& window);

enum class Axis { axial, coronal, sagittal };

std::string_view axis_name(Axis axis);
Axis parse_axis(std::string_view name);
inline constexpr std::array<Axis, 3> kAllAxes{Axis::axial, Axis::coronal, Axis::sagittal};

// Grid axis held fixed by a slice: axial -> z (2), coronal -> y (1), sagittal -> x (0).
constexpr int fixed_axis(Axis axis) {
  return axis == Axis::axial ? 2 : axis == Axis::coronal ? 1 : 0;
}
// In-plane grid axes of a slice in (fast, slow) order.
constexpr std::array<int, 2> plane_axes(Axis axis) {
  return axis == Axis::axial ? std::array<int, 2>{0, 1}
         : axis == Axis::coronal ? std::array<int, 2>{0, 2}
                                 : std::array<int, 2>{1, 2};
}

struct Image2D {
  int width = 0;   // fast axis
  int height = 0;  // slow axis
  std::vector<float> pixels;

  float& at(int u, int v) { return pixels[static_cast<std::size_t>(v) * width + u]; }
  float at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u]; }
};

// Full cross-section through `index` along the axis's fixed grid axis.
Image2D extract_slice(const Volume3D& vol, Axis axis, int index);

inline constexpr int kPatchSize = 48;

// Three size x size patches through one voxel, stored channel-major in the
// order axial, coronal, sagittal; the network input for voxel classification.
struct PatchTriplet {
  int size = kPatchSize;
  Index3 center{0, 0, 0};
  std::vector<float> data;

  std::span<const float> channel(Axis axis) const {
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    const std::size_t c = axis == Axis::axial ? 0 : axis == Axis::coronal ? 1 : 2;
    return std::span<const float>(data).subspan(c * plane, plane);
  }
  float at(Axis axis, int u, int v) const { return channel(axis)[static_cast<std::size_t>(v) * size + u]; }
};

// Center voxel maps to pixel (size/2, size/2); samples outside the volume are 0.
PatchTriplet extract_patch_triplet(const Volume3D& vol, const Index3& center, int size = kPatchSize);

// Writes 3 * size * size values into `out` (same layout as PatchTriplet::data).
void extract_patch_triplet_into(const Volume3D& vol, const Index3& center, int size, std::span<float> out);
void extract_patch_triplet_into(const Volume3D& vol, const Index3& center, int size, std::span<double> out);

}  // namespace lvseg
