#pragma once

#include <optional>
#include <string>

#include "lvseg/volume.hpp"

namespace lvseg {

// Inclusive voxel index ranges per axis.
struct BoundingBox3D {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};

  Index3 extents() const { return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}; }
  std::size_t voxel_count() const {
    const Index3 e = extents();
    return static_cast<std::size_t>(e[0]) * e[1] * e[2];
  }
  bool contains(const Index3& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    return true;
  }
  bool contains(const BoundingBox3D& other) const { return contains(other.lo) && contains(other.hi); }

  // Throws BoundsError unless 0 <= lo <= hi < dims componentwise.
  void validate(const Index3& dims) const;
  std::string to_string() const;

  static BoundingBox3D full(const Index3& dims) { return {{0, 0, 0}, {dims[0] - 1, dims[1] - 1, dims[2] - 1}}; }

  bool operator==(const BoundingBox3D&) const = default;
};

// Tight axis-aligned box of the nonzero voxels; nullopt for an empty mask.
std::optional<BoundingBox3D> tight_box(const LabelVolume& mask);

}  // namespace lvseg
