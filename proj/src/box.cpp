#include "lvseg/box.hpp"

#include <algorithm>

namespace lvseg {

void BoundingBox3D::validate(const Index3& dims) const {
  for (int a = 0; a < 3; ++a)
    if (lo[a] < 0 || lo[a] > hi[a] || hi[a] >= dims[a])
      throw BoundsError("bounding box " + to_string() + " invalid for grid " + std::to_string(dims[0]) + "x" +
                        std::to_string(dims[1]) + "x" + std::to_string(dims[2]));
}

std::string BoundingBox3D::to_string() const {
  return "[" + std::to_string(lo[0]) + ".." + std::to_string(hi[0]) + ", " + std::to_string(lo[1]) + ".." +
         std::to_string(hi[1]) + ", " + std::to_string(lo[2]) + ".." + std::to_string(hi[2]) + "]";
}

std::optional<BoundingBox3D> tight_box(const LabelVolume& mask) {
  const Index3& d = mask.dims();
  BoundingBox3D box{{d[0], d[1], d[2]}, {-1, -1, -1}};
  bool any = false;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        if (mask.at(x, y, z) == 0) continue;
        any = true;
        const Index3 p{x, y, z};
        for (int a = 0; a < 3; ++a) {
          box.lo[a] = std::min(box.lo[a], p[a]);
          box.hi[a] = std::max(box.hi[a], p[a]);
        }
      }
  if (!any) return std::nullopt;
  return box;
}

}  // namespace lvseg
