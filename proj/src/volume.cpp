#include "lvseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lvseg {

void GridGeometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw GridError("grid dimension " + std::to_string(a) + " must be >= 1");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw GridError("grid spacing " + std::to_string(a) + " must be positive");
    if (!std::isfinite(origin[a])) throw GridError("grid origin must be finite");
  }
}

void NormalizationWindow::validate() const {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw ConfigError("normalization window requires window_lo < window_hi");
}

Volume3D normalize(const Volume3D& vol, const NormalizationWindow& window) {
  window.validate();
  Volume3D out(vol.geometry());
  const double width = window.hi - window.lo;
  auto src = vol.voxels();
  auto dst = out.voxels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double t = (static_cast<double>(src[i]) - window.lo) / width;
    dst[i] = static_cast<float>(std::clamp(t, 0.0, 1.0));
  }
  return out;
}

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::axial:
      return "axial";
    case Axis::coronal:
      return "coronal";
    case Axis::sagittal:
      return "sagittal";
  }
  return "unknown";
}

Axis parse_axis(std::string_view name) {
  if (name == "axial") return Axis::axial;
  if (name == "coronal") return Axis::coronal;
  if (name == "sagittal") return Axis::sagittal;
  throw ConfigError("unknown axis '" + std::string(name) + "' (expected axial, coronal or sagittal)");
}

Image2D extract_slice(const Volume3D& vol, Axis axis, int index) {
  const int fixed = fixed_axis(axis);
  const auto [fast, slow] = plane_axes(axis);
  const Index3& d = vol.dims();
  if (index < 0 || index >= d[fixed])
    throw BoundsError("slice index " + std::to_string(index) + " out of range for " + std::string(axis_name(axis)) +
                      " axis of size " + std::to_string(d[fixed]));
  Image2D img;
  img.width = d[fast];
  img.height = d[slow];
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  Index3 p{};
  p[fixed] = index;
  for (int v = 0; v < img.height; ++v) {
    p[slow] = v;
    for (int u = 0; u < img.width; ++u) {
      p[fast] = u;
      img.at(u, v) = vol[p];
    }
  }
  return img;
}

namespace {

template <class T>
void gather_triplet(const Volume3D& vol, const Index3& center, int size, std::span<T> out) {
  if (!vol.geometry().contains(center))
    throw BoundsError("patch center (" + std::to_string(center[0]) + "," + std::to_string(center[1]) + "," +
                      std::to_string(center[2]) + ") outside volume");
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  if (out.size() != 3 * plane) throw ShapeError("patch output buffer has wrong size");

  const Index3& d = vol.dims();
  const std::size_t nx = static_cast<std::size_t>(d[0]);
  const std::size_t nxy = nx * static_cast<std::size_t>(d[1]);
  const int half = size / 2;
  const float* src = vol.voxels().data();

  for (int c = 0; c < 3; ++c) {
    const Axis axis = kAllAxes[c];
    const auto [fast, slow] = plane_axes(axis);
    const std::size_t fast_stride = fast == 0 ? 1 : nx;  // fast axis is x or y
    const std::size_t slow_stride = slow == 1 ? nx : nxy;
    T* dst = out.data() + c * plane;

    // In-bounds pixel range along the fast axis, shared by all rows.
    const int u_begin = std::max(0, half - center[fast]);
    const int u_end = std::min(size, d[fast] - center[fast] + half);

    Index3 origin = center;
    origin[fast] = 0;
    origin[slow] = 0;
    const std::size_t base = vol.geometry().linear(origin[0], origin[1], origin[2]);

    for (int v = 0; v < size; ++v) {
      T* row = dst + static_cast<std::size_t>(v) * size;
      const int s = center[slow] + v - half;
      if (s < 0 || s >= d[slow] || u_begin >= u_end) {
        std::fill(row, row + size, T(0));
        continue;
      }
      std::fill(row, row + u_begin, T(0));
      const float* line = src + base + static_cast<std::size_t>(s) * slow_stride;
      for (int u = u_begin; u < u_end; ++u)
        row[u] = static_cast<T>(line[static_cast<std::size_t>(center[fast] + u - half) * fast_stride]);
      std::fill(row + u_end, row + size, T(0));
    }
  }
}

}  // namespace

void extract_patch_triplet_into(const Volume3D& vol, const Index3& center, int size, std::span<float> out) {
  gather_triplet(vol, center, size, out);
}

void extract_patch_triplet_into(const Volume3D& vol, const Index3& center, int size, std::span<double> out) {
  gather_triplet(vol, center, size, out);
}

PatchTriplet extract_patch_triplet(const Volume3D& vol, const Index3& center, int size) {
  if (size < 1) throw ShapeError("patch size must be >= 1");
  PatchTriplet t;
  t.size = size;
  t.center = center;
  t.data.resize(3 * static_cast<std::size_t>(size) * size);
  gather_triplet(vol, center, size, std::span<float>(t.data));
  return t;
}

}  // namespace lvseg
