#include "lvseg/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "lvseg/error.hpp"

namespace lvseg {
namespace {

void check_index(const Index3& dims, Axis axis, int index) {
  const int extent = dims[fixed_axis(axis)];
  if (index < 0 || index >= extent)
    throw BoundsError("slice index " + std::to_string(index) + " outside [0," + std::to_string(extent - 1) + "]");
}

void write_netpbm(const RgbImage& img, const std::filesystem::path& path, bool color) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << (color ? "P6\n" : "P5\n") << img.width << " " << img.height << "\n255\n";
  if (color) {
    f.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  } else {
    std::vector<char> gray(img.rgb.size() / 3);
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<char>(img.rgb[3 * i]);
    f.write(gray.data(), static_cast<std::streamsize>(gray.size()));
  }
  if (!f) throw IoError("short write to " + path.string());
}

}  // namespace

std::vector<std::uint8_t> slice_contour(const LabelVolume& mask, Axis axis, int index) {
  check_index(mask.dims(), axis, index);
  const auto [fu, fv] = plane_axes(axis);
  const int fa = fixed_axis(axis);
  const int w = mask.dims()[fu], h = mask.dims()[fv];
  auto inside = [&](int u, int v) {
    if (u < 0 || v < 0 || u >= w || v >= h) return false;
    Index3 p;
    p[fa] = index;
    p[fu] = u;
    p[fv] = v;
    return mask[p] != 0;
  };
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h, 0);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      if (inside(u, v) && !(inside(u - 1, v) && inside(u + 1, v) && inside(u, v - 1) && inside(u, v + 1)))
        out[static_cast<std::size_t>(v) * w + u] = 1;
  return out;
}

RgbImage render_slice(const Volume3D& image, Axis axis, int index, const NormalizationWindow& window,
                      const LabelVolume* mask) {
  window.validate();
  check_index(image.dims(), axis, index);
  if (mask && mask->dims() != image.dims()) throw GridError("mask grid differs from image grid");
  const Image2D s = extract_slice(image, axis, index);
  RgbImage img{s.width, s.height, std::vector<std::uint8_t>(3 * s.pixels.size())};
  for (std::size_t i = 0; i < s.pixels.size(); ++i) {
    const double t = std::clamp((s.pixels[i] - window.lo) / (window.hi - window.lo), 0.0, 1.0);
    const auto g = static_cast<std::uint8_t>(std::lround(255.0 * t));
    img.rgb[3 * i] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = g;
  }
  if (mask) {
    const auto contour = slice_contour(*mask, axis, index);
    for (std::size_t i = 0; i < contour.size(); ++i)
      if (contour[i]) std::copy(kContourColor, kContourColor + 3, img.rgb.begin() + 3 * static_cast<std::ptrdiff_t>(i));
  }
  return img;
}

void write_pgm(const RgbImage& img, const std::filesystem::path& path) { write_netpbm(img, path, false); }
void write_ppm(const RgbImage& img, const std::filesystem::path& path) { write_netpbm(img, path, true); }

}  // namespace lvseg
