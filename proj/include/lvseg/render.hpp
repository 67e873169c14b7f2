#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lvseg/volume.hpp"

namespace lvseg {

// 8-bit RGB raster, row-major; width is the slice's fast axis.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  const std::uint8_t* pixel(int u, int v) const { return &rgb[3 * (static_cast<std::size_t>(v) * width + u)]; }
};

inline constexpr std::uint8_t kContourColor[3] = {255, 0, 0};

// In-plane mask pixels with a 4-neighbour outside the mask or on the slice edge.
std::vector<std::uint8_t> slice_contour(const LabelVolume& mask, Axis axis, int index);

// Windowed grayscale slice; with a mask, its contour is painted kContourColor.
// Throws BoundsError for an index outside the volume.
RgbImage render_slice(const Volume3D& image, Axis axis, int index, const NormalizationWindow& window,
                      const LabelVolume* mask = nullptr);

// Binary P5 from the red channel (the image is gray without an overlay).
void write_pgm(const RgbImage& img, const std::filesystem::path& path);
// Binary P6.
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

}  // namespace lvseg
