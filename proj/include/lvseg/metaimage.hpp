#pragma once

// MetaImage (.mhd + raw) reader/writer for the subset used by this project:
//
//   ObjectType = Image
//   NDims = 3
//   DimSize = nx ny nz
//   ElementSpacing = sx sy sz
//   Offset = ox oy oz            (optional, default 0 0 0)
//   ElementType = MET_SHORT | MET_FLOAT | MET_UCHAR
//   ElementDataFile = <file relative to the header>
//
// Raw data is little-endian, x fastest, then y, then z. Any other key is
// rejected.

#include <filesystem>
#include <string_view>

#include "lvseg/volume.hpp"

namespace lvseg {

enum class ElementType { met_short, met_float, met_uchar };

std::string_view element_type_name(ElementType type);
std::size_t element_size(ElementType type);

struct MetaHeader {
  GridGeometry geometry;
  ElementType element_type = ElementType::met_float;
  std::filesystem::path data_file;  // as written in the header
};

MetaHeader read_meta_header(const std::filesystem::path& header_path);

// Decodes any supported element type into the float scalar.
Volume3D read_volume(const std::filesystem::path& header_path);
// Like read_volume, but every voxel must be exactly 0 or 1.
LabelVolume read_label(const std::filesystem::path& header_path);

// Writes `<stem>.mhd` and `<stem>.raw` next to each other. Values are rounded
// and clamped for the integer element types.
void write_volume(const Volume3D& vol, const std::filesystem::path& header_path,
                  ElementType type = ElementType::met_float);
void write_label(const LabelVolume& mask, const std::filesystem::path& header_path);

}  // namespace lvseg
