#include "lvseg/metaimage.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace lvseg {
namespace {

namespace fs = std::filesystem;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

template <class T>
T parse_number(const std::string& tok, std::string_view key) {
  T value{};
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw FormatError("MetaImage key " + std::string(key) + ": cannot parse '" + tok + "'");
  return value;
}

template <class T>
std::array<T, 3> parse_triple(const std::string& value, std::string_view key) {
  const auto toks = split_ws(value);
  if (toks.size() != 3) throw FormatError("MetaImage key " + std::string(key) + " needs exactly 3 values");
  return {parse_number<T>(toks[0], key), parse_number<T>(toks[1], key), parse_number<T>(toks[2], key)};
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <class T>
T byteswap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

template <class T>
void decode(const std::vector<char>& raw, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    out[i] = static_cast<float>(byteswap_if_big(v));
  }
}

template <class T>
void encode(std::span<const float> in, std::vector<char>& raw, double lo, double hi) {
  raw.resize(in.size() * sizeof(T));
  for (std::size_t i = 0; i < in.size(); ++i) {
    T v;
    if constexpr (std::is_floating_point_v<T>) {
      v = static_cast<T>(in[i]);
    } else {
      v = static_cast<T>(std::clamp(std::nearbyint(static_cast<double>(in[i])), lo, hi));
    }
    v = byteswap_if_big(v);
    std::memcpy(raw.data() + i * sizeof(T), &v, sizeof(T));
  }
}

ElementType parse_element_type(const std::string& s) {
  if (s == "MET_SHORT") return ElementType::met_short;
  if (s == "MET_FLOAT") return ElementType::met_float;
  if (s == "MET_UCHAR") return ElementType::met_uchar;
  throw FormatError("unsupported ElementType '" + s + "'");
}

fs::path raw_path_for(const fs::path& header_path) {
  fs::path raw = header_path;
  raw.replace_extension(".raw");
  return raw;
}

}  // namespace

std::string_view element_type_name(ElementType type) {
  switch (type) {
    case ElementType::met_short:
      return "MET_SHORT";
    case ElementType::met_float:
      return "MET_FLOAT";
    case ElementType::met_uchar:
      return "MET_UCHAR";
  }
  return "?";
}

std::size_t element_size(ElementType type) {
  switch (type) {
    case ElementType::met_short:
      return 2;
    case ElementType::met_float:
      return 4;
    case ElementType::met_uchar:
      return 1;
  }
  return 0;
}

MetaHeader read_meta_header(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw IoError("cannot open MetaImage header " + header_path.string());

  static const std::vector<std::string> known = {"ObjectType",  "NDims",  "DimSize",        "ElementSpacing",
                                                 "ElementType", "Offset", "ElementDataFile"};
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(in, line);) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed MetaImage line: '" + trim(line) + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw FormatError("unknown MetaImage key '" + key + "'");
    if (!kv.emplace(key, value).second) throw FormatError("duplicate MetaImage key '" + key + "'");
  }
  for (const char* required : {"ObjectType", "NDims", "DimSize", "ElementSpacing", "ElementType", "ElementDataFile"})
    if (!kv.count(required)) throw FormatError(std::string("missing MetaImage key '") + required + "'");

  if (kv["ObjectType"] != "Image") throw FormatError("ObjectType must be Image");
  if (kv["NDims"] != "3") throw FormatError("NDims must be 3");

  MetaHeader h;
  h.geometry.dims = parse_triple<int>(kv["DimSize"], "DimSize");
  h.geometry.spacing = parse_triple<double>(kv["ElementSpacing"], "ElementSpacing");
  if (kv.count("Offset")) h.geometry.origin = parse_triple<double>(kv["Offset"], "Offset");
  h.element_type = parse_element_type(kv["ElementType"]);
  h.data_file = kv["ElementDataFile"];
  if (h.data_file.empty()) throw FormatError("ElementDataFile is empty");
  try {
    h.geometry.validate();
  } catch (const GridError& e) {
    throw FormatError(std::string("invalid MetaImage geometry: ") + e.what());
  }
  return h;
}

Volume3D read_volume(const fs::path& header_path) {
  const MetaHeader h = read_meta_header(header_path);
  const fs::path raw_path = h.data_file.is_absolute() ? h.data_file : header_path.parent_path() / h.data_file;

  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw IoError("cannot open raw data file " + raw_path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::size_t expected = h.geometry.voxel_count() * element_size(h.element_type);
  if (raw.size() != expected)
    throw SizeMismatchError("raw file " + raw_path.string() + " has " + std::to_string(raw.size()) +
                            " bytes, header implies " + std::to_string(expected));

  Volume3D vol(h.geometry);
  switch (h.element_type) {
    case ElementType::met_short:
      decode<std::int16_t>(raw, vol.voxels());
      break;
    case ElementType::met_float:
      decode<float>(raw, vol.voxels());
      break;
    case ElementType::met_uchar:
      decode<std::uint8_t>(raw, vol.voxels());
      break;
  }
  return vol;
}

LabelVolume read_label(const fs::path& header_path) {
  const Volume3D vol = read_volume(header_path);
  LabelVolume mask(vol.geometry());
  auto src = vol.voxels();
  auto dst = mask.voxels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] != 0.0f && src[i] != 1.0f)
      throw FormatError("label volume " + header_path.string() + " contains a value other than 0 or 1");
    dst[i] = src[i] == 1.0f ? 1 : 0;
  }
  return mask;
}

void write_volume(const Volume3D& vol, const fs::path& header_path, ElementType type) {
  const fs::path raw_path = raw_path_for(header_path);
  std::vector<char> raw;
  switch (type) {
    case ElementType::met_short:
      encode<std::int16_t>(vol.voxels(), raw, -32768.0, 32767.0);
      break;
    case ElementType::met_float:
      encode<float>(vol.voxels(), raw, 0.0, 0.0);
      break;
    case ElementType::met_uchar:
      encode<std::uint8_t>(vol.voxels(), raw, 0.0, 255.0);
      break;
  }

  if (header_path.has_parent_path()) fs::create_directories(header_path.parent_path());
  {
    std::ofstream out(raw_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + raw_path.string());
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("short write to " + raw_path.string());
  }

  const GridGeometry& g = vol.geometry();
  std::ofstream out(header_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + header_path.string());
  out << "ObjectType = Image\n"
      << "NDims = 3\n"
      << "DimSize = " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << '\n'
      << "ElementSpacing = " << format_double(g.spacing[0]) << ' ' << format_double(g.spacing[1]) << ' '
      << format_double(g.spacing[2]) << '\n'
      << "Offset = " << format_double(g.origin[0]) << ' ' << format_double(g.origin[1]) << ' '
      << format_double(g.origin[2]) << '\n'
      << "ElementType = " << element_type_name(type) << '\n'
      << "ElementDataFile = " << raw_path.filename().string() << '\n';
  if (!out) throw IoError("short write to " + header_path.string());
}

void write_label(const LabelVolume& mask, const fs::path& header_path) {
  Volume3D vol(mask.geometry());
  std::copy(mask.voxels().begin(), mask.voxels().end(), vol.voxels().begin());
  write_volume(vol, header_path, ElementType::met_uchar);
}

}  // namespace lvseg
