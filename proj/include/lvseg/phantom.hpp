#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lvseg/box.hpp"
#include "lvseg/volume.hpp"

namespace lvseg {

using Mat3 = std::array<std::array<double, 3>, 3>;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

enum class LabelMode { shell, shell_and_cavity };

std::string_view label_mode_name(LabelMode mode);
LabelMode parse_label_mode(std::string_view name);

struct PhantomConfig {
  Index3 dims{96, 96, 96};
  Vec3 spacing{0.9, 0.9, 0.9};  // mm

  // HU
  double background = -50.0;
  double lung = -800.0;
  double cavity = 400.0;
  double myocardium = 100.0;
  double distractor = 350.0;
  double noise_sigma = 20.0;

  // Semi-axis ranges in mm, drawn independently per axis.
  Range epi_semi_axis{17.0, 21.0};
  Range endo_semi_axis{9.0, 12.0};
  double max_rotation_deg = 40.0;  // per Euler angle

  int distractors_min = 2;
  int distractors_max = 4;
  Range distractor_semi_axis{5.0, 12.0};
  int lungs_min = 1;
  int lungs_max = 2;
  Range lung_semi_axis{14.0, 28.0};

  LabelMode label_mode = LabelMode::shell;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Solid ellipsoid in mm coordinates; `rotation` maps body axes to grid axes.
struct Ellipsoid {
  Vec3 center{};
  Vec3 semi_axes{};
  Mat3 rotation{};

  // (R^T (p - c))_i^2 / a_i^2 summed; <= 1 inside.
  double quadratic_form(const Vec3& p) const;
  bool contains(const Vec3& p) const { return quadratic_form(p) <= 1.0; }
};

struct PhantomGeometry {
  Ellipsoid epicardium;
  Ellipsoid endocardium;  // same center and rotation as the epicardium
  std::vector<Ellipsoid> distractors;
  std::vector<Ellipsoid> lungs;
};

struct PhantomSample {
  std::uint64_t seed = 0;
  Volume3D image;  // integral HU values
  LabelVolume label;
  BoundingBox3D true_box;
  std::array<std::vector<std::uint8_t>, 3> slice_labels;  // axial, coronal, sagittal
  PhantomGeometry geometry;
};

// Millimetre position of a voxel centre.
Vec3 voxel_center(const GridGeometry& g, const Index3& p);

PhantomSample generate(const PhantomConfig& cfg, std::uint64_t seed);

struct ManifestEntry {
  std::uint64_t seed = 0;
  std::filesystem::path image;  // resolved against the manifest directory on read
  std::filesystem::path label;
  BoundingBox3D box;
};

// Writes phantom_<seed>.mhd/.raw and phantom_<seed>_label.mhd/.raw for seeds
// seed..seed+n-1 plus `manifest.txt` into out_dir. Returns the manifest path.
std::filesystem::path generate_dataset(const PhantomConfig& cfg, int n, std::uint64_t seed,
                                       const std::filesystem::path& out_dir);

// One line per sample: seed image label x0 y0 z0 x1 y1 z1 (paths relative
// to the manifest's directory). Lines starting with '#' are ignored.
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace lvseg
