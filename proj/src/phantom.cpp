#include "lvseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "lvseg/error.hpp"
#include "lvseg/metaimage.hpp"

namespace lvseg {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

// Rz(c) * Ry(b) * Rx(a), angles in radians.
Mat3 euler(double a, double b, double c) {
  const Mat3 rx{{{1, 0, 0}, {0, std::cos(a), -std::sin(a)}, {0, std::sin(a), std::cos(a)}}};
  const Mat3 ry{{{std::cos(b), 0, std::sin(b)}, {0, 1, 0}, {-std::sin(b), 0, std::cos(b)}}};
  const Mat3 rz{{{std::cos(c), -std::sin(c), 0}, {std::sin(c), std::cos(c), 0}, {0, 0, 1}}};
  return multiply(rz, multiply(ry, rx));
}

Mat3 random_rotation(Rng& rng, double max_deg) {
  const double m = max_deg * std::numbers::pi / 180.0;
  const double a = uniform(rng, -m, m);
  const double b = uniform(rng, -m, m);
  const double c = uniform(rng, -m, m);
  return euler(a, b, c);
}

Vec3 random_axes(Rng& rng, const Range& r) {
  Vec3 a;
  for (double& v : a) v = uniform(rng, r.lo, r.hi);
  return a;
}

Vec3 random_point(Rng& rng, const GridGeometry& g) {
  Vec3 p;
  for (int a = 0; a < 3; ++a) p[a] = g.origin[a] + uniform(rng, 0.0, (g.dims[a] - 1) * g.spacing[a]);
  return p;
}

// Index range of voxel centres within `radius` mm of `center` along each axis.
BoundingBox3D voxel_hull(const GridGeometry& g, const Vec3& center, double radius) {
  BoundingBox3D b;
  for (int a = 0; a < 3; ++a) {
    b.lo[a] = std::clamp(static_cast<int>(std::floor((center[a] - radius - g.origin[a]) / g.spacing[a])), 0,
                         g.dims[a] - 1);
    b.hi[a] = std::clamp(static_cast<int>(std::ceil((center[a] + radius - g.origin[a]) / g.spacing[a])), 0,
                         g.dims[a] - 1);
  }
  return b;
}

bool overlaps(const GridGeometry& g, const Ellipsoid& e, const Ellipsoid& other) {
  const double radius = *std::max_element(e.semi_axes.begin(), e.semi_axes.end());
  const BoundingBox3D b = voxel_hull(g, e.center, radius);
  for (int z = b.lo[2]; z <= b.hi[2]; ++z)
    for (int y = b.lo[1]; y <= b.hi[1]; ++y)
      for (int x = b.lo[0]; x <= b.hi[0]; ++x) {
        const Vec3 p = voxel_center(g, {x, y, z});
        if (e.contains(p) && other.contains(p)) return true;
      }
  return false;
}

void check_range(const Range& r, const char* field) {
  if (!(r.lo > 0.0) || !(r.lo <= r.hi) || !std::isfinite(r.hi))
    throw ConfigError(std::string(field) + " must satisfy 0 < lo <= hi");
}

constexpr int kPlacementAttempts = 200;

}  // namespace

std::string_view label_mode_name(LabelMode mode) { return mode == LabelMode::shell ? "shell" : "shell_and_cavity"; }

LabelMode parse_label_mode(std::string_view name) {
  if (name == "shell") return LabelMode::shell;
  if (name == "shell_and_cavity") return LabelMode::shell_and_cavity;
  throw ConfigError("label_mode must be shell or shell_and_cavity");
}

void PhantomConfig::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw ConfigError("dims must be positive");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) throw ConfigError("spacing must be positive");
  }
  for (double v : {background, lung, cavity, myocardium, distractor})
    if (!std::isfinite(v)) throw ConfigError("intensities must be finite");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
  check_range(epi_semi_axis, "epi_semi_axis");
  check_range(endo_semi_axis, "endo_semi_axis");
  check_range(distractor_semi_axis, "distractor_semi_axis");
  check_range(lung_semi_axis, "lung_semi_axis");
  if (!(endo_semi_axis.hi < epi_semi_axis.lo))
    throw ConfigError("endo_semi_axis must lie strictly inside epi_semi_axis");
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 180.0))
    throw ConfigError("max_rotation_deg must be in [0,180]");
  if (distractors_min < 0 || distractors_max < distractors_min)
    throw ConfigError("distractor counts must satisfy 0 <= distractors_min <= distractors_max");
  if (lungs_min < 0 || lungs_max < lungs_min) throw ConfigError("lung counts must satisfy 0 <= lungs_min <= lungs_max");
  for (int a = 0; a < 3; ++a)
    if ((dims[a] - 1) * spacing[a] < 2.0 * 1.1 * epi_semi_axis.hi)
      throw ConfigError("dims too small to hold the epicardial ellipsoid with a 10% margin");
}

double Ellipsoid::quadratic_form(const Vec3& p) const {
  const Vec3 d{p[0] - center[0], p[1] - center[1], p[2] - center[2]};
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double q = rotation[0][i] * d[0] + rotation[1][i] * d[1] + rotation[2][i] * d[2];
    s += (q / semi_axes[i]) * (q / semi_axes[i]);
  }
  return s;
}

Vec3 voxel_center(const GridGeometry& g, const Index3& p) {
  return {g.origin[0] + p[0] * g.spacing[0], g.origin[1] + p[1] * g.spacing[1], g.origin[2] + p[2] * g.spacing[2]};
}

PhantomSample generate(const PhantomConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  GridGeometry g;
  g.dims = cfg.dims;
  g.spacing = cfg.spacing;

  PhantomSample s;
  s.seed = seed;
  PhantomGeometry& geo = s.geometry;
  geo.epicardium.semi_axes = random_axes(rng, cfg.epi_semi_axis);
  geo.endocardium.semi_axes = random_axes(rng, cfg.endo_semi_axis);
  const Mat3 rot = random_rotation(rng, cfg.max_rotation_deg);
  const double reach = 1.1 * *std::max_element(geo.epicardium.semi_axes.begin(), geo.epicardium.semi_axes.end());
  Vec3 center;
  for (int a = 0; a < 3; ++a) {
    const double extent = (g.dims[a] - 1) * g.spacing[a];
    center[a] = g.origin[a] + uniform(rng, reach, extent - reach);
  }
  geo.epicardium.center = geo.endocardium.center = center;
  geo.epicardium.rotation = geo.endocardium.rotation = rot;

  const int lungs = uniform_int(rng, cfg.lungs_min, cfg.lungs_max);
  for (int i = 0; i < lungs; ++i) {
    Ellipsoid e;
    e.semi_axes = random_axes(rng, cfg.lung_semi_axis);
    e.rotation = random_rotation(rng, 180.0);
    e.center = random_point(rng, g);
    geo.lungs.push_back(e);
  }
  const int distractors = uniform_int(rng, cfg.distractors_min, cfg.distractors_max);
  for (int i = 0; i < distractors; ++i)
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      Ellipsoid e;
      e.semi_axes = random_axes(rng, cfg.distractor_semi_axis);
      e.rotation = random_rotation(rng, 180.0);
      e.center = random_point(rng, g);
      if (overlaps(g, e, geo.epicardium)) continue;
      geo.distractors.push_back(e);
      break;
    }

  s.image = Volume3D(g, static_cast<float>(cfg.background));
  s.label = LabelVolume(g, 0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        const Vec3 p = voxel_center(g, {x, y, z});
        double v = cfg.background;
        for (const Ellipsoid& e : geo.lungs)
          if (e.contains(p)) v = cfg.lung;
        for (const Ellipsoid& e : geo.distractors)
          if (e.contains(p)) v = cfg.distractor;
        bool lv = false;
        if (geo.epicardium.contains(p)) {
          const bool cavity = geo.endocardium.contains(p);
          v = cavity ? cfg.cavity : cfg.myocardium;
          lv = !cavity || cfg.label_mode == LabelMode::shell_and_cavity;
        }
        const double noisy = v + (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * noise(rng) : 0.0);
        s.image.at(x, y, z) = static_cast<float>(std::clamp(std::nearbyint(noisy), -32768.0, 32767.0));
        s.label.at(x, y, z) = lv ? 1 : 0;
      }

  const auto box = tight_box(s.label);
  if (!box) throw ConfigError("phantom geometry produced an empty label; enlarge the grid or the ellipsoids");
  s.true_box = *box;
  for (std::size_t i = 0; i < kAllAxes.size(); ++i) {
    const int fa = fixed_axis(kAllAxes[i]);
    s.slice_labels[i].assign(static_cast<std::size_t>(g.dims[fa]), 0);
  }
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x)
        if (s.label.at(x, y, z)) {
          s.slice_labels[0][z] = 1;
          s.slice_labels[1][y] = 1;
          s.slice_labels[2][x] = 1;
        }
  return s;
}

std::filesystem::path generate_dataset(const PhantomConfig& cfg, int n, std::uint64_t seed,
                                       const std::filesystem::path& out_dir) {
  if (n < 1) throw ConfigError("n must be >= 1");
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const PhantomSample sample = generate(cfg, s);
    ManifestEntry e;
    e.seed = s;
    e.image = "phantom_" + std::to_string(s) + ".mhd";
    e.label = "phantom_" + std::to_string(s) + "_label.mhd";
    e.box = sample.true_box;
    write_volume(sample.image, out_dir / e.image, ElementType::met_short);
    write_label(sample.label, out_dir / e.label);
    entries.push_back(e);
  }
  const auto manifest = out_dir / "manifest.txt";
  write_manifest(entries, manifest);
  return manifest;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& e : entries) {
    out << e.seed << ' ' << e.image.generic_string() << ' ' << e.label.generic_string();
    for (int a = 0; a < 3; ++a) out << ' ' << e.box.lo[a];
    for (int a = 0; a < 3; ++a) out << ' ' << e.box.hi[a];
    out << '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write manifest " + path.string());
  f << out.str();
  if (!f) throw IoError("short write to manifest " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path.string());
  const auto dir = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream in(line);
    ManifestEntry e;
    std::string image, label;
    in >> e.seed >> image >> label;
    for (int a = 0; a < 3; ++a) in >> e.box.lo[a];
    for (int a = 0; a < 3; ++a) in >> e.box.hi[a];
    std::string extra;
    if (!in || (in >> extra))
      throw FormatError("manifest " + path.string() + " line " + std::to_string(line_no) +
                        ": expected seed, image, label and 6 box integers");
    e.image = dir / image;
    e.label = dir / label;
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace lvseg
