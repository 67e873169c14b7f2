#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "lvseg/metaimage.hpp"
#include "lvseg/phantom.hpp"
#include "lvseg/trainer.hpp"

using namespace lvseg;

namespace {

std::size_t count(const LabelVolume& m) {
  std::size_t c = 0;
  for (auto v : m.voxels()) c += v;
  return c;
}

}  // namespace

TEST_CASE("default phantom parameters") {
  const PhantomConfig c;
  CHECK(c.dims == Index3{96, 96, 96});
  CHECK(c.spacing == Vec3{0.9, 0.9, 0.9});
  CHECK(c.background == -50.0);
  CHECK(c.lung == -800.0);
  CHECK(c.cavity == 400.0);
  CHECK(c.myocardium == 100.0);
  CHECK(c.distractor == 350.0);
  CHECK(c.noise_sigma == 20.0);
  CHECK(c.label_mode == LabelMode::shell);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("label fraction stays within 0.5% to 15% over 100 seeds") {
  const PhantomConfig c;
  double lo = 1.0, hi = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const PhantomSample s = generate(c, seed);
    const double f = static_cast<double>(count(s.label)) / s.label.size();
    lo = std::min(lo, f);
    hi = std::max(hi, f);
    CHECK(f >= 0.005);
    CHECK(f <= 0.15);
  }
  MESSAGE("label fraction range " << lo << " .. " << hi);
}

TEST_CASE("distractors never overlap the myocardial shell") {
  const PhantomConfig c;
  int placed = 0;
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    const PhantomSample s = generate(c, seed);
    placed += static_cast<int>(s.geometry.distractors.size());
    CHECK(static_cast<int>(s.geometry.distractors.size()) <= c.distractors_max);
    for (int z = 0; z < c.dims[2]; ++z)
      for (int y = 0; y < c.dims[1]; ++y)
        for (int x = 0; x < c.dims[0]; ++x) {
          const Vec3 p = voxel_center(s.image.geometry(), {x, y, z});
          for (const Ellipsoid& d : s.geometry.distractors)
            if (d.contains(p)) {
              CHECK_FALSE(s.geometry.epicardium.contains(p));
              CHECK(s.label.at(x, y, z) == 0);
            }
        }
  }
  CHECK(placed >= 10 * c.distractors_min);
}

TEST_CASE("noise-free phantom paints the tissue classes") {
  PhantomConfig c;
  c.noise_sigma = 0.0;
  const PhantomSample s = generate(c, 7);
  const std::set<float> allowed = {-50.f, -800.f, 400.f, 100.f, 350.f};
  std::size_t shell = 0, cavity = 0;
  for (int z = 0; z < c.dims[2]; ++z)
    for (int y = 0; y < c.dims[1]; ++y)
      for (int x = 0; x < c.dims[0]; ++x) {
        const float v = s.image.at(x, y, z);
        REQUIRE(allowed.count(v) == 1);
        const Vec3 p = voxel_center(s.image.geometry(), {x, y, z});
        const bool in_epi = s.geometry.epicardium.contains(p), in_endo = s.geometry.endocardium.contains(p);
        if (in_endo) {
          CHECK(in_epi);
          CHECK(v == 400.f);
          CHECK(s.label.at(x, y, z) == 0);
          ++cavity;
        } else if (in_epi) {
          CHECK(v == 100.f);
          CHECK(s.label.at(x, y, z) == 1);
          ++shell;
        } else {
          CHECK(s.label.at(x, y, z) == 0);
        }
      }
  CHECK(shell > 0);
  CHECK(cavity > 0);

  c.label_mode = LabelMode::shell_and_cavity;
  const PhantomSample both = generate(c, 7);
  CHECK(count(both.label) == shell + cavity);
  CHECK(both.image == s.image);
}

TEST_CASE("noise has the configured spread and images are integral") {
  PhantomConfig c;
  const PhantomSample noisy = generate(c, 3);
  c.noise_sigma = 0.0;
  const PhantomSample clean = generate(c, 3);
  CHECK(noisy.label == clean.label);
  double s = 0.0, s2 = 0.0;
  const std::size_t n = noisy.image.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = noisy.image.voxels()[i] - clean.image.voxels()[i];
    CHECK(noisy.image.voxels()[i] == std::round(noisy.image.voxels()[i]));
    s += d;
    s2 += d * d;
  }
  const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  CHECK(std::abs(mean) < 0.2);
  CHECK(sd == doctest::Approx(std::sqrt(400.0 + 1.0 / 12.0)).epsilon(0.02));
}

TEST_CASE("phantoms are a pure function of config and seed") {
  const PhantomConfig c;
  const PhantomSample a = generate(c, 11), b = generate(c, 11), d = generate(c, 12);
  CHECK(a.image == b.image);
  CHECK(a.label == b.label);
  CHECK_FALSE(a.image == d.image);
}

TEST_CASE("box and slice labels follow the label volume") {
  const PhantomSample s = generate(PhantomConfig{}, 5);
  CHECK(s.true_box == *tight_box(s.label));
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.slice_labels[i] == slice_presence(s.label, kAllAxes[i]));
}

TEST_CASE("geometry invariants hold for random seeds") {
  const PhantomConfig c;
  for (std::uint64_t seed = 300; seed < 340; ++seed) {
    const PhantomSample s = generate(c, seed);
    const auto& epi = s.geometry.epicardium;
    const auto& endo = s.geometry.endocardium;
    CHECK(epi.center == endo.center);
    for (int a = 0; a < 3; ++a) {
      CHECK(endo.semi_axes[a] < epi.semi_axes[a]);
      const double reach = 1.1 * std::max({epi.semi_axes[0], epi.semi_axes[1], epi.semi_axes[2]});
      CHECK(epi.center[a] >= reach - 1e-9);
      CHECK(epi.center[a] <= (c.dims[a] - 1) * c.spacing[a] - reach + 1e-9);
    }
    // Rotation is orthonormal.
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += epi.rotation[k][i] * epi.rotation[k][j];
        CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("config validation names the offending field") {
  auto fails_with = [](PhantomConfig c, const std::string& field) {
    try {
      c.validate();
      FAIL("expected ConfigError for " << field);
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(field) != std::string::npos, e.what());
    }
  };
  PhantomConfig c;
  c.endo_semi_axis = {9.0, 17.0};
  fails_with(c, "endo_semi_axis");
  c = {};
  c.dims = {40, 96, 96};
  fails_with(c, "dims");
  c = {};
  c.spacing = {0.9, 0.0, 0.9};
  fails_with(c, "spacing");
  c = {};
  c.noise_sigma = -1.0;
  fails_with(c, "noise_sigma");
  c = {};
  c.distractors_min = 5;
  fails_with(c, "distractor");
  c = {};
  c.lung_semi_axis = {10.0, 5.0};
  fails_with(c, "lung_semi_axis");
  CHECK_THROWS_AS(parse_label_mode("cavity"), ConfigError);
  CHECK(parse_label_mode(label_mode_name(LabelMode::shell_and_cavity)) == LabelMode::shell_and_cavity);
}

TEST_CASE("dataset files and manifest") {
  testutil::TempDir dir("dataset");
  const PhantomConfig c;
  const auto manifest = generate_dataset(c, 2, 40, dir.path() / "ds");
  CHECK(manifest == dir.path() / "ds" / "manifest.txt");

  std::ifstream f(manifest);
  std::string line;
  int rows = 0;
  while (std::getline(f, line)) {
    std::istringstream in(line);
    std::vector<std::string> tok;
    for (std::string t; in >> t;) tok.push_back(t);
    CHECK(tok.size() == 9);
    ++rows;
  }
  CHECK(rows == 2);

  const auto entries = read_manifest(manifest);
  REQUIRE(entries.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& e = entries[i];
    CHECK(e.seed == 40 + i);
    CHECK(read_meta_header(e.image).element_type == ElementType::met_short);
    CHECK(read_meta_header(e.label).element_type == ElementType::met_uchar);
    const PhantomSample s = generate(c, e.seed);
    CHECK(read_volume(e.image) == s.image);
    const LabelVolume label = read_label(e.label);
    CHECK(label == s.label);
    CHECK(e.box == s.true_box);
  }
}

TEST_CASE("manifest reader skips comments and rejects short rows") {
  testutil::TempDir dir("manifest");
  {
    std::ofstream f(dir / "m.txt");
    f << "# seed image label box\n\n3 a.mhd b.mhd 1 2 3 4 5 6\n";
  }
  const auto e = read_manifest(dir / "m.txt");
  REQUIRE(e.size() == 1);
  CHECK(e[0].seed == 3);
  CHECK(e[0].image == dir.path() / "a.mhd");
  CHECK(e[0].box == BoundingBox3D{{1, 2, 3}, {4, 5, 6}});
  write_manifest(e, dir / "n.txt");
  CHECK(read_manifest(dir / "n.txt")[0].label == dir.path() / "b.mhd");
  {
    std::ofstream f(dir / "bad.txt");
    f << "3 a.mhd b.mhd 1 2 3\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "bad.txt"), FormatError);
  CHECK_THROWS_AS(read_manifest(dir / "none.txt"), IoError);
}
