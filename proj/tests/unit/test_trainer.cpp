#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "lvseg/localizer.hpp"
#include "lvseg/phantom.hpp"
#include "lvseg/trainer.hpp"

using namespace lvseg;

namespace {

TrainingScan make_scan(std::uint64_t seed) {
  const PhantomSample s = generate(PhantomConfig{}, seed);
  TrainingScan t;
  t.seed = seed;
  t.normalized = std::make_shared<Volume3D>(normalize(s.image, NormalizationWindow{}));
  t.label = s.label;
  t.true_box = s.true_box;
  return t;
}

}  // namespace

TEST_CASE("balanced draws: equal classes, negatives inside the box, no repeats") {
  const TrainingScan s = make_scan(1);
  const auto draws = draw_balanced_voxels(s.label, s.true_box, 500, 9);
  REQUIRE(draws.size() == 1000);
  std::set<Index3> seen;
  int pos = 0;
  for (const VoxelDraw& d : draws) {
    CHECK(s.true_box.contains(d.center));
    CHECK(d.label == s.label[d.center]);
    pos += d.label;
    CHECK(seen.insert(d.center).second);
  }
  CHECK(pos == 500);
  CHECK(draw_balanced_voxels(s.label, s.true_box, 500, 9).front().center == draws.front().center);
  CHECK_FALSE(draw_balanced_voxels(s.label, s.true_box, 500, 10).front().center == draws.front().center);
}

TEST_CASE("balanced draws cap at the smaller class") {
  LabelVolume m(GridGeometry{{4, 4, 4}, {1, 1, 1}, {}});
  m.at(1, 1, 1) = m.at(2, 1, 1) = 1;
  const auto draws = draw_balanced_voxels(m, BoundingBox3D{{0, 0, 0}, {3, 1, 1}}, 100, 1);
  CHECK(draws.size() == 4);
  CHECK_THROWS_AS(draw_balanced_voxels(m, BoundingBox3D::full({4, 4, 4}), 0, 1), ConfigError);
}

TEST_CASE("segmenter samples split the per-class total across scans") {
  std::vector<TrainingScan> scans = {make_scan(2), make_scan(3), make_scan(4)};
  const PatchSampleSet set = segmenter_samples(scans, 100, kPatchSize, 5);
  CHECK(set.size() == 200);
  CHECK(set.positives() == 100);
  CHECK(set.shape() == nn::TensorShape{3, 48, 48});
  std::vector<double> d(set.shape().size());
  std::vector<float> f(set.shape().size());
  set.fill(17, std::span<double>(d));
  set.fill(17, std::span<float>(f));
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == static_cast<double>(f[i]));
  CHECK_THROWS_AS(segmenter_samples(scans, 2, kPatchSize, 5), ConfigError);
}

TEST_CASE("localizer samples cover every slice, optionally mirrored") {
  std::vector<TrainingScan> scans = {make_scan(6)};
  const auto plain = localizer_samples(scans, Axis::coronal, 64, false);
  const auto flipped = localizer_samples(scans, Axis::coronal, 64, true);
  CHECK(plain.size() == 96);
  CHECK(flipped.size() == 4 * 96);
  const auto presence = slice_presence(scans[0].label, Axis::coronal);
  std::vector<double> a(64 * 64), b(64 * 64);
  for (std::size_t i = 0; i < 96; ++i) {
    CHECK(plain.label(i) == presence[i]);
    for (std::size_t v = 0; v < 4; ++v) CHECK(flipped.label(4 * i + v) == presence[i]);
  }
  // Variant 1 mirrors columns.
  plain.fill(40, std::span<double>(a));
  flipped.fill(4 * 40 + 1, std::span<double>(b));
  for (int v = 0; v < 64; ++v)
    for (int u = 0; u < 64; ++u) CHECK(b[v * 64 + u] == doctest::Approx(a[v * 64 + 63 - u]));
  flipped.fill(4 * 40, std::span<double>(b));
  const auto x = localizer_input(*scans[0].normalized, Axis::coronal, 40);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(b[i] == doctest::Approx(x[i]).epsilon(1e-6));
}
