#include "lvseg/trainer.hpp"

#include <algorithm>
#include <random>

#include "lvseg/error.hpp"
#include "lvseg/localizer.hpp"
#include "lvseg/metaimage.hpp"
#include "lvseg/phantom.hpp"

namespace lvseg {
namespace {

// First k entries of a seeded Fisher-Yates shuffle.
void partial_shuffle(std::vector<Index3>& pool, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
}

}  // namespace

std::vector<std::uint8_t> slice_presence(const LabelVolume& label, Axis axis) {
  const int fa = fixed_axis(axis);
  const Index3 d = label.dims();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(d[fa]), 0);
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        if (label.at(x, y, z)) out[fa == 0 ? x : fa == 1 ? y : z] = 1;
  return out;
}

nn::InMemorySamples localizer_samples(const std::vector<TrainingScan>& scans, Axis axis, int size, bool flips) {
  nn::InMemorySamples samples({1, size, size});
  std::vector<double> flipped(static_cast<std::size_t>(size) * size);
  for (const TrainingScan& s : scans) {
    const auto presence = slice_presence(s.label, axis);
    for (std::size_t i = 0; i < presence.size(); ++i) {
      const auto x = localizer_input(*s.normalized, axis, static_cast<int>(i), size);
      samples.add(std::span<const double>(x), presence[i]);
      if (!flips) continue;
      for (int variant = 1; variant < 4; ++variant) {
        for (int v = 0; v < size; ++v)
          for (int u = 0; u < size; ++u) {
            const int su = (variant & 1) ? size - 1 - u : u;
            const int sv = (variant & 2) ? size - 1 - v : v;
            flipped[static_cast<std::size_t>(v) * size + u] = x[static_cast<std::size_t>(sv) * size + su];
          }
        samples.add(std::span<const double>(flipped), presence[i]);
      }
    }
  }
  return samples;
}

std::vector<VoxelDraw> draw_balanced_voxels(const LabelVolume& label, const BoundingBox3D& box, int per_class,
                                            std::uint64_t seed) {
  if (per_class < 1) throw ConfigError("patches per class must be >= 1");
  box.validate(label.dims());
  std::vector<Index3> pos, neg;
  for (int z = box.lo[2]; z <= box.hi[2]; ++z)
    for (int y = box.lo[1]; y <= box.hi[1]; ++y)
      for (int x = box.lo[0]; x <= box.hi[0]; ++x) (label.at(x, y, z) ? pos : neg).push_back({x, y, z});
  const std::size_t k = std::min({static_cast<std::size_t>(per_class), pos.size(), neg.size()});
  std::mt19937_64 rng(seed);
  partial_shuffle(pos, k, rng);
  partial_shuffle(neg, k, rng);
  std::vector<VoxelDraw> out;
  out.reserve(2 * k);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({pos[i], 1});
    out.push_back({neg[i], 0});
  }
  return out;
}

void PatchSampleSet::add(std::shared_ptr<const Volume3D> volume, const std::vector<VoxelDraw>& draws) {
  if (!volume) throw ShapeError("patch set needs a volume");
  for (const VoxelDraw& d : draws)
    if (!volume->geometry().contains(d.center)) throw BoundsError("patch centre outside its volume");
  volumes_.push_back(std::move(volume));
  for (const VoxelDraw& d : draws) items_.push_back({volumes_.size() - 1, d});
}

void PatchSampleSet::fill(std::size_t i, std::span<double> out) const {
  const Item& it = items_[i];
  extract_patch_triplet_into(*volumes_[it.volume], it.draw.center, patch_size_, out);
}

void PatchSampleSet::fill(std::size_t i, std::span<float> out) const {
  const Item& it = items_[i];
  extract_patch_triplet_into(*volumes_[it.volume], it.draw.center, patch_size_, out);
}

std::size_t PatchSampleSet::positives() const {
  return static_cast<std::size_t>(
      std::count_if(items_.begin(), items_.end(), [](const Item& it) { return it.draw.label == 1; }));
}

PatchSampleSet segmenter_samples(const std::vector<TrainingScan>& scans, int total_per_class, int patch_size,
                                 std::uint64_t seed) {
  if (scans.empty()) throw ConfigError("no training scans");
  if (total_per_class < static_cast<int>(scans.size()))
    throw ConfigError("patches_per_class must be at least the number of training scans");
  PatchSampleSet set(patch_size);
  const int n = static_cast<int>(scans.size());
  for (int i = 0; i < n; ++i) {
    const int k = total_per_class / n + (i < total_per_class % n ? 1 : 0);
    const std::uint64_t draw_seed = seed * 0x9e3779b97f4a7c15ULL + scans[i].seed;
    set.add(scans[i].normalized, draw_balanced_voxels(scans[i].label, scans[i].true_box, k, draw_seed));
  }
  return set;
}

std::vector<TrainingScan> load_training_scans(const std::filesystem::path& manifest, int limit,
                                              const NormalizationWindow& window) {
  auto entries = read_manifest(manifest);
  if (entries.empty()) throw ConfigError("manifest " + manifest.string() + " has no rows");
  if (limit < 0) throw ConfigError("scans must be >= 0");
  if (limit > 0 && static_cast<std::size_t>(limit) < entries.size()) entries.resize(static_cast<std::size_t>(limit));
  std::vector<TrainingScan> scans;
  for (const auto& e : entries) {
    TrainingScan s;
    s.seed = e.seed;
    s.normalized = std::make_shared<Volume3D>(normalize(read_volume(e.image), window));
    s.label = read_label(e.label);
    if (s.label.dims() != s.normalized->dims()) throw FormatError("label grid differs from image: " + e.label.string());
    const auto box = tight_box(s.label);
    if (!box) throw ConfigError("empty label in " + e.label.string());
    s.true_box = *box;
    scans.push_back(std::move(s));
  }
  return scans;
}

}  // namespace lvseg
