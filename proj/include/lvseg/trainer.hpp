#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "lvseg/box.hpp"
#include "lvseg/nn/train.hpp"
#include "lvseg/volume.hpp"

namespace lvseg {

// One annotated scan prepared for training.
struct TrainingScan {
  std::uint64_t seed = 0;
  std::shared_ptr<const Volume3D> normalized;
  LabelVolume label;
  BoundingBox3D true_box;
};

// Reads the first `limit` manifest rows (all if 0), normalizing each image
// with `window`. Throws ConfigError on an empty manifest or label.
std::vector<TrainingScan> load_training_scans(const std::filesystem::path& manifest, int limit,
                                              const NormalizationWindow& window);

// Slice presence per index along an axis: 1 iff the slice meets the label.
std::vector<std::uint8_t> slice_presence(const LabelVolume& label, Axis axis);

// Every slice of every scan along `axis`, area-averaged to size x size. With
// `flips`, each slice also appears mirrored left-right, top-bottom and both.
nn::InMemorySamples localizer_samples(const std::vector<TrainingScan>& scans, Axis axis, int size,
                                      bool flips = true);

struct VoxelDraw {
  Index3 center;
  int label = 0;
};

// `per_class` positives (label voxels) and as many negatives (unlabelled
// voxels inside `box`), without replacement; both counts are reduced to the
// smaller pool if a class runs short, so the draw stays balanced.
std::vector<VoxelDraw> draw_balanced_voxels(const LabelVolume& label, const BoundingBox3D& box, int per_class,
                                            std::uint64_t seed);

// Patch triplets extracted on demand from shared normalized volumes.
class PatchSampleSet final : public nn::SampleSource {
 public:
  explicit PatchSampleSet(int patch_size) : patch_size_(patch_size) {}

  void add(std::shared_ptr<const Volume3D> volume, const std::vector<VoxelDraw>& draws);

  nn::TensorShape shape() const override { return {3, patch_size_, patch_size_}; }
  std::size_t size() const override { return items_.size(); }
  int label(std::size_t i) const override { return items_[i].draw.label; }
  void fill(std::size_t i, std::span<double> out) const override;
  void fill(std::size_t i, std::span<float> out) const override;

  std::size_t positives() const;

 private:
  struct Item {
    std::size_t volume;
    VoxelDraw draw;
  };
  int patch_size_;
  std::vector<std::shared_ptr<const Volume3D>> volumes_;
  std::vector<Item> items_;
};

// Splits `total_per_class` as evenly as possible over the scans (the first
// total % n scans take one extra) and draws a balanced set from each
// scan's true box.
PatchSampleSet segmenter_samples(const std::vector<TrainingScan>& scans, int total_per_class, int patch_size,
                                 std::uint64_t seed);

}  // namespace lvseg
