#pragma once

#include <array>
#include <vector>

#include "lvseg/box.hpp"
#include "lvseg/localizer.hpp"
#include "lvseg/nn/engine.hpp"
#include "lvseg/nn/spec.hpp"
#include "lvseg/nn/weights.hpp"
#include "lvseg/volume.hpp"

namespace lvseg {

// Per-voxel posterior over a box of a parent grid, x-fastest within the box.
struct ProbabilityVolume {
  BoundingBox3D box;
  GridGeometry parent;
  std::vector<double> probs;

  Index3 extents() const { return box.extents(); }
  std::size_t local(int x, int y, int z) const {
    const Index3 e = extents();
    return (static_cast<std::size_t>(z) * e[1] + y) * e[0] + x;
  }
  double& at(int x, int y, int z) { return probs[local(x, y, z)]; }
  double at(int x, int y, int z) const { return probs[local(x, y, z)]; }
  // Value at a parent-grid voxel inside the box.
  double at_parent(const Index3& p) const { return at(p[0] - box.lo[0], p[1] - box.lo[1], p[2] - box.lo[2]); }

  // The box as a standalone volume (origin shifted to the box corner).
  Volume3D to_volume() const;
};

using nn::Precision;

struct ClassifyOptions {
  int batch_size = 64;
  // 1 evaluates every voxel. s > 1 evaluates a lattice of stride s (always
  // including the box's upper corner) and fills the rest by trilinear
  // interpolation.
  int stride = 1;
  Precision precision = Precision::f32;

  void validate() const;  // throws ConfigError
};

struct PostprocessParams {
  double sigma_mm = 1.5;
  double threshold = 0.4;
  int connectivity = 26;  // 6 or 26

  void validate() const;  // throws ConfigError
};

// Class-1 posterior of the patch triplet centred at every box voxel.
// `normalized` must be in [0,1]. Throws BoundsError if the box leaves the grid.
ProbabilityVolume classify_voxels(const Volume3D& normalized, const BoundingBox3D& box, const nn::NetworkSpec& spec,
                                  const nn::NetworkWeights& weights, const ClassifyOptions& options = {});

// Single-voxel reference: one forward pass on one patch triplet.
double classify_voxel(const Volume3D& normalized, const Index3& center, const nn::NetworkSpec& spec,
                      const nn::NetworkWeights& weights, Precision precision = Precision::f32);

// Truncated (radius ceil(3 sigma)) Gaussian taps, normalized to sum 1.
std::vector<double> gaussian_kernel(double sigma_vox);

// Separable Gaussian with per-axis sigma_mm / spacing. Taps falling outside
// the box are dropped and the remaining weights renormalized.
ProbabilityVolume gaussian_smooth(const ProbabilityVolume& pv, double sigma_mm);

struct Segmentation {
  LabelVolume mask;  // full parent grid
  bool empty = false;
};

// Keeps the largest component of {p > threshold}; ties go to the component
// whose first voxel in x-fastest scan order comes first.
Segmentation threshold_and_largest_component(const ProbabilityVolume& pv, double threshold, int connectivity = 26);

struct PipelineModels {
  nn::NetworkSpec localizer_spec;
  std::array<nn::NetworkWeights, 3> localizer;  // axial, coronal, sagittal
  nn::NetworkSpec segmenter_spec;
  nn::NetworkWeights segmenter;
};

struct PipelineParams {
  NormalizationWindow window;
  FusionParams fusion;
  ClassifyOptions classify;
  PostprocessParams post;

  void validate() const;
};

struct SegmentationResult {
  LabelVolume mask;
  bool empty = false;
  BoundingBox3D box;
  ProbabilityVolume probabilities;  // raw network output over the box
  ProbabilityVolume smoothed;
  std::array<SliceProbabilitySequence, 3> slices;  // axial, coronal, sagittal
};

// Normalize, localize, classify, smooth, threshold. Propagates LocalizationError.
SegmentationResult segment(const Volume3D& image, const PipelineModels& models, const PipelineParams& params = {});

}  // namespace lvseg
