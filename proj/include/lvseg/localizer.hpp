#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "lvseg/box.hpp"
#include "lvseg/nn/spec.hpp"
#include "lvseg/nn/weights.hpp"
#include "lvseg/volume.hpp"

namespace lvseg {

inline constexpr int kLocalizerInputSize = 64;

struct SliceProbabilitySequence {
  Axis axis = Axis::axial;
  std::vector<double> probs;  // one per slice along the axis
};

struct FusionParams {
  double prob_threshold = 0.5;
  int smooth_window = 5;  // odd
  double margin_fraction = 0.05;

  void validate() const;  // throws ConfigError
};

// Resamples to width x height; every output pixel is the area-weighted mean
// of the source pixels its footprint covers.
Image2D downsample_area(const Image2D& image, int width, int height);

// Slice `index` of a normalized volume, area-averaged to size x size and
// flattened row-major as a single-channel network input.
std::vector<double> localizer_input(const Volume3D& normalized, Axis axis, int index,
                                    int size = kLocalizerInputSize);

// Presence probability of every slice along `axis`. `normalized` must be in
// [0,1]. Throws IncompatibleError when weights do not fit the spec.
SliceProbabilitySequence classify_slices(const Volume3D& normalized, Axis axis, const nn::NetworkSpec& spec,
                                         const nn::NetworkWeights& weights);

// Centered moving average; the window shrinks at the ends.
std::vector<double> moving_average(std::span<const double> values, int window);

// Inclusive index range chosen on one axis (smooth, threshold, longest run,
// margin); nullopt if no smoothed value exceeds the threshold.
std::optional<std::array<int, 2>> select_range(std::span<const double> probs, const FusionParams& params);

// Combines the per-axis ranges (sagittal -> x, coronal -> y, axial -> z).
// Throws LocalizationError naming the first axis without a detection.
BoundingBox3D fuse_to_box(const SliceProbabilitySequence& sx, const SliceProbabilitySequence& sy,
                          const SliceProbabilitySequence& sz, const FusionParams& params);

}  // namespace lvseg
