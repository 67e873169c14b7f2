#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lvseg/box.hpp"
#include "lvseg/volume.hpp"

namespace lvseg {

// 2|a & b| / (|a| + |b|); 1 when both are empty. Throws GridError on grid mismatch.
double dice(const LabelVolume& a, const LabelVolume& b);

// Foreground voxels with a background 6-neighbour or on the grid edge.
std::vector<Index3> surface_voxels(const LabelVolume& mask);

// Exact Euclidean distance (mm, voxel centres) from every voxel to the
// nearest voxel of `targets`, x-fastest over the grid.
std::vector<double> distance_to_set(const GridGeometry& grid, const std::vector<Index3>& targets);

// Symmetric, pooled mean absolute surface distance in mm. Throws
// UndefinedDistanceError if either mask is empty.
double mean_abs_surface_distance(const LabelVolume& a, const LabelVolume& b);

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct SensitivitySpecificity {
  ConfusionCounts counts;
  std::optional<double> sensitivity;  // nullopt when TP + FN = 0
  std::optional<double> specificity;  // nullopt when TN + FP = 0
};

// Confusion counts over the voxels of `box` only.
SensitivitySpecificity sensitivity_specificity(const LabelVolume& pred, const LabelVolume& ref,
                                               const BoundingBox3D& box);

struct ScanMetrics {
  std::string id;
  double dice = 0.0;
  std::optional<double> mad_mm;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  BoundingBox3D box;
  std::vector<std::string> flags;  // empty_prediction, mad_undefined, ...

  bool operator==(const ScanMetrics&) const = default;
};

struct AggregateMetrics {
  double dice = 0.0;
  std::optional<double> mad_mm;  // means over scans where defined
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  int scan_count = 0;

  bool operator==(const AggregateMetrics&) const = default;
};

struct EvaluationReport {
  std::vector<ScanMetrics> scans;
  AggregateMetrics aggregate;

  bool operator==(const EvaluationReport&) const = default;
};

struct ScanInput {
  std::string id;
  const LabelVolume* prediction = nullptr;
  const LabelVolume* reference = nullptr;
  BoundingBox3D box;
};

ScanMetrics evaluate_scan(const std::string& id, const LabelVolume& prediction, const LabelVolume& reference,
                          const BoundingBox3D& box);
AggregateMetrics aggregate(const std::vector<ScanMetrics>& scans);
EvaluationReport evaluate_dataset(const std::vector<ScanInput>& scans);
// Parallel lists; throws ConfigError when their lengths differ.
EvaluationReport evaluate_dataset(const std::vector<LabelVolume>& predictions, const std::vector<LabelVolume>& references,
                                  const std::vector<BoundingBox3D>& boxes, const std::vector<std::string>& ids = {});

// {"scans":[{"id","dice","mad_mm","sensitivity","specificity","box","flags"}],
//  "aggregate":{...}}; undefined values are null. Keys keep this order.
std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);  // throws FormatError
void write_report(const EvaluationReport& report, const std::filesystem::path& path);

}  // namespace lvseg
