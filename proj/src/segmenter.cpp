#include "lvseg/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lvseg/error.hpp"
#include "lvseg/nn/engine.hpp"

namespace lvseg {
namespace {

template <class T>
void classify_centers(const Volume3D& normalized, const std::vector<Index3>& centers, const nn::NetworkSpec& spec,
                      const nn::NetworkWeights& weights, int batch_size, std::vector<double>& out) {
  nn::Engine<T> engine(spec, weights);
  nn::Workspace<T> ws;
  const int size = spec.input.width;
  const std::size_t sample = spec.input.size();
  std::vector<T> batch(static_cast<std::size_t>(batch_size) * sample);
  out.resize(centers.size());
  for (std::size_t start = 0; start < centers.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(static_cast<std::size_t>(batch_size), centers.size() - start);
    for (std::size_t b = 0; b < n; ++b)
      extract_patch_triplet_into(normalized, centers[start + b], size,
                                 std::span<T>(batch).subspan(b * sample, sample));
    const auto probs = engine.forward(std::span<const T>(batch.data(), n * sample), n, nn::Mode::infer, ws);
    for (std::size_t b = 0; b < n; ++b) out[start + b] = static_cast<double>(probs[2 * b + 1]);
  }
}

void classify(const Volume3D& normalized, const std::vector<Index3>& centers, const nn::NetworkSpec& spec,
              const nn::NetworkWeights& weights, const ClassifyOptions& options, std::vector<double>& out) {
  if (options.precision == Precision::f32)
    classify_centers<float>(normalized, centers, spec, weights, options.batch_size, out);
  else
    classify_centers<double>(normalized, centers, spec, weights, options.batch_size, out);
}

void check_patch_spec(const nn::NetworkSpec& spec) {
  if (spec.input.channels != 3 || spec.input.height != spec.input.width)
    throw IncompatibleError("voxel classifier expects a 3 x N x N input");
}

// Lattice positions lo, lo+s, ... plus hi.
std::vector<int> lattice(int lo, int hi, int stride) {
  std::vector<int> pts;
  for (int v = lo; v < hi; v += stride) pts.push_back(v);
  pts.push_back(hi);
  return pts;
}

}  // namespace

Volume3D ProbabilityVolume::to_volume() const {
  GridGeometry g = parent;
  g.dims = extents();
  for (int a = 0; a < 3; ++a) g.origin[a] = parent.origin[a] + box.lo[a] * parent.spacing[a];
  std::vector<float> values(probs.begin(), probs.end());
  return Volume3D(g, std::move(values));
}

void ClassifyOptions::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (stride < 1) throw ConfigError("stride must be >= 1");
}

void PostprocessParams::validate() const {
  if (!(sigma_mm > 0.0) || !std::isfinite(sigma_mm)) throw ConfigError("sigma_mm must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0,1)");
  if (connectivity != 6 && connectivity != 26) throw ConfigError("connectivity must be 6 or 26");
}

void PipelineParams::validate() const {
  window.validate();
  fusion.validate();
  classify.validate();
  post.validate();
}

ProbabilityVolume classify_voxels(const Volume3D& normalized, const BoundingBox3D& box, const nn::NetworkSpec& spec,
                                  const nn::NetworkWeights& weights, const ClassifyOptions& options) {
  options.validate();
  box.validate(normalized.dims());
  check_patch_spec(spec);

  ProbabilityVolume pv;
  pv.box = box;
  pv.parent = normalized.geometry();
  const Index3 e = box.extents();
  pv.probs.assign(box.voxel_count(), 0.0);

  if (options.stride == 1) {
    std::vector<Index3> centers;
    centers.reserve(pv.probs.size());
    for (int z = box.lo[2]; z <= box.hi[2]; ++z)
      for (int y = box.lo[1]; y <= box.hi[1]; ++y)
        for (int x = box.lo[0]; x <= box.hi[0]; ++x) centers.push_back({x, y, z});
    classify(normalized, centers, spec, weights, options, pv.probs);
    return pv;
  }

  std::array<std::vector<int>, 3> pts;
  for (int a = 0; a < 3; ++a) pts[a] = lattice(box.lo[a], box.hi[a], options.stride);
  std::vector<Index3> centers;
  for (int z : pts[2])
    for (int y : pts[1])
      for (int x : pts[0]) centers.push_back({x, y, z});
  std::vector<double> coarse;
  classify(normalized, centers, spec, weights, options, coarse);
  const std::size_t nx = pts[0].size(), ny = pts[1].size();
  auto sample = [&](std::size_t i, std::size_t j, std::size_t k) { return coarse[(k * ny + j) * nx + i]; };

  // Per axis: lower lattice cell and fractional offset for each voxel.
  std::array<std::vector<std::pair<std::size_t, double>>, 3> cell;
  for (int a = 0; a < 3; ++a) {
    cell[a].resize(static_cast<std::size_t>(e[a]));
    std::size_t c = 0;
    for (int v = box.lo[a]; v <= box.hi[a]; ++v) {
      while (c + 2 < pts[a].size() && pts[a][c + 1] <= v) ++c;
      if (pts[a].size() == 1) {
        cell[a][v - box.lo[a]] = {0, 0.0};
        continue;
      }
      const double t = static_cast<double>(v - pts[a][c]) / static_cast<double>(pts[a][c + 1] - pts[a][c]);
      cell[a][v - box.lo[a]] = {c, t};
    }
  }
  auto next = [&](int a, std::size_t c) { return std::min(c + 1, pts[a].size() - 1); };
  for (int z = 0; z < e[2]; ++z)
    for (int y = 0; y < e[1]; ++y)
      for (int x = 0; x < e[0]; ++x) {
        const auto [i0, tx] = cell[0][x];
        const auto [j0, ty] = cell[1][y];
        const auto [k0, tz] = cell[2][z];
        const std::size_t i1 = next(0, i0), j1 = next(1, j0), k1 = next(2, k0);
        const double c00 = sample(i0, j0, k0) * (1 - tx) + sample(i1, j0, k0) * tx;
        const double c10 = sample(i0, j1, k0) * (1 - tx) + sample(i1, j1, k0) * tx;
        const double c01 = sample(i0, j0, k1) * (1 - tx) + sample(i1, j0, k1) * tx;
        const double c11 = sample(i0, j1, k1) * (1 - tx) + sample(i1, j1, k1) * tx;
        const double c0 = c00 * (1 - ty) + c10 * ty;
        const double c1 = c01 * (1 - ty) + c11 * ty;
        pv.at(x, y, z) = std::clamp(c0 * (1 - tz) + c1 * tz, 0.0, 1.0);
      }
  return pv;
}

double classify_voxel(const Volume3D& normalized, const Index3& center, const nn::NetworkSpec& spec,
                      const nn::NetworkWeights& weights, Precision precision) {
  if (!normalized.geometry().contains(center)) throw BoundsError("voxel outside the volume");
  check_patch_spec(spec);
  ClassifyOptions options;
  options.batch_size = 1;
  options.precision = precision;
  std::vector<double> out;
  classify(normalized, {center}, spec, weights, options, out);
  return out[0];
}

std::vector<double> gaussian_kernel(double sigma_vox) {
  if (!(sigma_vox > 0.0) || !std::isfinite(sigma_vox)) throw ConfigError("Gaussian sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_vox));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma_vox * sigma_vox));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

ProbabilityVolume gaussian_smooth(const ProbabilityVolume& pv, double sigma_mm) {
  if (!(sigma_mm > 0.0) || !std::isfinite(sigma_mm)) throw ConfigError("sigma_mm must be positive");
  const Index3 e = pv.extents();
  if (pv.probs.size() != pv.box.voxel_count()) throw ShapeError("probability volume does not match its box");
  ProbabilityVolume out = pv;
  if (pv.probs.empty()) return out;
  const auto [mn, mx] = std::minmax_element(pv.probs.begin(), pv.probs.end());
  const double lo = *mn, hi = *mx;

  std::vector<double> src = pv.probs;
  std::vector<double> dst(src.size());
  std::vector<double> line, res;
  for (int a = 0; a < 3; ++a) {
    const std::vector<double> k = gaussian_kernel(sigma_mm / pv.parent.spacing[a]);
    const int r = static_cast<int>(k.size() / 2);
    const int n = e[a];
    const std::size_t step = a == 0 ? 1 : a == 1 ? static_cast<std::size_t>(e[0]) : static_cast<std::size_t>(e[0]) * e[1];
    const int b1 = a == 0 ? e[1] : e[0];
    const int b2 = a == 2 ? e[1] : e[2];
    line.resize(static_cast<std::size_t>(n));
    res.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < b2; ++j)
      for (int i = 0; i < b1; ++i) {
        std::size_t base;
        if (a == 0)
          base = (static_cast<std::size_t>(j) * e[1] + i) * e[0];
        else if (a == 1)
          base = static_cast<std::size_t>(j) * e[0] * e[1] + i;
        else
          base = static_cast<std::size_t>(j) * e[0] + i;
        for (int v = 0; v < n; ++v) line[v] = src[base + v * step];
        for (int v = 0; v < n; ++v) {
          const int t0 = std::max(-r, -v);
          const int t1 = std::min(r, n - 1 - v);
          double s = 0.0, w = 0.0;
          for (int t = t0; t <= t1; ++t) {
            s += k[t + r] * line[v + t];
            w += k[t + r];
          }
          res[v] = std::clamp(s / w, lo, hi);
        }
        for (int v = 0; v < n; ++v) dst[base + v * step] = res[v];
      }
    std::swap(src, dst);
  }
  out.probs = std::move(src);
  return out;
}

Segmentation threshold_and_largest_component(const ProbabilityVolume& pv, double threshold, int connectivity) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0,1)");
  if (connectivity != 6 && connectivity != 26) throw ConfigError("connectivity must be 6 or 26");
  if (pv.probs.size() != pv.box.voxel_count()) throw ShapeError("probability volume does not match its box");

  const Index3 e = pv.extents();
  std::vector<std::array<int, 3>> offsets;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0 || (connectivity == 6 && manhattan != 1)) continue;
        offsets.push_back({dx, dy, dz});
      }

  // 0 = background, -1 = unvisited foreground, k > 0 = component k.
  std::vector<int> comp(pv.probs.size());
  for (std::size_t i = 0; i < comp.size(); ++i) comp[i] = pv.probs[i] > threshold ? -1 : 0;

  int best = 0;
  std::size_t best_size = 0;
  int next_label = 0;
  std::vector<std::size_t> stack;
  for (int z = 0; z < e[2]; ++z)
    for (int y = 0; y < e[1]; ++y)
      for (int x = 0; x < e[0]; ++x) {
        const std::size_t seed = pv.local(x, y, z);
        if (comp[seed] != -1) continue;
        const int label = ++next_label;
        std::size_t size = 0;
        comp[seed] = label;
        stack.assign(1, seed);
        while (!stack.empty()) {
          const std::size_t cur = stack.back();
          stack.pop_back();
          ++size;
          const int cx = static_cast<int>(cur % e[0]);
          const int cy = static_cast<int>((cur / e[0]) % e[1]);
          const int cz = static_cast<int>(cur / (static_cast<std::size_t>(e[0]) * e[1]));
          for (const auto& o : offsets) {
            const int nx = cx + o[0], ny = cy + o[1], nz = cz + o[2];
            if (nx < 0 || ny < 0 || nz < 0 || nx >= e[0] || ny >= e[1] || nz >= e[2]) continue;
            const std::size_t ni = pv.local(nx, ny, nz);
            if (comp[ni] != -1) continue;
            comp[ni] = label;
            stack.push_back(ni);
          }
        }
        if (size > best_size) {
          best_size = size;
          best = label;
        }
      }

  Segmentation seg;
  seg.mask = LabelVolume(pv.parent, 0);
  seg.empty = best == 0;
  if (seg.empty) return seg;
  for (int z = 0; z < e[2]; ++z)
    for (int y = 0; y < e[1]; ++y)
      for (int x = 0; x < e[0]; ++x)
        if (comp[pv.local(x, y, z)] == best)
          seg.mask.at(x + pv.box.lo[0], y + pv.box.lo[1], z + pv.box.lo[2]) = 1;
  return seg;
}

SegmentationResult segment(const Volume3D& image, const PipelineModels& models, const PipelineParams& params) {
  params.validate();
  const Volume3D normalized = normalize(image, params.window);
  SegmentationResult r;
  for (std::size_t i = 0; i < kAllAxes.size(); ++i)
    r.slices[i] = classify_slices(normalized, kAllAxes[i], models.localizer_spec, models.localizer[i]);
  r.box = fuse_to_box(r.slices[2], r.slices[1], r.slices[0], params.fusion);
  r.probabilities = classify_voxels(normalized, r.box, models.segmenter_spec, models.segmenter, params.classify);
  r.smoothed = gaussian_smooth(r.probabilities, params.post.sigma_mm);
  Segmentation seg = threshold_and_largest_component(r.smoothed, params.post.threshold, params.post.connectivity);
  r.mask = std::move(seg.mask);
  r.empty = seg.empty;
  return r;
}

}  // namespace lvseg
