#include "lvseg/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lvseg/error.hpp"
#include "lvseg/nn/engine.hpp"

namespace lvseg {
namespace {

struct Tap {
  int src;
  double weight;
};

// Overlap weights of each output cell with the source cells, in integer
// units scaled by (src * out) so the partition is exact.
std::vector<std::vector<Tap>> area_taps(int src, int out) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    const long lo = static_cast<long>(o) * src;
    const long hi = lo + src;
    for (int s = static_cast<int>(lo / out); s < src && static_cast<long>(s) * out < hi; ++s) {
      const long overlap = std::min(hi, static_cast<long>(s + 1) * out) - std::max(lo, static_cast<long>(s) * out);
      if (overlap > 0) taps[o].push_back({s, static_cast<double>(overlap) / static_cast<double>(src)});
    }
  }
  return taps;
}

}  // namespace

void FusionParams::validate() const {
  if (!(prob_threshold > 0.0 && prob_threshold < 1.0)) throw ConfigError("prob_threshold must be in (0,1)");
  if (smooth_window < 1 || smooth_window % 2 == 0) throw ConfigError("smooth_window must be a positive odd integer");
  if (!(margin_fraction >= 0.0) || !std::isfinite(margin_fraction)) throw ConfigError("margin_fraction must be >= 0");
}

Image2D downsample_area(const Image2D& image, int width, int height) {
  if (width < 1 || height < 1) throw ShapeError("downsample target must be at least 1x1");
  if (image.width < 1 || image.height < 1) throw ShapeError("cannot resample an empty image");
  const auto tx = area_taps(image.width, width);
  const auto ty = area_taps(image.height, height);

  std::vector<double> rows(static_cast<std::size_t>(width) * image.height);
  for (int v = 0; v < image.height; ++v)
    for (int o = 0; o < width; ++o) {
      double s = 0.0;
      for (const Tap& t : tx[o]) s += t.weight * image.at(t.src, v);
      rows[static_cast<std::size_t>(v) * width + o] = s;
    }
  Image2D out;
  out.width = width;
  out.height = height;
  out.pixels.resize(static_cast<std::size_t>(width) * height);
  for (int o = 0; o < height; ++o)
    for (int u = 0; u < width; ++u) {
      double s = 0.0;
      for (const Tap& t : ty[o]) s += t.weight * rows[static_cast<std::size_t>(t.src) * width + u];
      out.at(u, o) = static_cast<float>(s);
    }
  return out;
}

std::vector<double> localizer_input(const Volume3D& normalized, Axis axis, int index, int size) {
  const Image2D small = downsample_area(extract_slice(normalized, axis, index), size, size);
  return {small.pixels.begin(), small.pixels.end()};
}

SliceProbabilitySequence classify_slices(const Volume3D& normalized, Axis axis, const nn::NetworkSpec& spec,
                                         const nn::NetworkWeights& weights) {
  const nn::TensorShape in = spec.input;
  if (in.channels != 1 || in.height != in.width) throw IncompatibleError("localizer expects a 1 x N x N input");
  nn::Engine<double> engine(spec, weights);
  nn::Workspace<double> ws;

  const int count = normalized.dims()[fixed_axis(axis)];
  constexpr int kBatch = 32;
  SliceProbabilitySequence seq;
  seq.axis = axis;
  seq.probs.resize(static_cast<std::size_t>(count));
  std::vector<double> batch;
  for (int start = 0; start < count; start += kBatch) {
    const int n = std::min(kBatch, count - start);
    batch.clear();
    for (int i = start; i < start + n; ++i) {
      const auto x = localizer_input(normalized, axis, i, in.width);
      batch.insert(batch.end(), x.begin(), x.end());
    }
    const auto probs = engine.forward(batch, static_cast<std::size_t>(n), nn::Mode::infer, ws);
    for (int b = 0; b < n; ++b) seq.probs[static_cast<std::size_t>(start + b)] = probs[2 * b + 1];
  }
  return seq;
}

std::vector<double> moving_average(std::span<const double> values, int window) {
  const int n = static_cast<int>(values.size());
  const int half = window / 2;
  std::vector<double> out(values.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += values[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::optional<std::array<int, 2>> select_range(std::span<const double> probs, const FusionParams& params) {
  params.validate();
  const std::vector<double> smooth = moving_average(probs, params.smooth_window);
  const int n = static_cast<int>(smooth.size());

  int best_lo = -1, best_len = 0;
  double best_mean = 0.0;
  for (int i = 0; i < n;) {
    if (!(smooth[i] > params.prob_threshold)) {
      ++i;
      continue;
    }
    const int lo = i;
    double sum = 0.0;
    while (i < n && smooth[i] > params.prob_threshold) sum += smooth[i++];
    const int len = i - lo;
    const double mean = sum / len;
    if (len > best_len || (len == best_len && mean > best_mean)) {
      best_lo = lo;
      best_len = len;
      best_mean = mean;
    }
  }
  if (best_len == 0) return std::nullopt;

  const int margin = static_cast<int>(std::lround(params.margin_fraction * n));
  return std::array<int, 2>{std::max(0, best_lo - margin), std::min(n - 1, best_lo + best_len - 1 + margin)};
}

BoundingBox3D fuse_to_box(const SliceProbabilitySequence& sx, const SliceProbabilitySequence& sy,
                          const SliceProbabilitySequence& sz, const FusionParams& params) {
  if (sx.axis != Axis::sagittal || sy.axis != Axis::coronal || sz.axis != Axis::axial)
    throw ConfigError("fuse_to_box expects sagittal, coronal and axial sequences for x, y and z");
  BoundingBox3D box;
  const SliceProbabilitySequence* seqs[3] = {&sx, &sy, &sz};
  for (int a = 0; a < 3; ++a) {
    if (seqs[a]->probs.empty()) throw ShapeError("empty slice probability sequence");
    const auto range = select_range(seqs[a]->probs, params);
    if (!range) {
      const std::string name(axis_name(seqs[a]->axis));
      throw LocalizationError(name, "no " + name + " slice exceeds the presence threshold");
    }
    box.lo[a] = (*range)[0];
    box.hi[a] = (*range)[1];
  }
  return box;
}

}  // namespace lvseg
