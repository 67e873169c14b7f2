#include "lvseg/nn/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <type_traits>
#include <limits>
#include <string>

#include "lvseg/error.hpp"
#include "lvseg/kernels.hpp"

namespace lvseg::nn {
namespace {

// First output index whose input tap (o * stride - pad + tap) is >= 0, and
// the first one whose tap reaches `extent`, clamped to [0, out].
struct TapRange {
  int lo, hi;
};

TapRange valid_taps(int extent, int out, int stride, int pad, int tap) {
  const int need_lo = pad - tap;  // o * stride >= need_lo
  int lo = need_lo <= 0 ? 0 : (need_lo + stride - 1) / stride;
  const int need_hi = extent + pad - tap;  // o * stride >= need_hi is out of range
  int hi = need_hi <= 0 ? 0 : (need_hi + stride - 1) / stride;
  hi = std::min(hi, out);
  lo = std::min(lo, hi);
  return {lo, hi};
}

template <class T>
void im2col(const T* x, const TensorShape& in, const Conv& c, const TensorShape& out, T* cols) {
  const int k = c.kernel;
  const std::size_t n = static_cast<std::size_t>(out.height) * out.width;
  for (int ch = 0; ch < in.channels; ++ch)
    for (int ky = 0; ky < k; ++ky) {
      const TapRange rows = valid_taps(in.height, out.height, c.stride, c.pad, ky);
      for (int kx = 0; kx < k; ++kx) {
        const TapRange span = valid_taps(in.width, out.width, c.stride, c.pad, kx);
        T* dst = cols + (static_cast<std::size_t>(ch * k + ky) * k + kx) * n;
        for (int oy = 0; oy < out.height; ++oy) {
          T* d = dst + static_cast<std::size_t>(oy) * out.width;
          if (oy < rows.lo || oy >= rows.hi) {
            std::fill(d, d + out.width, T(0));
            continue;
          }
          const int iy = oy * c.stride - c.pad + ky;
          const T* src = x + (static_cast<std::size_t>(ch) * in.height + iy) * in.width;
          const int shift = kx - c.pad;
          std::fill(d, d + span.lo, T(0));
          if (c.stride == 1) {
            for (int ox = span.lo; ox < span.hi; ++ox) d[ox] = src[ox + shift];
          } else {
            for (int ox = span.lo; ox < span.hi; ++ox) d[ox] = src[ox * c.stride + shift];
          }
          std::fill(d + span.hi, d + out.width, T(0));
        }
      }
    }
}

template <class T>
void col2im(const T* cols, const TensorShape& in, const Conv& c, const TensorShape& out, T* dx) {
  const int k = c.kernel;
  const std::size_t n = static_cast<std::size_t>(out.height) * out.width;
  std::fill(dx, dx + in.size(), T(0));
  for (int ch = 0; ch < in.channels; ++ch)
    for (int ky = 0; ky < k; ++ky) {
      const TapRange rows = valid_taps(in.height, out.height, c.stride, c.pad, ky);
      for (int kx = 0; kx < k; ++kx) {
        const TapRange span = valid_taps(in.width, out.width, c.stride, c.pad, kx);
        const T* src = cols + (static_cast<std::size_t>(ch * k + ky) * k + kx) * n;
        for (int oy = rows.lo; oy < rows.hi; ++oy) {
          const int iy = oy * c.stride - c.pad + ky;
          T* d = dx + (static_cast<std::size_t>(ch) * in.height + iy) * in.width;
          const int shift = kx - c.pad;
          const T* s = src + static_cast<std::size_t>(oy) * out.width;
          for (int ox = span.lo; ox < span.hi; ++ox) d[ox * c.stride + shift] += s[ox];
        }
      }
    }
}

template <class T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock)
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t i1 = std::min(rows, i0 + kBlock);
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
}

template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
          std::size_t ldc, bool accumulate) {
  kernels::gemm(kernels::GemmArgs<T>{m, n, k, a, lda, b, ldb, c, ldc, accumulate});
}

// Bitwise test so the loop vectorizes; true if any value is Inf or NaN.
template <class T>
bool any_non_finite(const T* values, std::size_t n) {
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  constexpr Bits kExp = static_cast<Bits>(sizeof(T) == 8 ? 0x7ff0000000000000ULL : 0x7f800000ULL);
  Bits bad = 0;
  for (std::size_t j = 0; j < n; ++j) {
    Bits b;
    std::memcpy(&b, values + j, sizeof(T));
    bad |= static_cast<Bits>((b & kExp) == kExp);
  }
  return bad != 0;
}

template <class T>
void check_finite(const T* values, std::size_t n, std::size_t layer, const Layer& kind) {
  if (any_non_finite(values, n)) throw NumericError(layer, layer_name(kind) + " output");
}

template <class T>
void max_pool(const T* x, const TensorShape& in, const MaxPool& mp, const TensorShape& out, T* y,
              std::int32_t* arg) {
  for (int ch = 0; ch < in.channels; ++ch) {
    const T* plane = x + static_cast<std::size_t>(ch) * in.height * in.width;
    const std::size_t out_base = static_cast<std::size_t>(ch) * out.height * out.width;
    const std::int32_t plane_offset = ch * in.height * in.width;
    if (mp.window == 2 && mp.stride == 2) {
      for (int oy = 0; oy < out.height; ++oy) {
        const std::int32_t r0 = 2 * oy * in.width;
        const std::int32_t r1 = r0 + in.width;
        T* yr = y + out_base + static_cast<std::size_t>(oy) * out.width;
        std::int32_t* ar = arg + out_base + static_cast<std::size_t>(oy) * out.width;
        for (int ox = 0; ox < out.width; ++ox) {
          std::int32_t best_idx = r0 + 2 * ox;
          T best = plane[best_idx];
          if (plane[r0 + 2 * ox + 1] > best) best = plane[best_idx = r0 + 2 * ox + 1];
          if (plane[r1 + 2 * ox] > best) best = plane[best_idx = r1 + 2 * ox];
          if (plane[r1 + 2 * ox + 1] > best) best = plane[best_idx = r1 + 2 * ox + 1];
          yr[ox] = best;
          ar[ox] = plane_offset + best_idx;
        }
      }
      continue;
    }
    for (int oy = 0; oy < out.height; ++oy)
      for (int ox = 0; ox < out.width; ++ox) {
        std::int32_t best_idx = (oy * mp.stride) * in.width + ox * mp.stride;
        T best = plane[best_idx];
        for (int wy = 0; wy < mp.window; ++wy)
          for (int wx = 0; wx < mp.window; ++wx) {
            const std::int32_t idx = (oy * mp.stride + wy) * in.width + ox * mp.stride + wx;
            if (plane[idx] > best) {
              best = plane[idx];
              best_idx = idx;
            }
          }
        const std::size_t o = out_base + static_cast<std::size_t>(oy) * out.width + ox;
        y[o] = best;
        arg[o] = plane_offset + best_idx;
      }
  }
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

template <class T>
Engine<T>::Engine(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  shapes_ = spec_.shapes();
  param_slot_.assign(spec_.layers.size(), -1);
  first_dense_ = spec_.layers.size();
  for (std::size_t i = 0; i < spec_.layers.size(); ++i)
    if (std::holds_alternative<Dense>(spec_.layers[i])) {
      first_dense_ = i;
      break;
    }
  for (std::size_t i = 0; i < spec_.layers.size(); ++i)
    if (has_params(spec_.layers[i])) {
      param_slot_[i] = static_cast<int>(params_.size());
      params_.emplace_back();
    }
  set_weights(zero_weights(spec_));
}

template <class T>
Engine<T>::Engine(NetworkSpec spec, const NetworkWeights& weights) : Engine(std::move(spec)) {
  set_weights(weights);
}

template <class T>
void Engine<T>::set_weights(const NetworkWeights& weights) {
  check_compatible(spec_, weights);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    const LayerParams& src = weights.layers[p];
    Params& dst = params_[p];
    dst.kernel.assign(src.kernel.values.begin(), src.kernel.values.end());
    dst.bias.assign(src.bias.values.begin(), src.bias.values.end());
    const std::size_t rows = static_cast<std::size_t>(src.kernel.shape[0]);
    const std::size_t cols = dst.kernel.size() / rows;
    dst.kernel_t.resize(dst.kernel.size());
    transpose(dst.kernel.data(), rows, cols, dst.kernel_t.data());
  }
}

template <class T>
void Engine<T>::spatial_forward(std::size_t n, Workspace<T>& ws) const {
  for (std::size_t i = 0; i < first_dense_; ++i) {
    const TensorShape in = shapes_[i];
    const TensorShape out = shapes_[i + 1];
    const T* x = ws.acts[i].data() + n * in.size();
    const Layer& layer = spec_.layers[i];
    if (const auto* c = std::get_if<Conv>(&layer)) {
      const Params& p = params_[param_slot_[i]];
      const std::size_t kdim = static_cast<std::size_t>(in.channels) * c->kernel * c->kernel;
      const std::size_t ndim = static_cast<std::size_t>(out.height) * out.width;
      const bool fuse_relu = i + 1 < first_dense_ && std::holds_alternative<Relu>(spec_.layers[i + 1]);
      T* y = fuse_relu ? ws.scratch.data() : ws.acts[i + 1].data() + n * out.size();
      im2col(x, in, *c, out, ws.cols.data());
      gemm<T>(out.channels, ndim, kdim, p.kernel.data(), kdim, ws.cols.data(), ndim, y, ndim, false);
      for (int o = 0; o < out.channels; ++o) {
        T* row = y + static_cast<std::size_t>(o) * ndim;
        const T b = p.bias[o];
        for (std::size_t j = 0; j < ndim; ++j) row[j] += b;
      }
      check_finite(y, out.size(), i, layer);
      if (fuse_relu) {
        T* r = ws.acts[i + 2].data() + n * out.size();
        for (std::size_t j = 0; j < out.size(); ++j) r[j] = y[j] > T(0) ? y[j] : T(0);
        ++i;
      }
    } else if (const auto* mp = std::get_if<MaxPool>(&layer)) {
      T* y = ws.acts[i + 1].data() + n * out.size();
      max_pool(x, in, *mp, out, y, ws.pool_argmax[i].data() + n * out.size());
      check_finite(y, out.size(), i, layer);
    } else if (std::holds_alternative<Relu>(layer)) {
      T* y = ws.acts[i + 1].data() + n * out.size();
      for (std::size_t j = 0; j < out.size(); ++j) y[j] = x[j] > T(0) ? x[j] : T(0);
      check_finite(y, out.size(), i, layer);
    } else {
      throw ShapeError("forward: " + layer_name(layer) + " is not supported before the first dense layer");
    }
  }
}

template <class T>
std::span<const T> Engine<T>::forward(std::span<const T> input, std::size_t batch, Mode mode, Workspace<T>& ws,
                                      Rng* rng) const {
  const std::size_t num_layers = spec_.layers.size();
  if (batch == 0) throw ShapeError("forward: empty batch");
  if (input.size() != batch * spec_.input.size())
    throw ShapeError("forward: input has " + std::to_string(input.size()) + " values, expected " +
                     std::to_string(batch) + " x " + std::to_string(spec_.input.size()));

  const bool reuse_masks = mode == Mode::train && rng == nullptr;
  if (reuse_masks && (ws.batch != batch || ws.dropout_scale.size() != num_layers))
    throw ShapeError("forward: no stored dropout masks for this batch");

  ws.batch = batch;
  ws.acts.resize(num_layers + 1);
  ws.dropout_scale.resize(num_layers);
  ws.pool_argmax.resize(num_layers);
  ws.acts[0].assign(input.begin(), input.end());

  std::size_t cols_size = 0, scratch_size = 0;
  for (std::size_t i = 0; i < first_dense_; ++i) {
    const TensorShape in = shapes_[i];
    const TensorShape out = shapes_[i + 1];
    const bool elided =
        i > 0 && std::holds_alternative<Conv>(spec_.layers[i - 1]) && std::holds_alternative<Relu>(spec_.layers[i]);
    if (elided)
      ws.acts[i].clear();
    else if (i > 0)
      ws.acts[i].resize(batch * in.size());
    if (const auto* c = std::get_if<Conv>(&spec_.layers[i])) {
      cols_size = std::max(cols_size, static_cast<std::size_t>(in.channels) * c->kernel * c->kernel *
                                          static_cast<std::size_t>(out.height) * out.width);
      scratch_size = std::max(scratch_size, out.size());
    }
    if (std::holds_alternative<MaxPool>(spec_.layers[i])) ws.pool_argmax[i].resize(batch * out.size());
  }
  if (first_dense_ > 0) ws.acts[first_dense_].resize(batch * shapes_[first_dense_].size());
  ws.cols.resize(cols_size);
  ws.scratch.resize(scratch_size);

  for (std::size_t n = 0; n < batch; ++n) spatial_forward(n, ws);

  for (std::size_t i = first_dense_; i < num_layers; ++i) {
    const TensorShape in = shapes_[i];
    const TensorShape out = shapes_[i + 1];
    const std::vector<T>& x = ws.acts[i];
    std::vector<T>& y = ws.acts[i + 1];
    y.resize(batch * out.size());
    const Layer& layer = spec_.layers[i];

    if (std::holds_alternative<Dense>(layer)) {
      const Params& p = params_[param_slot_[i]];
      const std::size_t in_dim = in.size();
      const std::size_t out_dim = out.size();
      gemm<T>(batch, out_dim, in_dim, x.data(), in_dim, p.kernel_t.data(), out_dim, y.data(), out_dim, false);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < out_dim; ++o) y[n * out_dim + o] += p.bias[o];
    } else if (std::holds_alternative<Relu>(layer)) {
      std::copy(x.begin(), x.end(), y.begin());
      kernels::relu(std::span<T>(y));
    } else if (const auto* d = std::get_if<Dropout>(&layer)) {
      std::vector<T>& scale = ws.dropout_scale[i];
      if (mode == Mode::infer) {
        scale.clear();
        std::copy(x.begin(), x.end(), y.begin());
      } else {
        if (!reuse_masks) {
          scale.assign(x.size(), T(1));
          if (d->rate > 0.0) {
            const T keep_scale = static_cast<T>(1.0 / (1.0 - d->rate));
            for (T& s : scale) s = uniform01(*rng) < d->rate ? T(0) : keep_scale;
          }
        } else if (scale.size() != x.size()) {
          throw ShapeError("forward: stored dropout mask has the wrong size");
        }
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = x[j] * scale[j];
      }
    } else if (std::holds_alternative<Softmax>(layer)) {
      const std::size_t width = out.size();
      for (std::size_t n = 0; n < batch; ++n) {
        const T* z = x.data() + n * width;
        T* pr = y.data() + n * width;
        const T zmax = *std::max_element(z, z + width);
        T sum = 0;
        for (std::size_t j = 0; j < width; ++j) {
          pr[j] = std::exp(z[j] - zmax);
          sum += pr[j];
        }
        for (std::size_t j = 0; j < width; ++j) pr[j] /= sum;
      }
    } else {
      throw ShapeError("forward: " + layer_name(layer) + " is not supported after a dense layer");
    }
    check_finite(y.data(), y.size(), i, layer);
  }
  return ws.acts.back();
}

template <class T>
void Engine<T>::spatial_backward(std::size_t n, Workspace<T>& ws, std::vector<T>* input_grad) const {
  const std::size_t top = shapes_[first_dense_].size();
  ws.sample_delta.assign(ws.delta.begin() + static_cast<std::ptrdiff_t>(n * top),
                         ws.delta.begin() + static_cast<std::ptrdiff_t>((n + 1) * top));
  for (std::size_t li = first_dense_; li-- > 0;) {
    const TensorShape in = shapes_[li];
    const TensorShape out = shapes_[li + 1];
    const bool need_dx = li > 0 || input_grad != nullptr;
    const T* dy = ws.sample_delta.data();
    std::vector<T>& dx = ws.sample_delta_prev;
    dx.resize(in.size());
    const Layer& layer = spec_.layers[li];

    if (const auto* c = std::get_if<Conv>(&layer)) {
      const Params& p = params_[param_slot_[li]];
      const std::size_t kdim = static_cast<std::size_t>(in.channels) * c->kernel * c->kernel;
      const std::size_t ndim = static_cast<std::size_t>(out.height) * out.width;
      std::vector<T>& gk = ws.grad_kernel[param_slot_[li]];
      std::vector<T>& gb = ws.grad_bias[param_slot_[li]];
      for (int o = 0; o < out.channels; ++o) {
        const T* row = dy + static_cast<std::size_t>(o) * ndim;
        T s = 0;
        for (std::size_t j = 0; j < ndim; ++j) s += row[j];
        gb[o] += s;
      }
      im2col(ws.acts[li].data() + n * in.size(), in, *c, out, ws.cols.data());
      transpose(ws.cols.data(), kdim, ndim, ws.cols_t.data());
      gemm<T>(out.channels, kdim, ndim, dy, ndim, ws.cols_t.data(), kdim, gk.data(), kdim, n > 0);
      if (need_dx) {
        gemm<T>(kdim, ndim, out.channels, p.kernel_t.data(), out.channels, dy, ndim, ws.cols.data(), ndim, false);
        col2im(ws.cols.data(), in, *c, out, dx.data());
      }
    } else if (std::holds_alternative<MaxPool>(layer)) {
      if (need_dx) {
        std::fill(dx.begin(), dx.end(), T(0));
        const std::int32_t* arg = ws.pool_argmax[li].data() + n * out.size();
        for (std::size_t o = 0; o < out.size(); ++o) dx[arg[o]] += dy[o];
      }
    } else {  // Relu
      if (need_dx) {
        const T* y = ws.acts[li + 1].data() + n * out.size();
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = y[j] > T(0) ? dy[j] : T(0);
      }
    }
    if (!need_dx) break;
    std::swap(ws.sample_delta, ws.sample_delta_prev);
  }
  if (input_grad != nullptr) {
    const std::size_t in_size = spec_.input.size();
    std::copy(ws.sample_delta.begin(), ws.sample_delta.end(),
              input_grad->begin() + static_cast<std::ptrdiff_t>(n * in_size));
  }
}

template <class T>
double Engine<T>::backward(std::span<const int> labels, Workspace<T>& ws, std::vector<LayerParams>& grads,
                           std::vector<T>* input_grad) const {
  const std::size_t num_layers = spec_.layers.size();
  const std::size_t batch = ws.batch;
  if (ws.acts.size() != num_layers + 1 || batch == 0) throw ShapeError("backward: no forward pass in workspace");
  if (labels.size() != batch) throw ShapeError("backward: label count does not match batch");
  for (int l : labels)
    if (l != 0 && l != 1) throw ShapeError("backward: labels must be 0 or 1");

  grads = zero_params(spec_);

  // Softmax + cross-entropy: dL/dz = (p - onehot) / B.
  const std::vector<T>& logits = ws.acts[num_layers - 1];
  const std::vector<T>& probs = ws.acts[num_layers];
  double loss = 0.0;
  ws.delta.assign(probs.size(), T(0));
  for (std::size_t n = 0; n < batch; ++n) {
    const double z0 = logits[2 * n], z1 = logits[2 * n + 1];
    const double zmax = std::max(z0, z1);
    const double lse = zmax + std::log(std::exp(z0 - zmax) + std::exp(z1 - zmax));
    loss += lse - (labels[n] == 0 ? z0 : z1);
    for (int j = 0; j < 2; ++j)
      ws.delta[2 * n + j] = (probs[2 * n + j] - T(labels[n] == j ? 1 : 0)) / static_cast<T>(batch);
  }
  loss /= static_cast<double>(batch);

  for (std::size_t li = num_layers - 1; li-- > first_dense_;) {
    const TensorShape in = shapes_[li];
    const TensorShape out = shapes_[li + 1];
    const std::vector<T>& x = ws.acts[li];
    const std::vector<T>& y = ws.acts[li + 1];
    const bool need_dx = li > 0 || input_grad != nullptr;
    std::vector<T>& dy = ws.delta;
    std::vector<T>& dx = ws.delta_prev;
    dx.assign(need_dx ? batch * in.size() : 0, T(0));
    const Layer& layer = spec_.layers[li];

    if (std::holds_alternative<Dense>(layer)) {
      const Params& p = params_[param_slot_[li]];
      const std::size_t in_dim = in.size();
      const std::size_t out_dim = out.size();
      ws.scratch.resize(out_dim * batch);
      transpose(dy.data(), batch, out_dim, ws.scratch.data());
      std::vector<T> gk(p.kernel.size());
      gemm<T>(out_dim, in_dim, batch, ws.scratch.data(), batch, x.data(), in_dim, gk.data(), in_dim, false);
      LayerParams& g = grads[param_slot_[li]];
      std::copy(gk.begin(), gk.end(), g.kernel.values.begin());
      for (std::size_t o = 0; o < out_dim; ++o) {
        T s = 0;
        for (std::size_t n = 0; n < batch; ++n) s += dy[n * out_dim + o];
        g.bias.values[o] = static_cast<double>(s);
      }
      if (need_dx)
        gemm<T>(batch, in_dim, out_dim, dy.data(), out_dim, p.kernel.data(), in_dim, dx.data(), in_dim, false);
    } else if (std::holds_alternative<Relu>(layer)) {
      if (need_dx)
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = y[j] > T(0) ? dy[j] : T(0);
    } else if (std::holds_alternative<Dropout>(layer)) {
      if (need_dx) {
        const std::vector<T>& scale = ws.dropout_scale[li];
        if (scale.empty())
          std::copy(dy.begin(), dy.end(), dx.begin());
        else
          for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = dy[j] * scale[j];
      }
    } else {
      throw ShapeError("backward: Softmax is only supported as the terminal layer");
    }
    std::swap(ws.delta, ws.delta_prev);
  }

  if (first_dense_ == 0) {
    if (input_grad != nullptr) *input_grad = ws.delta;
    return loss;
  }

  ws.grad_kernel.resize(params_.size());
  ws.grad_bias.resize(params_.size());
  std::size_t cols_size = 0;
  for (std::size_t li = 0; li < first_dense_; ++li)
    if (const auto* c = std::get_if<Conv>(&spec_.layers[li])) {
      const int slot = param_slot_[li];
      ws.grad_kernel[slot].assign(params_[slot].kernel.size(), T(0));
      ws.grad_bias[slot].assign(params_[slot].bias.size(), T(0));
      cols_size = std::max(cols_size, static_cast<std::size_t>(shapes_[li].channels) * c->kernel * c->kernel *
                                          static_cast<std::size_t>(shapes_[li + 1].height) * shapes_[li + 1].width);
    }
  ws.cols.resize(cols_size);
  ws.cols_t.resize(cols_size);
  if (input_grad != nullptr) input_grad->assign(batch * spec_.input.size(), T(0));

  for (std::size_t n = 0; n < batch; ++n) spatial_backward(n, ws, input_grad);

  for (std::size_t li = 0; li < first_dense_; ++li)
    if (std::holds_alternative<Conv>(spec_.layers[li])) {
      const int slot = param_slot_[li];
      LayerParams& g = grads[slot];
      std::copy(ws.grad_kernel[slot].begin(), ws.grad_kernel[slot].end(), g.kernel.values.begin());
      std::copy(ws.grad_bias[slot].begin(), ws.grad_bias[slot].end(), g.bias.values.begin());
    }
  return loss;
}

template class Engine<float>;
template class Engine<double>;

double cross_entropy(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != 2 * labels.size()) throw ShapeError("cross_entropy: logits must be batch x 2");
  double loss = 0.0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const double z0 = logits[2 * n], z1 = logits[2 * n + 1];
    const double zmax = std::max(z0, z1);
    loss += zmax + std::log(std::exp(z0 - zmax) + std::exp(z1 - zmax)) - (labels[n] == 0 ? z0 : z1);
  }
  return labels.empty() ? 0.0 : loss / static_cast<double>(labels.size());
}

std::vector<double> forward(const NetworkSpec& spec, const NetworkWeights& weights, std::span<const double> batch,
                            std::size_t batch_size, Mode mode, Rng* rng) {
  Engine<double> engine(spec, weights);
  Workspace<double> ws;
  if (mode == Mode::train && rng == nullptr) throw ShapeError("forward: train mode needs a dropout RNG stream");
  const auto probs = engine.forward(batch, batch_size, mode, ws, rng);
  return {probs.begin(), probs.end()};
}

LossAndGradients loss_and_gradients(const NetworkSpec& spec, const NetworkWeights& weights,
                                    std::span<const double> batch, std::size_t batch_size, std::span<const int> labels,
                                    Rng* dropout_rng) {
  Engine<double> engine(spec, weights);
  Workspace<double> ws;
  engine.forward(batch, batch_size, dropout_rng ? Mode::train : Mode::infer, ws, dropout_rng);
  LossAndGradients out;
  out.loss = engine.backward(labels, ws, out.gradients);
  return out;
}

}  // namespace lvseg::nn
