#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lvseg/nn/spec.hpp"
#include "lvseg/nn/weights.hpp"

namespace lvseg::nn {

enum class Mode { infer, train };

// Arithmetic type of a pass; parameters are always stored as double.
enum class Precision { f32, f64 };

using Rng = std::mt19937_64;

// Per-call state of a forward/backward pass. One workspace per thread; the
// engine itself is immutable during passes.
template <class T>
struct Workspace {
  std::size_t batch = 0;
  // acts[i] is the input of layer i, acts.back() the probabilities. The
  // output of a convolution feeding a ReLU is never materialized (left empty).
  std::vector<std::vector<T>> acts;
  std::vector<std::vector<T>> dropout_scale;
  std::vector<std::vector<std::int32_t>> pool_argmax;
  std::vector<std::vector<T>> grad_kernel, grad_bias;
  std::vector<T> cols, cols_t, scratch, delta, delta_prev, sample_delta, sample_delta_prev;
};

template <class T>
class Engine {
 public:
  explicit Engine(NetworkSpec spec);
  Engine(NetworkSpec spec, const NetworkWeights& weights);

  const NetworkSpec& spec() const { return spec_; }
  const TensorShape& input_shape() const { return spec_.input; }

  // Copies (and converts) the parameters. Throws IncompatibleError on mismatch.
  void set_weights(const NetworkWeights& weights);

  // Runs `batch` samples laid out as batch x C x H x W. Returns batch x 2
  // class probabilities (a view into ws). In train mode dropout masks are
  // drawn from `rng`; with rng == nullptr the masks already stored in ws are
  // reused. Throws NumericError if any activation is non-finite.
  std::span<const T> forward(std::span<const T> input, std::size_t batch, Mode mode, Workspace<T>& ws,
                             Rng* rng = nullptr) const;

  // Cross-entropy backward pass for the forward pass stored in ws. Fills
  // `grads` (shapes as zero_params(spec)) and, if requested, the gradient with
  // respect to the input. Returns the mean loss over the batch.
  double backward(std::span<const int> labels, Workspace<T>& ws, std::vector<LayerParams>& grads,
                  std::vector<T>* input_grad = nullptr) const;

 private:
  struct Params {
    std::vector<T> kernel;    // as stored in NetworkWeights
    std::vector<T> kernel_t;  // transposed: conv (C*k*k) x out, dense in x out
    std::vector<T> bias;
  };

  void spatial_forward(std::size_t n, Workspace<T>& ws) const;
  void spatial_backward(std::size_t n, Workspace<T>& ws, std::vector<T>* input_grad) const;

  NetworkSpec spec_;
  std::vector<TensorShape> shapes_;
  std::size_t first_dense_ = 0;  // layers before this run one sample at a time
  std::vector<int> param_slot_;  // layer -> index into params_, -1 if none
  std::vector<Params> params_;
};

extern template class Engine<float>;
extern template class Engine<double>;

// Mean cross-entropy of logits rows against class labels (log-sum-exp form).
double cross_entropy(std::span<const double> logits, std::span<const int> labels);

// Convenience wrappers over Engine<double>.
std::vector<double> forward(const NetworkSpec& spec, const NetworkWeights& weights, std::span<const double> batch,
                            std::size_t batch_size, Mode mode, Rng* rng = nullptr);

struct LossAndGradients {
  double loss = 0.0;
  std::vector<LayerParams> gradients;
};

// With `dropout_rng`, the forward pass runs in train mode with masks drawn
// from it; otherwise dropout is the identity.
LossAndGradients loss_and_gradients(const NetworkSpec& spec, const NetworkWeights& weights,
                                    std::span<const double> batch, std::size_t batch_size, std::span<const int> labels,
                                    Rng* dropout_rng = nullptr);

}  // namespace lvseg::nn
