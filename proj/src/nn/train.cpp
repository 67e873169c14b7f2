#include "lvseg/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lvseg/error.hpp"
#include "lvseg/kernels.hpp"

namespace lvseg::nn {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0,1)");
}

void InMemorySamples::add(std::span<const float> values, int label) {
  if (values.size() != shape_.size()) throw ShapeError("sample has wrong size");
  values_.insert(values_.end(), values.begin(), values.end());
  labels_.push_back(label);
}

void InMemorySamples::add(std::span<const double> values, int label) {
  if (values.size() != shape_.size()) throw ShapeError("sample has wrong size");
  for (double v : values) values_.push_back(static_cast<float>(v));
  labels_.push_back(label);
}

void SampleSource::fill(std::size_t i, std::span<float> out) const {
  std::vector<double> tmp(out.size());
  fill(i, std::span<double>(tmp));
  std::copy(tmp.begin(), tmp.end(), out.begin());
}

void InMemorySamples::fill(std::size_t i, std::span<double> out) const {
  const std::size_t n = shape_.size();
  std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(i * n), n, out.begin());
}

void InMemorySamples::fill(std::size_t i, std::span<float> out) const {
  const std::size_t n = shape_.size();
  std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(i * n), n, out.begin());
}

namespace {

template <class T>
TrainResult train_impl(const NetworkSpec& base_spec, const SampleSource& samples, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  const NetworkSpec spec = base_spec.with_dropout_rate(cfg.dropout_rate);
  spec.validate();
  if (samples.shape() != spec.input) throw ConfigError("sample shape does not match the network input");
  const std::size_t count = samples.size();
  if (count == 0) throw ConfigError("training set is empty");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const int l = samples.label(i);
    if (l != 0 && l != 1) throw ConfigError("training labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  if (positives == 0 || positives == count) throw ConfigError("training set contains a single class");

  TrainResult result;
  result.weights = init_weights(spec, cfg.seed);
  Engine<T> engine(spec, result.weights);
  Workspace<T> ws;

  std::vector<LayerParams> velocity = zero_params(spec);
  std::vector<LayerParams> grads;
  Rng order_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  Rng dropout_rng(cfg.seed ^ 0x14057b7ef767814fULL);

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t sample_size = spec.input.size();
  std::vector<T> batch(batch_size * sample_size);
  std::vector<int> labels(batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < count; start += batch_size) {
      const std::size_t n = std::min(batch_size, count - start);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t idx = order[start + b];
        samples.fill(idx, std::span<T>(batch).subspan(b * sample_size, sample_size));
        labels[b] = samples.label(idx);
      }
      engine.forward(std::span<const T>(batch.data(), n * sample_size), n, Mode::train, ws, &dropout_rng);
      const double loss = engine.backward(std::span<const int>(labels.data(), n), ws, grads);
      loss_sum += loss * static_cast<double>(n);

      for (std::size_t p = 0; p < grads.size(); ++p) {
        LayerParams& w = result.weights.layers[p];
        kernels::sgd_momentum(w.kernel.values, velocity[p].kernel.values, grads[p].kernel.values, cfg.learning_rate,
                              cfg.momentum);
        kernels::sgd_momentum(w.bias.values, velocity[p].bias.values, grads[p].bias.values, cfg.learning_rate,
                              cfg.momentum);
      }
      engine.set_weights(result.weights);
    }
    const double mean_loss = loss_sum / static_cast<double>(count);
    result.epoch_loss.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return result;
}

}  // namespace

TrainResult train(const NetworkSpec& spec, const SampleSource& samples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  return cfg.precision == Precision::f32 ? train_impl<float>(spec, samples, cfg, on_epoch)
                                         : train_impl<double>(spec, samples, cfg, on_epoch);
}

std::vector<double> predict(const NetworkSpec& spec, const NetworkWeights& weights, const SampleSource& samples,
                            std::size_t batch_size) {
  Engine<double> engine(spec, weights);
  Workspace<double> ws;
  const std::size_t sample_size = spec.input.size();
  std::vector<double> batch(batch_size * sample_size);
  std::vector<double> out(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, samples.size() - start);
    for (std::size_t b = 0; b < n; ++b)
      samples.fill(start + b, std::span<double>(batch).subspan(b * sample_size, sample_size));
    const auto probs = engine.forward(std::span<const double>(batch.data(), n * sample_size), n, Mode::infer, ws);
    for (std::size_t b = 0; b < n; ++b) out[start + b] = probs[2 * b + 1];
  }
  return out;
}

}  // namespace lvseg::nn
