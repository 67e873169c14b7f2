#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lvseg/nn/engine.hpp"

namespace lvseg::nn {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double dropout_rate = 0.5;
  std::uint64_t seed = 1;
  // Forward/backward arithmetic. Master weights and momentum stay double.
  Precision precision = Precision::f64;

  void validate() const;  // throws ConfigError
};

// Labelled samples, materialized on demand so large patch sets need not be
// held in memory.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual TensorShape shape() const = 0;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t i) const = 0;
  virtual void fill(std::size_t i, std::span<double> out) const = 0;
  // Defaults to the double fill followed by a conversion.
  virtual void fill(std::size_t i, std::span<float> out) const;
};

class InMemorySamples final : public SampleSource {
 public:
  explicit InMemorySamples(TensorShape shape) : shape_(shape) {}

  void add(std::span<const float> values, int label);
  void add(std::span<const double> values, int label);

  TensorShape shape() const override { return shape_; }
  std::size_t size() const override { return labels_.size(); }
  int label(std::size_t i) const override { return labels_[i]; }
  void fill(std::size_t i, std::span<double> out) const override;
  void fill(std::size_t i, std::span<float> out) const override;

 private:
  TensorShape shape_;
  std::vector<float> values_;
  std::vector<int> labels_;
};

struct TrainResult {
  NetworkWeights weights;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Mini-batch SGD with momentum on the cross-entropy loss. Initial weights are
// He-normal from cfg.seed; sample order and dropout masks come from separate
// streams derived from the same seed, so a run is a pure function of
// (spec, samples, cfg). Dropout layers use cfg.dropout_rate.
TrainResult train(const NetworkSpec& spec, const SampleSource& samples, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Class-1 probability for every sample, batched, in double precision.
std::vector<double> predict(const NetworkSpec& spec, const NetworkWeights& weights, const SampleSource& samples,
                            std::size_t batch_size = 64);

}  // namespace lvseg::nn
