#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace lvseg::nn {

struct TensorShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  bool operator==(const TensorShape&) const = default;
};

struct Conv {
  int out_channels = 1;
  int kernel = 3;  // square kernel size
  int stride = 1;
  int pad = 0;
};

struct MaxPool {
  int window = 2;
  int stride = 2;
};

struct Dense {
  int out_units = 1;
};

struct Relu {};

// Inverted dropout: kept units are scaled by 1 / (1 - rate) during training.
struct Dropout {
  double rate = 0.5;
};

struct Softmax {};

using Layer = std::variant<Conv, MaxPool, Dense, Relu, Dropout, Softmax>;

std::string layer_name(const Layer& layer);
inline bool has_params(const Layer& layer) {
  return std::holds_alternative<Conv>(layer) || std::holds_alternative<Dense>(layer);
}

struct NetworkSpec {
  TensorShape input;
  std::vector<Layer> layers;

  // shapes()[i] is the input shape of layer i; shapes().back() the output.
  // Throws ShapeError when the layer chain is inconsistent.
  std::vector<TensorShape> shapes() const;

  // Full structural check: consistent shapes, a single terminal Softmax over
  // 2 units, Dropout only between Dense layers.
  void validate() const;

  // Canonical text form, one layer per line.
  std::string describe() const;

  // FNV-1a over the structure that determines parameter shapes (dropout
  // rates are excluded, they do not change the weights).
  std::uint64_t hash() const;

  NetworkSpec with_dropout_rate(double rate) const;
  NetworkSpec without_dropout() const;
};

// 3 x 48 x 48 tri-planar patch classifier: 4 conv, 3 max-pool, 2 dense.
NetworkSpec segmenter_spec(int patch_size = 48);

// 1 x 64 x 64 slice-presence classifier used per plane by the localizer.
NetworkSpec localizer_spec(int input_size = 64);

}  // namespace lvseg::nn
