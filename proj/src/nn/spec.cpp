#include "lvseg/nn/spec.hpp"

#include <sstream>

#include "lvseg/error.hpp"

namespace lvseg::nn {
namespace {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

std::string shape_string(const TensorShape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

std::string describe_layer(const Layer& layer, bool with_rates) {
  return std::visit(
      overloaded{
          [](const Conv& c) {
            return "conv out=" + std::to_string(c.out_channels) + " k=" + std::to_string(c.kernel) +
                   " s=" + std::to_string(c.stride) + " p=" + std::to_string(c.pad);
          },
          [](const MaxPool& p) {
            return "maxpool w=" + std::to_string(p.window) + " s=" + std::to_string(p.stride);
          },
          [](const Dense& d) { return "dense out=" + std::to_string(d.out_units); },
          [](const Relu&) { return std::string("relu"); },
          [with_rates](const Dropout& d) {
            if (!with_rates) return std::string("dropout");
            std::ostringstream os;
            os << "dropout rate=" << d.rate;
            return os.str();
          },
          [](const Softmax&) { return std::string("softmax"); },
      },
      layer);
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(overloaded{[](const Conv&) { return "conv"; }, [](const MaxPool&) { return "maxpool"; },
                               [](const Dense&) { return "dense"; }, [](const Relu&) { return "relu"; },
                               [](const Dropout&) { return "dropout"; }, [](const Softmax&) { return "softmax"; }},
                    layer);
}

std::vector<TensorShape> NetworkSpec::shapes() const {
  if (input.channels < 1 || input.height < 1 || input.width < 1)
    throw ShapeError("network input shape must be positive");
  std::vector<TensorShape> out{input};
  bool flat = false;  // once a Dense layer ran, spatial layers are not allowed
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const TensorShape in = out.back();
    const std::string where = "layer " + std::to_string(i) + " (" + layer_name(layers[i]) + ")";
    TensorShape next = in;
    std::visit(overloaded{
                   [&](const Conv& c) {
                     if (flat) throw ShapeError(where + ": convolution after a dense layer");
                     if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1 || c.pad < 0)
                       throw ShapeError(where + ": invalid convolution parameters");
                     const int h = in.height + 2 * c.pad - c.kernel;
                     const int w = in.width + 2 * c.pad - c.kernel;
                     if (h < 0 || w < 0) throw ShapeError(where + ": kernel larger than padded input");
                     next = {c.out_channels, h / c.stride + 1, w / c.stride + 1};
                   },
                   [&](const MaxPool& p) {
                     if (flat) throw ShapeError(where + ": pooling after a dense layer");
                     if (p.window < 1 || p.stride < 1) throw ShapeError(where + ": invalid pooling parameters");
                     if (p.window > in.height || p.window > in.width)
                       throw ShapeError(where + ": pooling window larger than input " + shape_string(in));
                     next = {in.channels, (in.height - p.window) / p.stride + 1, (in.width - p.window) / p.stride + 1};
                   },
                   [&](const Dense& d) {
                     if (d.out_units < 1) throw ShapeError(where + ": dense layer needs >= 1 unit");
                     flat = true;
                     next = {d.out_units, 1, 1};
                   },
                   [&](const Relu&) {},
                   [&](const Dropout& d) {
                     if (!(d.rate >= 0.0 && d.rate < 1.0)) throw ShapeError(where + ": dropout rate must be in [0,1)");
                   },
                   [&](const Softmax&) {},
               },
               layers[i]);
    out.push_back(next);
  }
  return out;
}

void NetworkSpec::validate() const {
  const auto s = shapes();
  if (layers.empty() || !std::holds_alternative<Softmax>(layers.back()))
    throw ShapeError("network must end with a Softmax layer");
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    if (std::holds_alternative<Softmax>(layers[i])) throw ShapeError("Softmax allowed only as the terminal layer");
  if (layers.size() < 2 || !std::holds_alternative<Dense>(layers[layers.size() - 2]))
    throw ShapeError("Softmax must directly follow a Dense layer");
  if (s.back().size() != 2) throw ShapeError("network output must have exactly 2 units");

  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!std::holds_alternative<Dropout>(layers[i])) continue;
    bool dense_before = false;
    for (std::size_t j = 0; j < i; ++j) dense_before |= std::holds_alternative<Dense>(layers[j]);
    bool dense_after = false;
    for (std::size_t j = i + 1; j < layers.size(); ++j) dense_after |= std::holds_alternative<Dense>(layers[j]);
    if (!dense_before || !dense_after)
      throw ShapeError("Dropout at layer " + std::to_string(i) + " must sit between Dense layers");
  }
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << "input " << shape_string(input) << '\n';
  for (const Layer& l : layers) os << describe_layer(l, true) << '\n';
  return os.str();
}

std::uint64_t NetworkSpec::hash() const {
  std::string text = "input " + shape_string(input) + "\n";
  for (const Layer& l : layers) text += describe_layer(l, false) + "\n";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

NetworkSpec NetworkSpec::with_dropout_rate(double rate) const {
  NetworkSpec out = *this;
  for (Layer& l : out.layers)
    if (auto* d = std::get_if<Dropout>(&l)) d->rate = rate;
  return out;
}

NetworkSpec NetworkSpec::without_dropout() const {
  NetworkSpec out;
  out.input = input;
  for (const Layer& l : layers)
    if (!std::holds_alternative<Dropout>(l)) out.layers.push_back(l);
  return out;
}

NetworkSpec segmenter_spec(int patch_size) {
  NetworkSpec spec;
  spec.input = {3, patch_size, patch_size};
  spec.layers = {
      Conv{16, 3, 1, 1}, Relu{}, MaxPool{2, 2},  //
      Conv{32, 3, 1, 1}, Relu{}, MaxPool{2, 2},  //
      Conv{32, 3, 1, 1}, Relu{}, MaxPool{2, 2},  //
      Conv{64, 3, 1, 1}, Relu{},                 //
      Dense{256},        Relu{}, Dropout{0.5},   //
      Dense{2},          Softmax{},
  };
  return spec;
}

NetworkSpec localizer_spec(int input_size) {
  NetworkSpec spec;
  spec.input = {1, input_size, input_size};
  spec.layers = {
      Conv{8, 3, 1, 1},  Relu{}, MaxPool{2, 2},  //
      Conv{16, 3, 1, 1}, Relu{}, MaxPool{2, 2},  //
      Conv{16, 3, 1, 1}, Relu{}, MaxPool{2, 2},  //
      Conv{32, 3, 1, 1}, Relu{}, MaxPool{input_size / 8, input_size / 8},
      Dense{64},         Relu{}, Dropout{0.5},   //
      Dense{2},          Softmax{},
  };
  return spec;
}

}  // namespace lvseg::nn
