#include "lvseg/nn/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "lvseg/error.hpp"

namespace lvseg::nn {
namespace {

constexpr char kMagic[8] = {'L', 'V', 'S', 'E', 'G', 'W', 'T', 'S'};

template <class T>
void put(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<char>& data, const std::filesystem::path& path) : data_(data), path_(path) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw FormatError("weight file " + path_.string() + " is truncated");
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void get_doubles(std::vector<double>& out, std::size_t n) {
    if (n > (data_.size() - pos_) / sizeof(double))
      throw FormatError("weight file " + path_.string() + " is truncated");
    out.resize(n);
    std::memcpy(out.data(), data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const std::vector<char>& data_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

std::size_t NetworkWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kernel.values.size() + l.bias.values.size();
  return n;
}

std::vector<LayerParams> zero_params(const NetworkSpec& spec) {
  const auto shapes = spec.shapes();
  std::vector<LayerParams> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const TensorShape in = shapes[i];
    LayerParams p;
    p.layer_index = static_cast<std::uint32_t>(i);
    if (const auto* c = std::get_if<Conv>(&spec.layers[i])) {
      p.kernel.shape = {c->out_channels, in.channels, c->kernel, c->kernel};
      p.bias.shape = {c->out_channels};
    } else if (const auto* d = std::get_if<Dense>(&spec.layers[i])) {
      p.kernel.shape = {d->out_units, static_cast<int>(in.size())};
      p.bias.shape = {d->out_units};
    } else {
      continue;
    }
    p.kernel.values.assign(product(p.kernel.shape), 0.0);
    p.bias.values.assign(product(p.bias.shape), 0.0);
    out.push_back(std::move(p));
  }
  return out;
}

NetworkWeights zero_weights(const NetworkSpec& spec) {
  spec.validate();
  NetworkWeights w;
  w.spec_hash = spec.hash();
  w.layers = zero_params(spec);
  return w;
}

NetworkWeights init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkWeights w = zero_weights(spec);
  w.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& l : w.layers) {
    const std::size_t fan_in = l.kernel.values.size() / static_cast<std::size_t>(l.kernel.shape[0]);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& v : l.kernel.values) v = normal(rng);
  }
  return w;
}

void check_compatible(const NetworkSpec& spec, const NetworkWeights& weights) {
  if (weights.spec_hash != spec.hash())
    throw IncompatibleError("weights were trained for a different network (spec hash mismatch)");
  const auto expected = zero_params(spec);
  if (expected.size() != weights.layers.size())
    throw IncompatibleError("weights have " + std::to_string(weights.layers.size()) + " parametric layers, spec has " +
                            std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = expected[i];
    const auto& g = weights.layers[i];
    if (e.layer_index != g.layer_index || e.kernel.shape != g.kernel.shape || e.bias.shape != g.bias.shape ||
        g.kernel.values.size() != e.kernel.values.size() || g.bias.values.size() != e.bias.values.size())
      throw IncompatibleError("parameter shapes of layer " + std::to_string(e.layer_index) + " do not match spec");
  }
}

void save_weights(const NetworkWeights& weights, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, weights.format_version);
  put<std::uint64_t>(out, weights.spec_hash);
  put<std::uint64_t>(out, weights.seed);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(weights.layers.size()));
  for (const auto& l : weights.layers) {
    put<std::uint32_t>(out, l.layer_index);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.kernel.shape.size()));
    for (int d : l.kernel.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.bias.values.size()));
    out.append(reinterpret_cast<const char*>(l.kernel.values.data()), l.kernel.values.size() * sizeof(double));
    out.append(reinterpret_cast<const char*>(l.bias.values.data()), l.bias.values.size() * sizeof(double));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write weight file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to weight file " + path.string());
}

NetworkWeights load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weight file " + path.string());
  const std::vector<char> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(data, path);

  char magic[sizeof(kMagic)];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError(path.string() + " is not a weight file");

  NetworkWeights w;
  w.format_version = r.get<std::uint32_t>();
  if (w.format_version != kWeightFormatVersion)
    throw FormatError("unsupported weight format version " + std::to_string(w.format_version));
  w.spec_hash = r.get<std::uint64_t>();
  w.seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerParams l;
    l.layer_index = r.get<std::uint32_t>();
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 4) throw FormatError("invalid kernel rank in " + path.string());
    for (std::uint32_t d = 0; d < rank; ++d) l.kernel.shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
    const auto bias_len = r.get<std::uint32_t>();
    l.bias.shape = {static_cast<int>(bias_len)};
    r.get_doubles(l.kernel.values, product(l.kernel.shape));
    r.get_doubles(l.bias.values, bias_len);
    for (double v : l.kernel.values)
      if (!std::isfinite(v)) throw FormatError("non-finite weight in " + path.string());
    for (double v : l.bias.values)
      if (!std::isfinite(v)) throw FormatError("non-finite bias in " + path.string());
    w.layers.push_back(std::move(l));
  }
  if (!r.at_end()) throw FormatError("trailing bytes in weight file " + path.string());
  return w;
}

NetworkWeights load_weights(const std::filesystem::path& path, const NetworkSpec& spec) {
  NetworkWeights w = load_weights(path);
  check_compatible(spec, w);
  return w;
}

}  // namespace lvseg::nn
