#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lvseg/nn/spec.hpp"

namespace lvseg::nn {

struct ParamTensor {
  std::vector<int> shape;
  std::vector<double> values;

  bool operator==(const ParamTensor&) const = default;
};

// Parameters of one Conv (kernel out x in x k x k) or Dense (kernel out x in)
// layer; layer_index points into NetworkSpec::layers.
struct LayerParams {
  std::uint32_t layer_index = 0;
  ParamTensor kernel;
  ParamTensor bias;

  bool operator==(const LayerParams&) const = default;
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct NetworkWeights {
  std::uint32_t format_version = kWeightFormatVersion;
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;
  std::vector<LayerParams> layers;

  std::size_t parameter_count() const;
  bool operator==(const NetworkWeights&) const = default;
};

// Parameter tensors with the shapes implied by `spec`, all zero.
std::vector<LayerParams> zero_params(const NetworkSpec& spec);
NetworkWeights zero_weights(const NetworkSpec& spec);

// He-normal kernels (stddev sqrt(2 / fan_in)), zero biases.
NetworkWeights init_weights(const NetworkSpec& spec, std::uint64_t seed);

// Throws IncompatibleError when hash or shapes disagree with `spec`.
void check_compatible(const NetworkSpec& spec, const NetworkWeights& weights);

// Binary layout (little-endian): "LVSEGWTS", u32 version, u64 spec hash,
// u64 seed, u32 layer count, then per layer: u32 layer index, u32 rank,
// rank x u32 dims, u32 bias length, kernel f64[], bias f64[].
void save_weights(const NetworkWeights& weights, const std::filesystem::path& path);
NetworkWeights load_weights(const std::filesystem::path& path);
NetworkWeights load_weights(const std::filesystem::path& path, const NetworkSpec& spec);

}  // namespace lvseg::nn
