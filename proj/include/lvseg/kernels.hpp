#pragma once

// Arithmetic inner loops of the CNN engine. Each kernel has a scalar
// reference implementation and AVX2 / AVX-512 variants selected at runtime.
//
// All variants produce bit-identical results: every GEMM output element is
// accumulated as acc = fma(a[k], b[k], acc) for k = 0..K-1 starting from zero,
// independent of its position in the register tile, and the elementwise
// kernels use the same fused operations lane by lane.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace lvseg::kernels {

enum class Isa { scalar, avx2, avx512 };

std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);

bool isa_supported(Isa isa);
std::vector<Isa> supported_isas();

// Best supported ISA, unless overridden by LVSEG_ISA=scalar|avx2|avx512.
Isa active_isa();
// Process-wide override; throws ConfigError if the CPU lacks the ISA.
void set_active_isa(Isa isa);

template <class T>
struct GemmArgs {
  std::size_t m = 0, n = 0, k = 0;
  const T* a = nullptr;  // m x k, row stride lda
  std::size_t lda = 0;
  const T* b = nullptr;  // k x n, row stride ldb
  std::size_t ldb = 0;
  T* c = nullptr;  // m x n, row stride ldc
  std::size_t ldc = 0;
  bool accumulate = false;  // c += a*b instead of c = a*b
};

// Row-major C (=|+=) A * B.
void gemm(const GemmArgs<float>& args);
void gemm(const GemmArgs<double>& args);
void gemm(Isa isa, const GemmArgs<float>& args);
void gemm(Isa isa, const GemmArgs<double>& args);

// velocity = momentum * velocity - lr * grad; weights += velocity.
void sgd_momentum(std::span<double> weights, std::span<double> velocity, std::span<const double> grad,
                  double lr, double momentum);
void sgd_momentum(Isa isa, std::span<double> weights, std::span<double> velocity, std::span<const double> grad,
                  double lr, double momentum);

// x = max(x, 0) in place.
void relu(std::span<float> x);
void relu(std::span<double> x);
void relu(Isa isa, std::span<float> x);
void relu(Isa isa, std::span<double> x);

}  // namespace lvseg::kernels
