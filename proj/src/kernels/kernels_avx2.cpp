#include <immintrin.h>

#include "gemm_tile.hpp"

namespace {

struct Avx2F64 {
  using T = double;
  using V = __m256d;
  static constexpr int width = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V broadcast(const T* p) { return _mm256_broadcast_sd(p); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
};

struct Avx2F32 {
  using T = float;
  using V = __m256;
  static constexpr int width = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V broadcast(const T* p) { return _mm256_broadcast_ss(p); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
};

constexpr int kRows = 4;
constexpr int kVecs = 3;

void gemm_f64(const lvseg::kernels::GemmArgs<double>& g, double* pack) {
  gemm_driver<Avx2F64, kRows, kVecs>(g, pack);
}

void gemm_f32(const lvseg::kernels::GemmArgs<float>& g, float* pack) {
  gemm_driver<Avx2F32, kRows, kVecs>(g, pack);
}

void sgd_step(double* w, double* vel, const double* grad, std::size_t n, double lr, double momentum) {
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d vmu = _mm256_set1_pd(momentum);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d step = _mm256_mul_pd(vlr, _mm256_loadu_pd(grad + i));
    const __m256d v = _mm256_fmsub_pd(vmu, _mm256_loadu_pd(vel + i), step);
    _mm256_storeu_pd(vel + i, v);
    _mm256_storeu_pd(w + i, _mm256_add_pd(_mm256_loadu_pd(w + i), v));
  }
  for (; i < n; ++i) {
    vel[i] = std::fma(momentum, vel[i], -(lr * grad[i]));
    w[i] += vel[i];
  }
}

void relu_f64(double* x, std::size_t n) {
  const __m256d z = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_f32(float* x, std::size_t n) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  for (; i < n; ++i) x[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace

namespace lvseg::kernels::detail {

const KernelTable& avx2_table() {
  static const KernelTable table{&gemm_f32, &gemm_f64, &sgd_step, &relu_f32, &relu_f64,
                                 kVecs * Avx2F32::width, kVecs * Avx2F64::width};
  return table;
}

}  // namespace lvseg::kernels::detail
