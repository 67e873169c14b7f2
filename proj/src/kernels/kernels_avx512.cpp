#include <immintrin.h>

#include "gemm_tile.hpp"

namespace {

struct Avx512F64 {
  using T = double;
  using V = __m512d;
  static constexpr int width = 8;
  static V zero() { return _mm512_setzero_pd(); }
  static V load(const T* p) { return _mm512_loadu_pd(p); }
  static void store(T* p, V v) { _mm512_storeu_pd(p, v); }
  static V broadcast(const T* p) { return _mm512_set1_pd(*p); }
  static V fma(V a, V b, V c) { return _mm512_fmadd_pd(a, b, c); }
  static V add(V a, V b) { return _mm512_add_pd(a, b); }
};

struct Avx512F32 {
  using T = float;
  using V = __m512;
  static constexpr int width = 16;
  static V zero() { return _mm512_setzero_ps(); }
  static V load(const T* p) { return _mm512_loadu_ps(p); }
  static void store(T* p, V v) { _mm512_storeu_ps(p, v); }
  static V broadcast(const T* p) { return _mm512_set1_ps(*p); }
  static V fma(V a, V b, V c) { return _mm512_fmadd_ps(a, b, c); }
  static V add(V a, V b) { return _mm512_add_ps(a, b); }
};

constexpr int kRows = 8;
constexpr int kVecs = 3;

void gemm_f64(const lvseg::kernels::GemmArgs<double>& g, double* pack) {
  gemm_driver<Avx512F64, kRows, kVecs>(g, pack);
}

void gemm_f32(const lvseg::kernels::GemmArgs<float>& g, float* pack) {
  gemm_driver<Avx512F32, kRows, kVecs>(g, pack);
}

void sgd_step(double* w, double* vel, const double* grad, std::size_t n, double lr, double momentum) {
  const __m512d vlr = _mm512_set1_pd(lr);
  const __m512d vmu = _mm512_set1_pd(momentum);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d step = _mm512_mul_pd(vlr, _mm512_loadu_pd(grad + i));
    const __m512d v = _mm512_fmsub_pd(vmu, _mm512_loadu_pd(vel + i), step);
    _mm512_storeu_pd(vel + i, v);
    _mm512_storeu_pd(w + i, _mm512_add_pd(_mm512_loadu_pd(w + i), v));
  }
  for (; i < n; ++i) {
    vel[i] = std::fma(momentum, vel[i], -(lr * grad[i]));
    w[i] += vel[i];
  }
}

void relu_f64(double* x, std::size_t n) {
  const __m512d z = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm512_storeu_pd(x + i, _mm512_max_pd(_mm512_loadu_pd(x + i), z));
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_f32(float* x, std::size_t n) {
  const __m512 z = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) _mm512_storeu_ps(x + i, _mm512_max_ps(_mm512_loadu_ps(x + i), z));
  for (; i < n; ++i) x[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace

namespace lvseg::kernels::detail {

const KernelTable& avx512_table() {
  static const KernelTable table{&gemm_f32, &gemm_f64, &sgd_step, &relu_f32, &relu_f64,
                                 kVecs * Avx512F32::width, kVecs * Avx512F64::width};
  return table;
}

}  // namespace lvseg::kernels::detail
