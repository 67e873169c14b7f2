#include <cmath>
#include <vector>

#include "kernel_table.hpp"

namespace {

template <class T>
void gemm_reference(const lvseg::kernels::GemmArgs<T>& g, T* /*pack*/) {
  std::vector<T> acc(g.n);
  for (std::size_t i = 0; i < g.m; ++i) {
    std::fill(acc.begin(), acc.end(), T(0));
    for (std::size_t p = 0; p < g.k; ++p) {
      const T a = g.a[i * g.lda + p];
      const T* brow = g.b + p * g.ldb;
      for (std::size_t j = 0; j < g.n; ++j) acc[j] = std::fma(a, brow[j], acc[j]);
    }
    T* crow = g.c + i * g.ldc;
    for (std::size_t j = 0; j < g.n; ++j) crow[j] = g.accumulate ? crow[j] + acc[j] : acc[j];
  }
}

void sgd_step(double* w, double* vel, const double* grad, std::size_t n, double lr, double momentum) {
  for (std::size_t i = 0; i < n; ++i) {
    vel[i] = std::fma(momentum, vel[i], -(lr * grad[i]));
    w[i] += vel[i];
  }
}

template <class T>
void relu_inplace(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

}  // namespace

namespace lvseg::kernels::detail {

const KernelTable& scalar_table() {
  static const KernelTable table{&gemm_reference<float>, &gemm_reference<double>, &sgd_step,
                                 &relu_inplace<float>, &relu_inplace<double>, 0, 0};
  return table;
}

}  // namespace lvseg::kernels::detail
