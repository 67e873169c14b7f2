#pragma once

#include <cstddef>

#include "lvseg/kernels.hpp"

namespace lvseg::kernels::detail {

// Entry points of one ISA variant. The packing buffer is owned by the
// dispatcher so the ISA translation units never instantiate library templates
// that could be merged across targets at link time.
struct KernelTable {
  void (*gemm_f32)(const GemmArgs<float>& args, float* pack);
  void (*gemm_f64)(const GemmArgs<double>& args, double* pack);
  void (*sgd_momentum)(double* weights, double* velocity, const double* grad, std::size_t n, double lr,
                       double momentum);
  void (*relu_f32)(float* x, std::size_t n);
  void (*relu_f64)(double* x, std::size_t n);
  std::size_t panel_f32;  // packed B panel width, in elements
  std::size_t panel_f64;
};

const KernelTable& scalar_table();
#if defined(LVSEG_HAVE_X86_KERNELS)
const KernelTable& avx2_table();
const KernelTable& avx512_table();
#endif

}  // namespace lvseg::kernels::detail
