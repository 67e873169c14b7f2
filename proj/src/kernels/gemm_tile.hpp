#pragma once

// Register-tiled GEMM shared by the vector ISA variants. Included by exactly
// one translation unit per ISA, each compiled with its own target flags; all
// symbols here have internal linkage.

#include <cmath>
#include <cstddef>
#include <utility>

#include "kernel_table.hpp"

namespace {

template <class Ops, int Rows, int NV>
void gemm_tile(std::size_t k, const typename Ops::T* a, std::size_t lda, const typename Ops::T* bp,
               typename Ops::T* c, std::size_t ldc, std::size_t cols, bool accumulate) {
  using T = typename Ops::T;
  using V = typename Ops::V;
  constexpr int W = Ops::width;
  constexpr int NR = NV * W;

  V acc[Rows][NV];
  #pragma GCC unroll 16
  for (int r = 0; r < Rows; ++r)
    #pragma GCC unroll 16
    for (int v = 0; v < NV; ++v) acc[r][v] = Ops::zero();

  for (std::size_t p = 0; p < k; ++p) {
    V bv[NV];
    #pragma GCC unroll 16
    for (int v = 0; v < NV; ++v) bv[v] = Ops::load(bp + p * NR + v * W);
    #pragma GCC unroll 16
    for (int r = 0; r < Rows; ++r) {
      const V av = Ops::broadcast(a + r * lda + p);
      #pragma GCC unroll 16
      for (int v = 0; v < NV; ++v) acc[r][v] = Ops::fma(av, bv[v], acc[r][v]);
    }
  }

  if (cols == static_cast<std::size_t>(NR)) {
    #pragma GCC unroll 16
    for (int r = 0; r < Rows; ++r) {
      T* row = c + r * ldc;
      #pragma GCC unroll 16
      for (int v = 0; v < NV; ++v) {
        if (accumulate)
          Ops::store(row + v * W, Ops::add(Ops::load(row + v * W), acc[r][v]));
        else
          Ops::store(row + v * W, acc[r][v]);
      }
    }
    return;
  }
  alignas(64) T tmp[NR];
  #pragma GCC unroll 16
  for (int r = 0; r < Rows; ++r) {
    #pragma GCC unroll 16
    for (int v = 0; v < NV; ++v) Ops::store(tmp + v * W, acc[r][v]);
    T* row = c + r * ldc;
    for (std::size_t j = 0; j < cols; ++j) row[j] = accumulate ? row[j] + tmp[j] : tmp[j];
  }
}

template <class Ops, int NV, int... R>
constexpr auto make_tile_table(std::integer_sequence<int, R...>) {
  using Fn = void (*)(std::size_t, const typename Ops::T*, std::size_t, const typename Ops::T*,
                      typename Ops::T*, std::size_t, std::size_t, bool);
  struct Table {
    Fn fns[sizeof...(R)];
  };
  return Table{{&gemm_tile<Ops, R + 1, NV>...}};
}

template <class Ops, int MR, int NV>
void gemm_driver(const lvseg::kernels::GemmArgs<typename Ops::T>& g, typename Ops::T* pack) {
  using T = typename Ops::T;
  constexpr std::size_t NR = static_cast<std::size_t>(NV * Ops::width);
  static constexpr auto tiles = make_tile_table<Ops, NV>(std::make_integer_sequence<int, MR>{});

  if (g.m == 0 || g.n == 0) return;
  if (g.k == 0) {
    if (!g.accumulate)
      for (std::size_t i = 0; i < g.m; ++i)
        for (std::size_t j = 0; j < g.n; ++j) g.c[i * g.ldc + j] = T(0);
    return;
  }

  for (std::size_t j0 = 0; j0 < g.n; j0 += NR) {
    const std::size_t cols = g.n - j0 < NR ? g.n - j0 : NR;
    for (std::size_t p = 0; p < g.k; ++p) {
      const T* src = g.b + p * g.ldb + j0;
      T* dst = pack + p * NR;
      std::size_t j = 0;
      for (; j < cols; ++j) dst[j] = src[j];
      for (; j < NR; ++j) dst[j] = T(0);
    }
    std::size_t i0 = 0;
    for (; i0 + MR <= g.m; i0 += MR)
      gemm_tile<Ops, MR, NV>(g.k, g.a + i0 * g.lda, g.lda, pack, g.c + i0 * g.ldc + j0, g.ldc, cols,
                             g.accumulate);
    if (i0 < g.m)
      tiles.fns[g.m - i0 - 1](g.k, g.a + i0 * g.lda, g.lda, pack, g.c + i0 * g.ldc + j0, g.ldc, cols,
                              g.accumulate);
  }
}

}  // namespace
