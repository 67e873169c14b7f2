#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "lvseg/kernels.hpp"

using namespace lvseg;
using kernels::Isa;

namespace {

template <class T>
std::vector<T> random_values(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

// Plain triple loop in the documented accumulation order.
template <class T>
void reference_gemm(const kernels::GemmArgs<T>& g) {
  for (std::size_t i = 0; i < g.m; ++i)
    for (std::size_t j = 0; j < g.n; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < g.k; ++k) acc = std::fma(g.a[i * g.lda + k], g.b[k * g.ldb + j], acc);
      g.c[i * g.ldc + j] = g.accumulate ? g.c[i * g.ldc + j] + acc : acc;
    }
}

template <class T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <class T>
void check_gemm_all_isas() {
  std::mt19937_64 rng(42);
  const std::size_t shapes[][3] = {{1, 1, 1},   {3, 5, 7},    {8, 16, 9},   {17, 33, 65},
                                   {64, 48, 27}, {5, 2304, 72}, {33, 130, 31}, {2, 7, 300}};
  for (const auto& s : shapes)
    for (bool acc : {false, true}) {
      const std::size_t m = s[0], n = s[1], k = s[2];
      const std::size_t lda = k + 3, ldb = n + 1, ldc = n + 2;
      const auto a = random_values<T>(m * lda, rng);
      const auto b = random_values<T>(k * ldb, rng);
      const auto c0 = random_values<T>(m * ldc, rng);
      std::vector<T> want = c0;
      reference_gemm<T>({m, n, k, a.data(), lda, b.data(), ldb, want.data(), ldc, acc});
      for (Isa isa : kernels::supported_isas()) {
        std::vector<T> got = c0;
        kernels::gemm(isa, {m, n, k, a.data(), lda, b.data(), ldb, got.data(), ldc, acc});
        INFO("isa " << kernels::isa_name(isa) << " m=" << m << " n=" << n << " k=" << k << " acc=" << acc);
        CHECK(bit_equal(got, want));
      }
    }
}

}  // namespace

TEST_CASE("gemm variants are bit-identical to the ordered-fma reference (double)") { check_gemm_all_isas<double>(); }
TEST_CASE("gemm variants are bit-identical to the ordered-fma reference (float)") { check_gemm_all_isas<float>(); }

TEST_CASE("relu and sgd variants match scalar exactly") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {1u, 7u, 8u, 16u, 31u, 100u, 1027u}) {
    const auto xd = random_values<double>(n, rng);
    const auto xf = random_values<float>(n, rng);
    const auto g = random_values<double>(n, rng);
    const auto v0 = random_values<double>(n, rng);
    std::vector<double> rd = xd, w_ref = xd, v_ref = v0;
    std::vector<float> rf = xf;
    kernels::relu(Isa::scalar, std::span<double>(rd));
    kernels::relu(Isa::scalar, std::span<float>(rf));
    kernels::sgd_momentum(Isa::scalar, w_ref, v_ref, g, 0.01, 0.9);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(rd[i] == std::max(xd[i], 0.0));
      CHECK(v_ref[i] == std::fma(0.9, v0[i], -(0.01 * g[i])));
      CHECK(w_ref[i] == xd[i] + v_ref[i]);
    }
    for (Isa isa : kernels::supported_isas()) {
      std::vector<double> d = xd, w = xd, v = v0;
      std::vector<float> f = xf;
      kernels::relu(isa, std::span<double>(d));
      kernels::relu(isa, std::span<float>(f));
      kernels::sgd_momentum(isa, w, v, g, 0.01, 0.9);
      CHECK(bit_equal(d, rd));
      CHECK(bit_equal(f, rf));
      CHECK(bit_equal(w, w_ref));
      CHECK(bit_equal(v, v_ref));
    }
  }
}

TEST_CASE("isa names and support") {
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512}) CHECK(kernels::parse_isa(kernels::isa_name(isa)) == isa);
  CHECK(kernels::isa_supported(Isa::scalar));
  CHECK(kernels::isa_supported(kernels::active_isa()));
  CHECK_THROWS(kernels::parse_isa("neon"));
}
