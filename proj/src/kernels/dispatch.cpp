#include <atomic>
#include <cstdlib>
#include <string>

#include "kernel_table.hpp"
#include "lvseg/error.hpp"

namespace lvseg::kernels {
namespace {

Isa detect_best() {
#if defined(LVSEG_HAVE_X86_KERNELS)
  if (isa_supported(Isa::avx512)) return Isa::avx512;
  if (isa_supported(Isa::avx2)) return Isa::avx2;
#endif
  return Isa::scalar;
}

Isa initial_isa() {
  if (const char* env = std::getenv("LVSEG_ISA"); env != nullptr && *env != '\0') {
    const Isa requested = parse_isa(env);
    if (!isa_supported(requested))
      throw ConfigError(std::string("LVSEG_ISA=") + env + " is not supported by this CPU");
    return requested;
  }
  return detect_best();
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

const detail::KernelTable& table(Isa isa) {
  switch (isa) {
#if defined(LVSEG_HAVE_X86_KERNELS)
    case Isa::avx2:
      return detail::avx2_table();
    case Isa::avx512:
      return detail::avx512_table();
#endif
    default:
      return detail::scalar_table();
  }
}

const detail::KernelTable& checked_table(Isa isa) {
  if (!isa_supported(isa)) throw ConfigError("ISA " + std::string(isa_name(isa)) + " not supported by this CPU");
  return table(isa);
}

template <class T>
T* pack_buffer(std::size_t elements) {
  thread_local std::vector<T> buffer;
  if (buffer.size() < elements) buffer.resize(elements);
  return buffer.data();
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::avx512:
      return "avx512";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "avx512") return Isa::avx512;
  throw ConfigError("unknown ISA '" + std::string(name) + "' (expected scalar, avx2 or avx512)");
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
#if defined(LVSEG_HAVE_X86_KERNELS)
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
      return __builtin_cpu_supports("avx512f");
#endif
    default:
      return false;
  }
}

std::vector<Isa> supported_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512})
    if (isa_supported(isa)) out.push_back(isa);
  return out;
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  checked_table(isa);
  active_slot().store(isa, std::memory_order_relaxed);
}

void gemm(Isa isa, const GemmArgs<float>& args) {
  const auto& t = checked_table(isa);
  t.gemm_f32(args, pack_buffer<float>(args.k * t.panel_f32));
}

void gemm(Isa isa, const GemmArgs<double>& args) {
  const auto& t = checked_table(isa);
  t.gemm_f64(args, pack_buffer<double>(args.k * t.panel_f64));
}

void gemm(const GemmArgs<float>& args) {
  const auto& t = table(active_isa());
  t.gemm_f32(args, pack_buffer<float>(args.k * t.panel_f32));
}

void gemm(const GemmArgs<double>& args) {
  const auto& t = table(active_isa());
  t.gemm_f64(args, pack_buffer<double>(args.k * t.panel_f64));
}

void sgd_momentum(Isa isa, std::span<double> weights, std::span<double> velocity, std::span<const double> grad,
                  double lr, double momentum) {
  if (weights.size() != velocity.size() || weights.size() != grad.size())
    throw ShapeError("sgd_momentum: span sizes differ");
  checked_table(isa).sgd_momentum(weights.data(), velocity.data(), grad.data(), weights.size(), lr, momentum);
}

void sgd_momentum(std::span<double> weights, std::span<double> velocity, std::span<const double> grad, double lr,
                  double momentum) {
  sgd_momentum(active_isa(), weights, velocity, grad, lr, momentum);
}

void relu(Isa isa, std::span<float> x) {
  checked_table(isa).relu_f32(x.data(), x.size());
}

void relu(Isa isa, std::span<double> x) {
  checked_table(isa).relu_f64(x.data(), x.size());
}

void relu(std::span<float> x) {
  table(active_isa()).relu_f32(x.data(), x.size());
}

void relu(std::span<double> x) {
  table(active_isa()).relu_f64(x.data(), x.size());
}

}  // namespace lvseg::kernels
