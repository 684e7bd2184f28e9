#include "backends.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace stmc::kernels {

namespace {

constexpr Table kScalar{scalar::linear_predictor, scalar::negbin_cells, scalar::low_rank_backprop,
                        scalar::exp_array, scalar::log_array};
#ifdef STMC_BUILD_AVX2
constexpr Table kAvx2{avx2::linear_predictor, avx2::negbin_cells, avx2::low_rank_backprop, avx2::exp_array,
                      avx2::log_array};
#endif

bool cpu_has_avx2() {
#if defined(STMC_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend detect() {
  if (const char* env = std::getenv("STMC_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Backend::Scalar;
    if (v == "avx2" && cpu_has_avx2()) return Backend::Avx2;
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

bool available(Backend b) { return b == Backend::Scalar || (b == Backend::Avx2 && cpu_has_avx2()); }

void set_backend(Backend b) {
  if (!available(b)) throw std::invalid_argument("kernel backend " + std::string(backend_name(b)) + " unavailable");
  current().store(b);
}

Backend active_backend() { return current().load(); }

std::string_view backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

const Table& table(Backend b) {
#ifdef STMC_BUILD_AVX2
  if (b == Backend::Avx2) return kAvx2;
#endif
  (void)b;
  return kScalar;
}

const Table& table() { return table(active_backend()); }

}  // namespace stmc::kernels
