#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mogen/kernels/kernels.hpp"

namespace mogen::kern {

template <typename T>
const KernelTable<T>& scalar_table();

#if defined(MOGEN_HAVE_AVX2)
template <typename T>
const KernelTable<T>& avx2_table();
#endif

#if defined(__aarch64__)
template <typename T>
const KernelTable<T>& neon_table();
#endif

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

Isa detect_best_isa() {
#if defined(__aarch64__)
  return Isa::neon;
#elif defined(MOGEN_HAVE_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Isa::avx2;
  return Isa::scalar;
#else
  return Isa::scalar;
#endif
}

namespace {

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
  return isa == detect_best_isa();
}

Isa initial_isa() {
  if (const char* env = std::getenv("MOGEN_KERNELS")) {
    const std::string s(env);
    Isa want;
    if (s == "scalar") want = Isa::scalar;
    else if (s == "avx2") want = Isa::avx2;
    else if (s == "neon") want = Isa::neon;
    else throw std::invalid_argument("MOGEN_KERNELS: unknown backend '" + s + "'");
    if (!isa_supported(want))
      throw std::invalid_argument(std::string("MOGEN_KERNELS: backend '") + s +
                                  "' not supported on this CPU");
    return want;
  }
  return detect_best_isa();
}

Isa& active_isa_slot() {
  static Isa isa = initial_isa();
  return isa;
}

}  // namespace

Isa active_isa() { return active_isa_slot(); }

void force_isa(Isa isa) {
  if (!isa_supported(isa))
    throw std::invalid_argument(std::string("force_isa: backend '") +
                                isa_name(isa) + "' not supported on this CPU");
  active_isa_slot() = isa;
}

template <typename T>
const KernelTable<T>& table_for(Isa isa) {
  switch (isa) {
#if defined(MOGEN_HAVE_AVX2)
    case Isa::avx2: return avx2_table<T>();
#endif
#if defined(__aarch64__)
    case Isa::neon: return neon_table<T>();
#endif
    default: return scalar_table<T>();
  }
}

template <typename T>
const KernelTable<T>& table() {
  return table_for<T>(active_isa());
}

template const KernelTable<float>& table_for<float>(Isa);
template const KernelTable<double>& table_for<double>(Isa);
template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace mogen::kern
