#include <cstdlib>
#include <string>

#include "mavos/error.hpp"
#include "mavos/kernels.hpp"

namespace mavos::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& table(Isa isa) {
  static const KernelTable scalar = detail::make_scalar_table();
  if (isa == Isa::kScalar) return scalar;
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_has_avx2()) {
    static const KernelTable avx2 = detail::make_avx2_table();
    return avx2;
  }
#endif
  throw UsageError("AVX2 kernels requested but not supported by this CPU");
}

const KernelTable& active() {
  static const KernelTable& chosen = [] () -> const KernelTable& {
    const char* env = std::getenv("MAVOS_ISA");
    if (env && std::string(env) == "scalar") return table(Isa::kScalar);
    return cpu_has_avx2() ? table(Isa::kAvx2) : table(Isa::kScalar);
  }();
  return chosen;
}

}  // namespace mavos::kernels
