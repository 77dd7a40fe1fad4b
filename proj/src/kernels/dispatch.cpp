#include <atomic>

#include "covhmm/error.hpp"
#include "covhmm/kernels.hpp"

namespace covhmm::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(COVHMM_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<Isa>& active_slot() noexcept {
  static std::atomic<Isa> slot{detected_isa()};
  return slot;
}

}  // namespace

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2: {
      static const bool ok = cpu_has_avx2();
      return ok;
    }
  }
  return false;
}

Isa detected_isa() noexcept { return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar; }

Isa active_isa() noexcept { return active_slot().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw InvalidArgument("kernel ISA '" + std::string(isa_name(isa)) +
                          "' is not available on this CPU/build");
  }
  active_slot().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& table(Isa isa) {
  if (!isa_supported(isa)) {
    throw InvalidArgument("kernel ISA '" + std::string(isa_name(isa)) + "' is not available");
  }
#if defined(COVHMM_BUILD_AVX2)
  if (isa == Isa::Avx2) return detail::kAvx2Table;
#endif
  return detail::kScalarTable;
}

const KernelTable& active() noexcept {
#if defined(COVHMM_BUILD_AVX2)
  if (active_isa() == Isa::Avx2) return detail::kAvx2Table;
#endif
  return detail::kScalarTable;
}

}  // namespace covhmm::kernels
