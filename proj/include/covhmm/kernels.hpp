#pragma once

// Data-parallel inner loops shared by inference and training. Every kernel
// has a portable scalar reference and, on x86-64, an AVX2+FMA variant. The
// variant is chosen once at runtime from CPUID; tests can pin either one.

#include <span>
#include <string_view>

namespace covhmm::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  // out[t] = log N(x[t]; mu, sigma)
  void (*gaussian_log_density)(std::span<const double> x, double mu, double sigma,
                               std::span<double> out);
  // out[t] = exp(x[t] - shift[t])
  void (*exp_shifted)(std::span<const double> x, std::span<const double> shift,
                      std::span<double> out);
  // sum_t w[t] * x[t]
  double (*weighted_sum)(std::span<const double> w, std::span<const double> x);
  // sum_t w[t] * (x[t] - center)^2
  double (*weighted_sq_dev)(std::span<const double> w, std::span<const double> x,
                            double center);
};

bool isa_supported(Isa isa) noexcept;
Isa detected_isa() noexcept;
Isa active_isa() noexcept;

// Pins the dispatcher to `isa`. Throws InvalidArgument if the CPU or the
// build lacks it.
void force_isa(Isa isa);

std::string_view isa_name(Isa isa) noexcept;

// Direct access to one variant, bypassing the dispatcher.
const KernelTable& table(Isa isa);

const KernelTable& active() noexcept;

inline void gaussian_log_density(std::span<const double> x, double mu, double sigma,
                                 std::span<double> out) {
  active().gaussian_log_density(x, mu, sigma, out);
}
inline void exp_shifted(std::span<const double> x, std::span<const double> shift,
                        std::span<double> out) {
  active().exp_shifted(x, shift, out);
}
inline double weighted_sum(std::span<const double> w, std::span<const double> x) {
  return active().weighted_sum(w, x);
}
inline double weighted_sq_dev(std::span<const double> w, std::span<const double> x,
                              double center) {
  return active().weighted_sq_dev(w, x, center);
}

namespace detail {
extern const KernelTable kScalarTable;
#if defined(COVHMM_BUILD_AVX2)
extern const KernelTable kAvx2Table;
#endif
}  // namespace detail

}  // namespace covhmm::kernels
