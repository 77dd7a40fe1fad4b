#include <cmath>
#include <numbers>

#include "covhmm/kernels.hpp"

namespace covhmm::kernels {
namespace {

void gaussian_log_density_scalar(std::span<const double> x, double mu, double sigma,
                                 std::span<double> out) {
  const double inv = 1.0 / sigma;
  const double offset = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double d = (x[t] - mu) * inv;
    out[t] = offset - 0.5 * (d * d);
  }
}

void exp_shifted_scalar(std::span<const double> x, std::span<const double> shift,
                        std::span<double> out) {
  for (std::size_t t = 0; t < x.size(); ++t) out[t] = std::exp(x[t] - shift[t]);
}

double weighted_sum_scalar(std::span<const double> w, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t t = 0; t < w.size(); ++t) s += w[t] * x[t];
  return s;
}

double weighted_sq_dev_scalar(std::span<const double> w, std::span<const double> x,
                              double center) {
  double s = 0.0;
  for (std::size_t t = 0; t < w.size(); ++t) {
    const double d = x[t] - center;
    s += w[t] * (d * d);
  }
  return s;
}

}  // namespace

namespace detail {
const KernelTable kScalarTable{
    gaussian_log_density_scalar,
    exp_shifted_scalar,
    weighted_sum_scalar,
    weighted_sq_dev_scalar,
};
}  // namespace detail

}  // namespace covhmm::kernels
