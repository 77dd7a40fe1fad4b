// Built with -mavx2 -mfma. Nothing here may run before the dispatcher has
// confirmed CPU support.

#include <immintrin.h>

#include <cmath>
#include <numbers>

#include "covhmm/kernels.hpp"

namespace covhmm::kernels {
namespace {

constexpr std::size_t kLanes = 4;

// Cephes-style exp: Cody-Waite reduction by ln 2 and a (2,3) Pade rational
// on the remainder. Accurate to about 1 ulp over the normal range.
inline __m256d exp_pd(__m256d x) {
  const __m256d kHi = _mm256_set1_pd(709.78);
  const __m256d kLo = _mm256_set1_pd(-745.2);
  const __m256d over = _mm256_cmp_pd(x, kHi, _CMP_GT_OQ);
  const __m256d under = _mm256_cmp_pd(x, kLo, _CMP_LT_OQ);
  const __m256d nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  x = _mm256_min_pd(_mm256_max_pd(x, kLo), kHi);

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125E-1), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212E-6), r);

  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d p = _mm256_set1_pd(1.26177193074810590878E-4);
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(3.02994407707441961300E-2));
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(9.99999999999999999910E-1));
  p = _mm256_mul_pd(p, r);
  __m256d q = _mm256_set1_pd(3.00198505138664455042E-6);
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.52448340349684104192E-3));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766E-1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000009E0));
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // Scale by 2^n as 2^(n/2) * 2^(n - n/2) so both factors stay normal even
  // when n is 1024 or the result is subnormal.
  const __m128i n32 = _mm256_cvtpd_epi32(n);
  const __m128i half = _mm_srai_epi32(n32, 1);
  const __m128i rest = _mm_sub_epi32(n32, half);
  const __m256i bias = _mm256_set1_epi64x(1023);
  const __m256d f1 = _mm256_castsi256_pd(
      _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(half), bias), 52));
  const __m256d f2 = _mm256_castsi256_pd(
      _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(rest), bias), 52));
  __m256d result = _mm256_mul_pd(_mm256_mul_pd(e, f1), f2);

  result = _mm256_blendv_pd(result, _mm256_setzero_pd(), under);
  result = _mm256_blendv_pd(result, _mm256_set1_pd(HUGE_VAL), over);
  result = _mm256_blendv_pd(result, _mm256_set1_pd(NAN), nan);
  return result;
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void gaussian_log_density_avx2(std::span<const double> x, double mu, double sigma,
                               std::span<double> out) {
  const double inv = 1.0 / sigma;
  const double offset = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  const __m256d vmu = _mm256_set1_pd(mu);
  const __m256d vinv = _mm256_set1_pd(inv);
  const __m256d voff = _mm256_set1_pd(offset);
  const __m256d vhalf = _mm256_set1_pd(0.5);
  const std::size_t n = x.size();
  std::size_t t = 0;
  for (; t + kLanes <= n; t += kLanes) {
    const __m256d d = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x.data() + t), vmu), vinv);
    _mm256_storeu_pd(out.data() + t, _mm256_fnmadd_pd(vhalf, _mm256_mul_pd(d, d), voff));
  }
  for (; t < n; ++t) {
    const double d = (x[t] - mu) * inv;
    out[t] = offset - 0.5 * (d * d);
  }
}

void exp_shifted_avx2(std::span<const double> x, std::span<const double> shift,
                      std::span<double> out) {
  const std::size_t n = x.size();
  std::size_t t = 0;
  for (; t + kLanes <= n; t += kLanes) {
    const __m256d v =
        _mm256_sub_pd(_mm256_loadu_pd(x.data() + t), _mm256_loadu_pd(shift.data() + t));
    _mm256_storeu_pd(out.data() + t, exp_pd(v));
  }
  if (t < n) {
    alignas(32) double buf[kLanes] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t k = 0; t + k < n; ++k) buf[k] = x[t + k] - shift[t + k];
    _mm256_store_pd(buf, exp_pd(_mm256_load_pd(buf)));
    for (std::size_t k = 0; t + k < n; ++k) out[t + k] = buf[k];
  }
}

double weighted_sum_avx2(std::span<const double> w, std::span<const double> x) {
  const std::size_t n = w.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t t = 0;
  for (; t + 2 * kLanes <= n; t += 2 * kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(w.data() + t), _mm256_loadu_pd(x.data() + t), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(w.data() + t + kLanes),
                           _mm256_loadu_pd(x.data() + t + kLanes), acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; t < n; ++t) s += w[t] * x[t];
  return s;
}

double weighted_sq_dev_avx2(std::span<const double> w, std::span<const double> x,
                            double center) {
  const std::size_t n = w.size();
  const __m256d c = _mm256_set1_pd(center);
  __m256d acc = _mm256_setzero_pd();
  std::size_t t = 0;
  for (; t + kLanes <= n; t += kLanes) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x.data() + t), c);
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w.data() + t), _mm256_mul_pd(d, d), acc);
  }
  double s = hsum(acc);
  for (; t < n; ++t) {
    const double d = x[t] - center;
    s += w[t] * (d * d);
  }
  return s;
}

}  // namespace

namespace detail {
const KernelTable kAvx2Table{
    gaussian_log_density_avx2,
    exp_shifted_avx2,
    weighted_sum_avx2,
    weighted_sq_dev_avx2,
};
}  // namespace detail

}  // namespace covhmm::kernels
