#pragma once

// Multinomial-logit links from patient covariates to initial-state and
// transition probabilities. Category 0 is the base category and carries no
// parameters, so a block for K categories stores K-1 linear predictors.

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "covhmm/hmm.hpp"

namespace covhmm {

inline constexpr std::size_t kComorbidityCount = 8;
inline constexpr std::size_t kInitCovariateCount = 3 + kComorbidityCount;
inline constexpr std::size_t kTransCovariateCount = 3;

// Column names in the order init_covariates() returns them. The transition
// model uses the first kTransCovariateCount of these.
inline constexpr std::array<std::string_view, kInitCovariateCount> kCovariateNames = {
    "gender", "age",     "surgery_hours", "tumor",     "htn",      "arrhythmia",
    "fluid_electrolyte", "valvular",      "liver",     "pulmonary", "diabetes"};

struct CovariateVector {
  double age = 0.0;
  bool gender = false;
  double surgery_hours = 0.0;
  // tumor, htn, arrhythmia, fluid_electrolyte, valvular, liver, pulmonary,
  // diabetes
  std::array<bool, kComorbidityCount> comorbidities{};

  void validate() const;
  bool operator==(const CovariateVector&) const = default;
};

using InitCovariates = std::array<double, kInitCovariateCount>;
using TransCovariates = std::array<double, kTransCovariateCount>;

InitCovariates init_covariates(const CovariateVector& z);
TransCovariates trans_covariates(const CovariateVector& z);

// z-scoring for the continuous covariates (age, surgery hours); binary
// columns keep mean 0 / sd 1 so they pass through unchanged.
struct Standardization {
  std::array<double, kInitCovariateCount> mean{};
  std::array<double, kInitCovariateCount> sd{};

  static Standardization identity();
  static Standardization fit(std::span<const CovariateVector> rows);

  InitCovariates apply(const CovariateVector& z) const;
  bool operator==(const Standardization&) const = default;
};

class LogitBlock {
 public:
  LogitBlock() = default;
  // All-zero block: uniform probabilities for every z.
  LogitBlock(std::size_t n_categories, std::size_t dim);

  std::size_t n_categories() const noexcept { return n_categories_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_params() const noexcept { return (n_categories_ - 1) * (dim_ + 1); }

  // Category index c is 1-based among the non-base categories (1..K-1).
  double& intercept(std::size_t c) { return intercepts_[c - 1]; }
  double intercept(std::size_t c) const { return intercepts_[c - 1]; }
  double& coef(std::size_t c, std::size_t d) { return coefficients_[(c - 1) * dim_ + d]; }
  double coef(std::size_t c, std::size_t d) const { return coefficients_[(c - 1) * dim_ + d]; }

  std::span<const double> intercepts() const noexcept { return intercepts_; }
  std::span<const double> coefficients() const noexcept { return coefficients_; }

  // Flat parameter layout: for each non-base category, its intercept then
  // its dim() coefficients.
  std::vector<double> to_vector() const;
  static LogitBlock from_vector(std::size_t n_categories, std::size_t dim,
                                std::span<const double> theta);

  // Linear predictors eta (length K, eta[0] = 0).
  void predictors(std::span<const double> z, std::span<double> eta) const;

  void validate() const;
  bool operator==(const LogitBlock&) const = default;

 private:
  std::size_t n_categories_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> intercepts_;
  std::vector<double> coefficients_;
};

StateDistribution logit_probs(const LogitBlock& block, std::span<const double> z);

// Row i of the result is logit_probs(rows[i], z).
TransitionMatrix transition_matrix_at(std::span<const LogitBlock> rows, std::span<const double> z);

// Expected category counts per covariate row, as produced by an E-step.
class WeightedCategoricalData {
 public:
  WeightedCategoricalData(std::size_t n_categories, std::size_t dim)
      : n_categories_(n_categories), dim_(dim) {}

  void add_row(std::span<const double> z, std::span<const double> weights);

  std::size_t n_rows() const noexcept { return w_.size() / n_categories_; }
  std::size_t n_categories() const noexcept { return n_categories_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> x(std::size_t r) const { return {x_.data() + r * dim_, dim_}; }
  std::span<const double> w(std::size_t r) const { return {w_.data() + r * n_categories_, n_categories_}; }
  double total_weight() const noexcept;

 private:
  std::size_t n_categories_;
  std::size_t dim_;
  std::vector<double> x_;
  std::vector<double> w_;
};

// Penalised weighted log-likelihood
//   sum_r sum_k w_rk log p_k(z_r) - (l2 / 2) * ||coefficients||^2
// and its derivatives in the to_vector() layout. Intercepts are not
// penalised.
double logit_objective(const WeightedCategoricalData& data, const LogitBlock& block, double l2);
std::vector<double> logit_gradient(const WeightedCategoricalData& data, const LogitBlock& block,
                                   double l2);
// Row-major n_params x n_params.
std::vector<double> logit_hessian(const WeightedCategoricalData& data, const LogitBlock& block,
                                  double l2);

struct LogitFit {
  LogitBlock block;
  double objective = 0.0;
  double initial_objective = 0.0;
  double gradient_norm = 0.0;  // infinity norm at the returned point
  int iterations = 0;
  bool converged = false;
};

struct LogitFitOptions {
  double gradient_tol = 1e-6;
  int max_iterations = 100;
};

// Newton-Raphson with step halving, falling back to a gradient step when
// the Hessian is not negative definite. The returned objective is never
// below the objective at `init`.
LogitFit fit_weighted_multinomial_logit(const WeightedCategoricalData& data, const LogitBlock& init,
                                        double l2, const LogitFitOptions& options = {});

}  // namespace covhmm
