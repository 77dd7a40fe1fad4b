#include "covhmm/covariates.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "covhmm/error.hpp"

namespace covhmm {

void CovariateVector::validate() const {
  if (!std::isfinite(age) || age < 0.0) throw DataError("covariate age must be finite and >= 0");
  if (!std::isfinite(surgery_hours) || surgery_hours < 0.0) {
    throw DataError("covariate surgery_hours must be finite and >= 0");
  }
}

InitCovariates init_covariates(const CovariateVector& z) {
  InitCovariates out{};
  out[0] = z.gender ? 1.0 : 0.0;
  out[1] = z.age;
  out[2] = z.surgery_hours;
  for (std::size_t f = 0; f < kComorbidityCount; ++f) out[3 + f] = z.comorbidities[f] ? 1.0 : 0.0;
  return out;
}

TransCovariates trans_covariates(const CovariateVector& z) {
  return {z.gender ? 1.0 : 0.0, z.age, z.surgery_hours};
}

Standardization Standardization::identity() {
  Standardization s;
  s.mean.fill(0.0);
  s.sd.fill(1.0);
  return s;
}

Standardization Standardization::fit(std::span<const CovariateVector> rows) {
  Standardization s = identity();
  if (rows.empty()) return s;
  // Only the continuous columns (age, surgery_hours) are scaled.
  for (std::size_t col : {std::size_t{1}, std::size_t{2}}) {
    double mean = 0.0;
    for (const auto& z : rows) mean += init_covariates(z)[col];
    mean /= static_cast<double>(rows.size());
    double ss = 0.0;
    for (const auto& z : rows) {
      const double d = init_covariates(z)[col] - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(rows.size()));
    s.mean[col] = mean;
    s.sd[col] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

InitCovariates Standardization::apply(const CovariateVector& z) const {
  InitCovariates x = init_covariates(z);
  for (std::size_t c = 0; c < x.size(); ++c) x[c] = (x[c] - mean[c]) / sd[c];
  return x;
}

LogitBlock::LogitBlock(std::size_t n_categories, std::size_t dim)
    : n_categories_(n_categories),
      dim_(dim),
      intercepts_(n_categories > 0 ? n_categories - 1 : 0, 0.0),
      coefficients_(n_categories > 0 ? (n_categories - 1) * dim : 0, 0.0) {
  if (n_categories < 2) throw InvalidArgument("logit block needs at least two categories");
}

std::vector<double> LogitBlock::to_vector() const {
  std::vector<double> theta;
  theta.reserve(n_params());
  for (std::size_t c = 1; c < n_categories_; ++c) {
    theta.push_back(intercept(c));
    for (std::size_t d = 0; d < dim_; ++d) theta.push_back(coef(c, d));
  }
  return theta;
}

LogitBlock LogitBlock::from_vector(std::size_t n_categories, std::size_t dim,
                                   std::span<const double> theta) {
  LogitBlock b(n_categories, dim);
  if (theta.size() != b.n_params()) throw InvalidArgument("logit parameter vector has wrong length");
  std::size_t p = 0;
  for (std::size_t c = 1; c < n_categories; ++c) {
    b.intercept(c) = theta[p++];
    for (std::size_t d = 0; d < dim; ++d) b.coef(c, d) = theta[p++];
  }
  return b;
}

void LogitBlock::predictors(std::span<const double> z, std::span<double> eta) const {
  if (z.size() != dim_) {
    throw InvalidArgument("covariate dimension " + std::to_string(z.size()) +
                          " does not match logit block dimension " + std::to_string(dim_));
  }
  eta[0] = 0.0;
  for (std::size_t c = 1; c < n_categories_; ++c) {
    double e = intercept(c);
    const double* row = coefficients_.data() + (c - 1) * dim_;
    for (std::size_t d = 0; d < dim_; ++d) e += row[d] * z[d];
    eta[c] = e;
  }
}

void LogitBlock::validate() const {
  if (n_categories_ < 2) throw InvalidArgument("logit block needs at least two categories");
  if (intercepts_.size() != n_categories_ - 1 || coefficients_.size() != (n_categories_ - 1) * dim_) {
    throw InvalidArgument("logit block storage is inconsistent with its shape");
  }
  for (double v : intercepts_) {
    if (!std::isfinite(v)) throw InvalidArgument("logit block: non-finite intercept");
  }
  for (double v : coefficients_) {
    if (!std::isfinite(v)) throw InvalidArgument("logit block: non-finite coefficient");
  }
}

namespace {

// Softmax with the max subtracted; writes probabilities into p and returns
// the log normaliser.
double softmax(std::span<const double> eta, std::span<double> p) {
  const double m = *std::max_element(eta.begin(), eta.end());
  double s = 0.0;
  for (std::size_t k = 0; k < eta.size(); ++k) {
    p[k] = std::exp(eta[k] - m);
    s += p[k];
  }
  for (double& v : p) v /= s;
  return m + std::log(s);
}

}  // namespace

StateDistribution logit_probs(const LogitBlock& block, std::span<const double> z) {
  std::vector<double> eta(block.n_categories());
  block.predictors(z, eta);
  StateDistribution out{std::vector<double>(eta.size())};
  softmax(eta, out.probs);
  return out;
}

TransitionMatrix transition_matrix_at(std::span<const LogitBlock> rows, std::span<const double> z) {
  const std::size_t k = rows.size();
  TransitionMatrix m(k);
  std::vector<double> eta(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (rows[i].n_categories() != k) {
      throw InvalidArgument("transition row block has " + std::to_string(rows[i].n_categories()) +
                            " categories, expected " + std::to_string(k));
    }
    rows[i].predictors(z, eta);
    softmax(eta, m.row(i));
  }
  return m;
}

void WeightedCategoricalData::add_row(std::span<const double> z, std::span<const double> weights) {
  if (z.size() != dim_ || weights.size() != n_categories_) {
    throw InvalidArgument("weighted row has wrong covariate or category count");
  }
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw DataError("category weights must be finite and >= 0");
  }
  x_.insert(x_.end(), z.begin(), z.end());
  w_.insert(w_.end(), weights.begin(), weights.end());
}

double WeightedCategoricalData::total_weight() const noexcept {
  double s = 0.0;
  for (double w : w_) s += w;
  return s;
}

namespace {

struct LogitEval {
  double objective = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

LogitEval evaluate(const WeightedCategoricalData& data, const LogitBlock& block, double l2,
                   bool want_grad, bool want_hess) {
  const std::size_t k = block.n_categories();
  const std::size_t dim = block.dim();
  const std::size_t stride = dim + 1;
  const std::size_t np = block.n_params();
  LogitEval ev;
  if (want_grad) ev.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
  if (want_hess) ev.hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(np));

  std::vector<double> eta(k), p(k), xt(stride);
  Eigen::MatrixXd outer;
  if (want_hess) outer.resize(static_cast<Eigen::Index>(stride), static_cast<Eigen::Index>(stride));

  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    const auto z = data.x(r);
    const auto w = data.w(r);
    double total = 0.0;
    for (double v : w) total += v;
    if (total == 0.0) continue;
    block.predictors(z, eta);
    const double lse = softmax(eta, p);
    for (std::size_t c = 0; c < k; ++c) {
      if (w[c] != 0.0) ev.objective += w[c] * (eta[c] - lse);
    }
    if (!want_grad && !want_hess) continue;
    xt[0] = 1.0;
    std::copy(z.begin(), z.end(), xt.begin() + 1);
    if (want_grad) {
      for (std::size_t c = 1; c < k; ++c) {
        const double resid = w[c] - total * p[c];
        for (std::size_t a = 0; a < stride; ++a) {
          ev.gradient[static_cast<Eigen::Index>((c - 1) * stride + a)] += resid * xt[a];
        }
      }
    }
    if (want_hess) {
      for (std::size_t a = 0; a < stride; ++a) {
        for (std::size_t b = 0; b < stride; ++b) {
          outer(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = xt[a] * xt[b];
        }
      }
      for (std::size_t c = 1; c < k; ++c) {
        for (std::size_t c2 = 1; c2 < k; ++c2) {
          const double cov = (c == c2 ? p[c] : 0.0) - p[c] * p[c2];
          ev.hessian.block(static_cast<Eigen::Index>((c - 1) * stride),
                           static_cast<Eigen::Index>((c2 - 1) * stride),
                           static_cast<Eigen::Index>(stride), static_cast<Eigen::Index>(stride)) -=
              (total * cov) * outer;
        }
      }
    }
  }

  double penalty = 0.0;
  for (double v : block.coefficients()) penalty += v * v;
  ev.objective -= 0.5 * l2 * penalty;
  if (want_grad || want_hess) {
    for (std::size_t c = 1; c < k; ++c) {
      for (std::size_t d = 0; d < dim; ++d) {
        const auto idx = static_cast<Eigen::Index>((c - 1) * stride + 1 + d);
        if (want_grad) ev.gradient[idx] -= l2 * block.coef(c, d);
        if (want_hess) ev.hessian(idx, idx) -= l2;
      }
    }
  }
  return ev;
}

void check_shapes(const WeightedCategoricalData& data, const LogitBlock& block) {
  if (data.n_categories() != block.n_categories() || data.dim() != block.dim()) {
    throw InvalidArgument("weighted data shape does not match logit block");
  }
}

}  // namespace

double logit_objective(const WeightedCategoricalData& data, const LogitBlock& block, double l2) {
  check_shapes(data, block);
  return evaluate(data, block, l2, false, false).objective;
}

std::vector<double> logit_gradient(const WeightedCategoricalData& data, const LogitBlock& block,
                                   double l2) {
  check_shapes(data, block);
  const auto ev = evaluate(data, block, l2, true, false);
  return {ev.gradient.data(), ev.gradient.data() + ev.gradient.size()};
}

std::vector<double> logit_hessian(const WeightedCategoricalData& data, const LogitBlock& block,
                                  double l2) {
  check_shapes(data, block);
  const auto ev = evaluate(data, block, l2, false, true);
  std::vector<double> out(static_cast<std::size_t>(ev.hessian.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      out.data(), ev.hessian.rows(), ev.hessian.cols()) = ev.hessian;
  return out;
}

LogitFit fit_weighted_multinomial_logit(const WeightedCategoricalData& data, const LogitBlock& init,
                                        double l2, const LogitFitOptions& options) {
  check_shapes(data, init);
  init.validate();
  if (!(l2 >= 0.0) || !std::isfinite(l2)) throw InvalidArgument("l2 penalty must be finite and >= 0");
  if (data.n_rows() == 0 || !(data.total_weight() > 0.0)) {
    throw DataError("weighted logit fit needs at least one row with positive weight");
  }

  const std::size_t k = init.n_categories();
  const std::size_t dim = init.dim();
  LogitFit fit;
  fit.block = init;
  LogitEval ev = evaluate(data, fit.block, l2, true, true);
  if (!std::isfinite(ev.objective)) throw DataError("weighted logit objective is not finite");
  fit.initial_objective = ev.objective;

  Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(
      fit.block.to_vector().data(), static_cast<Eigen::Index>(init.n_params()));
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const double gnorm = ev.gradient.size() ? ev.gradient.cwiseAbs().maxCoeff() : 0.0;
    if (gnorm < options.gradient_tol) {
      fit.converged = true;
      break;
    }
    fit.iterations = iter + 1;

    Eigen::VectorXd step;
    Eigen::LLT<Eigen::MatrixXd> llt(-ev.hessian);
    if (llt.info() == Eigen::Success) {
      step = llt.solve(ev.gradient);
    }
    if (step.size() == 0 || !step.allFinite()) {
      step = ev.gradient;
    }

    bool improved = false;
    double scale = 1.0;
    for (int halving = 0; halving < 60; ++halving, scale *= 0.5) {
      const Eigen::VectorXd candidate = theta + scale * step;
      const LogitBlock trial = LogitBlock::from_vector(
          k, dim, std::span<const double>(candidate.data(), static_cast<std::size_t>(candidate.size())));
      const double obj = evaluate(data, trial, l2, false, false).objective;
      if (std::isfinite(obj) && obj > ev.objective) {
        theta = candidate;
        fit.block = trial;
        improved = true;
        break;
      }
    }
    if (!improved) break;
    ev = evaluate(data, fit.block, l2, true, true);
  }

  fit.objective = ev.objective;
  fit.gradient_norm = ev.gradient.size() ? ev.gradient.cwiseAbs().maxCoeff() : 0.0;
  if (fit.gradient_norm < options.gradient_tol) fit.converged = true;
  return fit;
}

}  // namespace covhmm
