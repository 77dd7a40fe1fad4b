#include "covhmm/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "covhmm/error.hpp"
#include "covhmm/kernels.hpp"

namespace covhmm {
namespace {

constexpr double kStochasticTol = 1e-12;

void check_probability_vector(std::span<const double> p, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgument(std::string(what) + ": entry outside [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kStochasticTol) {
    throw InvalidArgument(std::string(what) + ": entries sum to " + std::to_string(sum));
  }
}

void check_model(const ObservedSequence& seq, const StateDistribution& init,
                 const TransitionMatrix& trans, const EmissionParams& emit) {
  seq.validate();
  const std::size_t k = emit.n_states();
  if (k == 0 || init.size() != k || trans.n_states() != k) {
    throw InvalidArgument("state count mismatch between init, transition and emission");
  }
}

double log_density_one(const EmissionParams& emit, std::size_t j, double x) {
  const double d = (x - emit.mu[j]) / emit.sigma[j];
  return -std::log(emit.sigma[j]) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * (d * d);
}

}  // namespace

void EmissionParams::validate() const {
  if (mu.empty() || mu.size() != sigma.size()) {
    throw InvalidArgument("emission parameters: mu and sigma must be nonempty and equal length");
  }
  for (std::size_t j = 0; j < mu.size(); ++j) {
    if (!std::isfinite(mu[j])) throw InvalidArgument("emission parameters: non-finite mean");
    if (!std::isfinite(sigma[j]) || sigma[j] < kSigmaFloor) {
      throw InvalidArgument("emission parameters: sigma below floor for state " +
                            std::to_string(j + 1));
    }
  }
}

void StateDistribution::validate() const { check_probability_vector(probs, "state distribution"); }

TransitionMatrix::TransitionMatrix(std::size_t n_states, std::vector<double> row_major)
    : n_(n_states), p_(std::move(row_major)) {
  if (p_.size() != n_ * n_) throw InvalidArgument("transition matrix: wrong entry count");
  validate();
}

void TransitionMatrix::validate() const {
  for (std::size_t i = 0; i < n_; ++i) check_probability_vector(row(i), "transition row");
}

std::size_t ObservedSequence::n_observed() const noexcept {
  return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), true));
}

void ObservedSequence::validate() const {
  if (values.empty()) throw DataError("sequence is empty");
  if (values.size() > kMaxBins) {
    throw DataError("sequence has " + std::to_string(values.size()) + " bins; maximum is " +
                    std::to_string(kMaxBins));
  }
  if (observed.size() != values.size()) throw InvalidArgument("sequence mask length mismatch");
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (observed[t] && !std::isfinite(values[t])) {
      throw DataError("non-finite observed value at bin " + std::to_string(t));
    }
  }
}

ObservedSequence ObservedSequence::prefix(std::size_t length) const {
  length = std::min(length, values.size());
  return {std::vector<double>(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(length)),
          std::vector<bool>(observed.begin(), observed.begin() + static_cast<std::ptrdiff_t>(length))};
}

ObservedSequence ObservedSequence::fully_observed(std::vector<double> values) {
  std::vector<bool> mask(values.size(), true);
  return {std::move(values), std::move(mask)};
}

EmissionTable compute_emissions(const ObservedSequence& seq, const EmissionParams& emit) {
  emit.validate();
  const std::size_t k = emit.n_states();
  const std::size_t n = seq.size();
  EmissionTable table;
  table.n_states = k;
  table.length = n;
  table.log_density.assign(k * n, 0.0);
  table.scaled.assign(k * n, 1.0);
  table.shift.assign(n, -std::numeric_limits<double>::infinity());

  std::vector<double> x(seq.values);
  for (std::size_t t = 0; t < n; ++t) {
    if (!seq.observed[t]) x[t] = 0.0;
  }
  for (std::size_t j = 0; j < k; ++j) {
    std::span<double> out(table.log_density.data() + j * n, n);
    kernels::gaussian_log_density(x, emit.mu[j], emit.sigma[j], out);
    for (std::size_t t = 0; t < n; ++t) {
      if (!seq.observed[t]) out[t] = 0.0;
      table.shift[t] = std::max(table.shift[t], out[t]);
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    kernels::exp_shifted(std::span<const double>(table.log_density.data() + j * n, n), table.shift,
                         std::span<double>(table.scaled.data() + j * n, n));
  }
  return table;
}

double emission_density(const EmissionParams& emit, std::size_t state, double value) {
  if (state >= emit.n_states()) throw InvalidArgument("emission_density: state out of range");
  const double d = (value - emit.mu[state]) / emit.sigma[state];
  return std::exp(-0.5 * d * d) / (emit.sigma[state] * std::sqrt(2.0 * std::numbers::pi));
}

namespace {

// Scaled forward pass. Fills alpha (T x K, each row normalised) and the
// per-bin normalisers; returns the log-likelihood.
double forward_pass(const EmissionTable& em, const StateDistribution& init,
                    const TransitionMatrix& trans, std::vector<double>& alpha,
                    std::vector<double>& norm) {
  const std::size_t k = em.n_states;
  const std::size_t n = em.length;
  alpha.assign(n * k, 0.0);
  norm.assign(n, 0.0);
  std::vector<double> pred(init.probs);
  double ll = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double a = pred[i] * em.scaled_at(t, i);
      alpha[t * k + i] = a;
      s += a;
    }
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw DegenerateLikelihood("forward mass vanished at bin " + std::to_string(t) +
                                 ": observation incompatible with every reachable state");
    }
    const double inv = 1.0 / s;
    for (std::size_t i = 0; i < k; ++i) alpha[t * k + i] *= inv;
    norm[t] = s;
    ll += std::log(s) + em.shift[t];
    if (t + 1 < n) {
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += alpha[t * k + i] * trans(i, j);
        pred[j] = acc;
      }
    }
  }
  return ll;
}

}  // namespace

double sequence_log_likelihood(const ObservedSequence& seq, const StateDistribution& init,
                               const TransitionMatrix& trans, const EmissionParams& emit) {
  check_model(seq, init, trans, emit);
  const EmissionTable em = compute_emissions(seq, emit);
  std::vector<double> alpha, norm;
  return forward_pass(em, init, trans, alpha, norm);
}

ForwardBackwardResult forward_backward(const ObservedSequence& seq, const StateDistribution& init,
                                       const TransitionMatrix& trans, const EmissionParams& emit) {
  check_model(seq, init, trans, emit);
  const EmissionTable em = compute_emissions(seq, emit);
  const std::size_t k = em.n_states;
  const std::size_t n = em.length;

  ForwardBackwardResult r;
  r.n_states = k;
  r.length = n;
  std::vector<double> alpha, norm;
  r.log_likelihood = forward_pass(em, init, trans, alpha, norm);
  r.log_scaling.resize(n);
  for (std::size_t t = 0; t < n; ++t) r.log_scaling[t] = -(std::log(norm[t]) + em.shift[t]);

  std::vector<double> beta(n * k, 1.0);
  std::vector<double> weighted(k);
  for (std::size_t t = n - 1; t-- > 0;) {
    const double inv = 1.0 / norm[t + 1];
    for (std::size_t j = 0; j < k; ++j) {
      weighted[j] = em.scaled_at(t + 1, j) * beta[(t + 1) * k + j] * inv;
    }
    for (std::size_t i = 0; i < k; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += trans(i, j) * weighted[j];
      beta[t * k + i] = acc;
    }
  }

  r.gamma.resize(n * k);
  for (std::size_t idx = 0; idx < n * k; ++idx) r.gamma[idx] = alpha[idx] * beta[idx];

  r.xi.assign(n > 0 ? (n - 1) * k * k : 0, 0.0);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const double inv = 1.0 / norm[t + 1];
    for (std::size_t j = 0; j < k; ++j) {
      weighted[j] = em.scaled_at(t + 1, j) * beta[(t + 1) * k + j] * inv;
    }
    for (std::size_t i = 0; i < k; ++i) {
      const double a = alpha[t * k + i];
      for (std::size_t j = 0; j < k; ++j) {
        r.xi[(t * k + i) * k + j] = a * trans(i, j) * weighted[j];
      }
    }
  }
  return r;
}

ViterbiPath viterbi(const ObservedSequence& seq, const StateDistribution& init,
                    const TransitionMatrix& trans, const EmissionParams& emit) {
  check_model(seq, init, trans, emit);
  const EmissionTable em = compute_emissions(seq, emit);
  const std::size_t k = em.n_states;
  const std::size_t n = em.length;

  std::vector<double> log_trans(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) log_trans[i * k + j] = std::log(trans(i, j));
  }

  std::vector<double> delta(k), next(k);
  std::vector<std::size_t> back(n * k, 0);
  for (std::size_t i = 0; i < k; ++i) delta[i] = std::log(init[i]) + em.log_at(0, i);

  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t best_i = 0;
      double best = delta[0] + log_trans[j];
      for (std::size_t i = 1; i < k; ++i) {
        const double cand = delta[i] + log_trans[i * k + j];
        if (cand > best) {
          best = cand;
          best_i = i;
        }
      }
      back[t * k + j] = best_i;
      next[j] = best + em.log_at(t, j);
    }
    delta.swap(next);
  }

  ViterbiPath path;
  path.states.resize(n);
  std::size_t last = 0;
  for (std::size_t i = 1; i < k; ++i) {
    if (delta[i] > delta[last]) last = i;
  }
  path.log_prob = delta[last];
  path.states[n - 1] = last;
  for (std::size_t t = n - 1; t > 0; --t) path.states[t - 1] = back[t * k + path.states[t]];
  return path;
}

double path_log_probability(const ObservedSequence& seq, const StateDistribution& init,
                            const TransitionMatrix& trans, const EmissionParams& emit,
                            std::span<const std::size_t> path) {
  check_model(seq, init, trans, emit);
  if (path.size() != seq.size()) throw InvalidArgument("path length does not match sequence");
  double lp = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (path[t] >= emit.n_states()) throw InvalidArgument("path state out of range");
    lp += t == 0 ? std::log(init[path[0]]) : std::log(trans(path[t - 1], path[t]));
    if (seq.observed[t]) lp += log_density_one(emit, path[t], seq.values[t]);
  }
  return lp;
}

ForwardFilter::ForwardFilter(StateDistribution init, TransitionMatrix trans, EmissionParams emit)
    : init_(std::move(init)), trans_(std::move(trans)), emit_(std::move(emit)) {
  emit_.validate();
  init_.validate();
  trans_.validate();
  if (init_.size() != emit_.n_states() || trans_.n_states() != emit_.n_states()) {
    throw InvalidArgument("ForwardFilter: state count mismatch");
  }
  alpha_ = init_.probs;
  scratch_.resize(alpha_.size());
}

void ForwardFilter::push(std::optional<double> value) {
  const std::size_t k = alpha_.size();
  if (steps_ >= kMaxBins) throw DataError("stream exceeds the maximum sequence length");
  if (value && !std::isfinite(*value)) throw DataError("non-finite observation in stream");

  // Predicted distribution for this bin.
  if (steps_ > 0) {
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += alpha_[i] * trans_(i, j);
      scratch_[j] = acc;
    }
    alpha_.swap(scratch_);
  }

  double shift = 0.0;
  if (value) {
    shift = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      scratch_[j] = log_density_one(emit_, j, *value);
      shift = std::max(shift, scratch_[j]);
    }
    for (std::size_t j = 0; j < k; ++j) scratch_[j] = std::exp(scratch_[j] - shift);
  } else {
    std::fill(scratch_.begin(), scratch_.end(), 1.0);
  }

  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    alpha_[j] *= scratch_[j];
    s += alpha_[j];
  }
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw DegenerateLikelihood("forward mass vanished at bin " + std::to_string(steps_));
  }
  for (double& a : alpha_) a /= s;
  log_likelihood_ += std::log(s) + shift;
  ++steps_;
}

}  // namespace covhmm
