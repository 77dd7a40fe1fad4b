#pragma once

// Baum-Welch for the covariate-conditioned HMM. Emission parameters have a
// closed-form M-step; the initial-state and transition logits are refit by
// weighted Newton-Raphson, which only guarantees improvement, so this is a
// generalised EM. The objective tracked per iteration is the penalised
// log-likelihood (log-likelihood minus the L2 term on logit coefficients);
// with l2 = 0 it is the plain log-likelihood.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "covhmm/covariates.hpp"
#include "covhmm/dataset.hpp"
#include "covhmm/hmm.hpp"

namespace covhmm {

struct TrainingInfo {
  std::uint64_t seed = 0;
  int iterations = 0;
  double final_loglik = 0.0;
  bool converged = false;
  std::size_t restart = 0;
};

struct HmmParams {
  std::size_t n_states = kDefaultStates;
  LogitBlock theta1;               // initial-state model over all init covariates
  std::vector<LogitBlock> theta2;  // one block per source state, transition covariates
  EmissionParams theta3;
  Standardization standardization = Standardization::identity();
  TrainingInfo training;

  // All logits zero (uniform init and transitions) with the given emissions.
  static HmmParams uniform(EmissionParams emissions,
                           Standardization standardization = Standardization::identity());

  StateDistribution initial_distribution(const CovariateVector& z) const;
  TransitionMatrix transition_matrix(const CovariateVector& z) const;
  void validate() const;
};

double sequence_log_likelihood(const ObservedSequence& seq, const CovariateVector& z,
                               const HmmParams& params);

// New state s takes the role of old state order[s]. Logit blocks are
// re-expressed against the new base category, so every probability is
// preserved exactly up to relabelling.
HmmParams permute_states(const HmmParams& params, std::span<const std::size_t> order);
HmmParams sort_states_by_mean(const HmmParams& params);

// (l2 / 2) * sum of squared logit coefficients over theta1 and theta2.
double coefficient_penalty(const HmmParams& params, double l2);

struct TrainConfig {
  int max_em_iters = 200;
  double loglik_rel_tol = 1e-6;
  std::uint64_t seed = 0;
  std::size_t n_restarts = 5;
  double l2 = 1e-4;
  std::size_t n_states = kDefaultStates;
  std::size_t jobs = 1;  // restarts fitted concurrently

  void validate() const;
};

struct TrainReport {
  std::vector<double> loglik_trace;  // penalised objective, one entry per E-step
  bool converged = false;
  int iters = 0;
  std::size_t restart_index_chosen = 0;
  std::vector<std::size_t> starved_states;  // states that lost all weight at some M-step
};

struct EStepResult {
  double total_loglik = 0.0;
  std::vector<ForwardBackwardResult> posteriors;
};

EStepResult e_step(std::span<const PatientSequence> sequences, const HmmParams& params);

struct MStepResult {
  HmmParams params;
  // States whose total posterior weight fell below 1e-8; they keep their
  // previous emission parameters.
  std::vector<std::size_t> starved_states;
};

MStepResult m_step(std::span<const PatientSequence> sequences, const EStepResult& posteriors,
                   const HmmParams& params, const TrainConfig& config);

// Starting point for one restart: emission means at fixed quantiles of the
// pooled observations (25/50/90% for three states), sigma at the pooled
// standard deviation, zero logits. Restarts after the first jitter the means
// by U(-0.3, 0.3) degF.
HmmParams initial_params(std::span<const PatientSequence> sequences, const TrainConfig& config,
                         std::size_t restart);

struct FitResult {
  HmmParams params;
  TrainReport report;
};

// EM from one given starting point. The result is state-sorted by mean.
FitResult fit_from(std::span<const PatientSequence> sequences, const HmmParams& start,
                   const TrainConfig& config);

// Full training: config.n_restarts starts, best final objective wins (ties
// to the lower restart index).
FitResult fit(std::span<const PatientSequence> sequences, const TrainConfig& config);

}  // namespace covhmm
