#include "covhmm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "covhmm/error.hpp"
#include "covhmm/kernels.hpp"
#include "covhmm/parallel.hpp"

namespace covhmm {

HmmParams HmmParams::uniform(EmissionParams emissions, Standardization standardization) {
  emissions.validate();
  HmmParams p;
  p.n_states = emissions.n_states();
  p.theta1 = LogitBlock(p.n_states, kInitCovariateCount);
  p.theta2.assign(p.n_states, LogitBlock(p.n_states, kTransCovariateCount));
  p.theta3 = std::move(emissions);
  p.standardization = standardization;
  return p;
}

StateDistribution HmmParams::initial_distribution(const CovariateVector& z) const {
  const InitCovariates x = standardization.apply(z);
  return logit_probs(theta1, x);
}

TransitionMatrix HmmParams::transition_matrix(const CovariateVector& z) const {
  const InitCovariates x = standardization.apply(z);
  return transition_matrix_at(theta2, std::span<const double>(x.data(), kTransCovariateCount));
}

void HmmParams::validate() const {
  if (n_states < 2) throw InvalidArgument("model needs at least two states");
  theta3.validate();
  theta1.validate();
  if (theta3.n_states() != n_states || theta1.n_categories() != n_states ||
      theta1.dim() != kInitCovariateCount || theta2.size() != n_states) {
    throw InvalidArgument("model parameter blocks disagree on the number of states");
  }
  for (const auto& row : theta2) {
    row.validate();
    if (row.n_categories() != n_states || row.dim() != kTransCovariateCount) {
      throw InvalidArgument("transition block has the wrong shape");
    }
  }
  for (std::size_t c = 0; c < kInitCovariateCount; ++c) {
    if (!std::isfinite(standardization.mean[c]) || !(standardization.sd[c] > 0.0)) {
      throw InvalidArgument("standardization entries must be finite with positive sd");
    }
  }
}

double sequence_log_likelihood(const ObservedSequence& seq, const CovariateVector& z,
                               const HmmParams& params) {
  return sequence_log_likelihood(seq, params.initial_distribution(z), params.transition_matrix(z),
                                 params.theta3);
}

namespace {

LogitBlock rebase(const LogitBlock& block, std::span<const std::size_t> order) {
  const std::size_t k = block.n_categories();
  const std::size_t dim = block.dim();
  auto intercept_of = [&](std::size_t c) { return c == 0 ? 0.0 : block.intercept(c); };
  auto coef_of = [&](std::size_t c, std::size_t d) { return c == 0 ? 0.0 : block.coef(c, d); };
  LogitBlock out(k, dim);
  const std::size_t base = order[0];
  for (std::size_t s = 1; s < k; ++s) {
    out.intercept(s) = intercept_of(order[s]) - intercept_of(base);
    for (std::size_t d = 0; d < dim; ++d) out.coef(s, d) = coef_of(order[s], d) - coef_of(base, d);
  }
  return out;
}

}  // namespace

HmmParams permute_states(const HmmParams& params, std::span<const std::size_t> order) {
  const std::size_t k = params.n_states;
  if (order.size() != k) throw InvalidArgument("state permutation has the wrong length");
  std::vector<bool> seen(k, false);
  for (std::size_t s : order) {
    if (s >= k || seen[s]) throw InvalidArgument("state order is not a permutation");
    seen[s] = true;
  }
  HmmParams out = params;
  out.theta1 = rebase(params.theta1, order);
  for (std::size_t s = 0; s < k; ++s) {
    out.theta2[s] = rebase(params.theta2[order[s]], order);
    out.theta3.mu[s] = params.theta3.mu[order[s]];
    out.theta3.sigma[s] = params.theta3.sigma[order[s]];
  }
  return out;
}

HmmParams sort_states_by_mean(const HmmParams& params) {
  std::vector<std::size_t> order(params.n_states);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return params.theta3.mu[a] < params.theta3.mu[b];
  });
  return permute_states(params, order);
}

double coefficient_penalty(const HmmParams& params, double l2) {
  double ss = 0.0;
  for (double v : params.theta1.coefficients()) ss += v * v;
  for (const auto& row : params.theta2) {
    for (double v : row.coefficients()) ss += v * v;
  }
  return 0.5 * l2 * ss;
}

void TrainConfig::validate() const {
  if (max_em_iters < 1) throw InvalidArgument("max_em_iters must be >= 1");
  if (!(loglik_rel_tol > 0.0)) throw InvalidArgument("loglik_rel_tol must be positive");
  if (n_restarts < 1) throw InvalidArgument("n_restarts must be >= 1");
  if (!(l2 >= 0.0) || !std::isfinite(l2)) throw InvalidArgument("l2 must be finite and >= 0");
  if (n_states < 2) throw InvalidArgument("n_states must be >= 2");
}

EStepResult e_step(std::span<const PatientSequence> sequences, const HmmParams& params) {
  EStepResult r;
  r.posteriors.reserve(sequences.size());
  for (const auto& p : sequences) {
    try {
      r.posteriors.push_back(forward_backward(p.seq, params.initial_distribution(p.z),
                                              params.transition_matrix(p.z), params.theta3));
    } catch (const DataError& e) {
      throw DataError("patient " + p.patient_id + ": " + e.what());
    }
    r.total_loglik += r.posteriors.back().log_likelihood;
  }
  return r;
}

MStepResult m_step(std::span<const PatientSequence> sequences, const EStepResult& posteriors,
                   const HmmParams& params, const TrainConfig& config) {
  if (posteriors.posteriors.size() != sequences.size()) {
    throw InvalidArgument("m_step: posteriors do not match the sequences");
  }
  const std::size_t k = params.n_states;
  MStepResult out{params, {}};
  HmmParams& next = out.params;

  // Initial-state logits.
  WeightedCategoricalData init_rows(k, kInitCovariateCount);
  std::vector<WeightedCategoricalData> trans_rows(k, WeightedCategoricalData(k, kTransCovariateCount));
  std::vector<double> w(k);
  for (std::size_t n = 0; n < sequences.size(); ++n) {
    const auto& fb = posteriors.posteriors[n];
    const InitCovariates x = params.standardization.apply(sequences[n].z);
    for (std::size_t i = 0; i < k; ++i) w[i] = std::max(0.0, fb.gamma_at(0, i));
    init_rows.add_row(x, w);
    const std::span<const double> xt(x.data(), kTransCovariateCount);
    for (std::size_t i = 0; i < k; ++i) {
      std::fill(w.begin(), w.end(), 0.0);
      double total = 0.0;
      for (std::size_t t = 0; t + 1 < fb.length; ++t) {
        for (std::size_t j = 0; j < k; ++j) w[j] += fb.xi_at(t, i, j);
      }
      for (double& v : w) {
        v = std::max(0.0, v);
        total += v;
      }
      if (total > 0.0) trans_rows[i].add_row(xt, w);
    }
  }
  if (init_rows.total_weight() > 0.0) {
    next.theta1 = fit_weighted_multinomial_logit(init_rows, params.theta1, config.l2).block;
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (trans_rows[i].n_rows() > 0 && trans_rows[i].total_weight() > 0.0) {
      next.theta2[i] = fit_weighted_multinomial_logit(trans_rows[i], params.theta2[i], config.l2).block;
    }
  }

  // Gaussian emissions: weighted mean and standard deviation over observed
  // bins, pooled across sequences.
  std::size_t total_bins = 0;
  for (const auto& p : sequences) total_bins += p.seq.size();
  std::vector<double> values(total_bins, 0.0);
  std::vector<double> weights(total_bins, 0.0);
  {
    std::size_t off = 0;
    for (const auto& p : sequences) {
      for (std::size_t t = 0; t < p.seq.size(); ++t) {
        if (p.seq.observed[t]) values[off + t] = p.seq.values[t];
      }
      off += p.seq.size();
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t off = 0;
    for (std::size_t n = 0; n < sequences.size(); ++n) {
      const auto& seq = sequences[n].seq;
      const auto& fb = posteriors.posteriors[n];
      for (std::size_t t = 0; t < seq.size(); ++t) {
        weights[off + t] = seq.observed[t] ? std::max(0.0, fb.gamma_at(t, j)) : 0.0;
      }
      off += seq.size();
    }
    double total = 0.0;
    for (double v : weights) total += v;
    if (total < 1e-8) {
      out.starved_states.push_back(j);
      continue;
    }
    const double mu = kernels::weighted_sum(weights, values) / total;
    const double var = kernels::weighted_sq_dev(weights, values, mu) / total;
    next.theta3.mu[j] = mu;
    next.theta3.sigma[j] = std::max(std::sqrt(std::max(var, 0.0)), kSigmaFloor);
  }
  return out;
}

namespace {

std::vector<double> pooled_observations(std::span<const PatientSequence> sequences) {
  std::vector<double> all;
  for (const auto& p : sequences) {
    for (std::size_t t = 0; t < p.seq.size(); ++t) {
      if (p.seq.observed[t]) all.push_back(p.seq.values[t]);
    }
  }
  return all;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

void check_training_input(std::span<const PatientSequence> sequences) {
  if (sequences.size() < 2) throw DataError("training needs at least two sequences");
  for (const auto& p : sequences) p.validate();
}

}  // namespace

HmmParams initial_params(std::span<const PatientSequence> sequences, const TrainConfig& config,
                         std::size_t restart) {
  config.validate();
  std::vector<double> all = pooled_observations(sequences);
  if (all.empty()) throw DataError("training data has no observed values");
  std::sort(all.begin(), all.end());

  const std::size_t k = config.n_states;
  std::vector<double> levels(k);
  if (k == 3) {
    levels = {0.25, 0.50, 0.90};
  } else {
    for (std::size_t j = 0; j < k; ++j) levels[j] = static_cast<double>(j + 1) / static_cast<double>(k + 1);
  }

  const double mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
  double ss = 0.0;
  for (double v : all) ss += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(ss / static_cast<double>(all.size())), kSigmaFloor);

  EmissionParams emit;
  emit.mu.resize(k);
  emit.sigma.assign(k, sd);
  for (std::size_t j = 0; j < k; ++j) emit.mu[j] = quantile_sorted(all, levels[j]);
  if (restart > 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(restart)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);
    for (double& m : emit.mu) m += jitter(rng);
  }

  std::vector<CovariateVector> zs;
  zs.reserve(sequences.size());
  for (const auto& p : sequences) zs.push_back(p.z);
  return HmmParams::uniform(std::move(emit), Standardization::fit(zs));
}

FitResult fit_from(std::span<const PatientSequence> sequences, const HmmParams& start,
                   const TrainConfig& config) {
  config.validate();
  check_training_input(sequences);
  start.validate();
  if (pooled_observations(sequences).empty()) throw DataError("training data has no observed values");

  FitResult result;
  HmmParams params = start;
  EStepResult es = e_step(sequences, params);
  double objective = es.total_loglik - coefficient_penalty(params, config.l2);
  result.report.loglik_trace.push_back(objective);

  for (int iter = 1; iter <= config.max_em_iters; ++iter) {
    MStepResult ms = m_step(sequences, es, params, config);
    for (std::size_t s : ms.starved_states) {
      if (std::find(result.report.starved_states.begin(), result.report.starved_states.end(), s) ==
          result.report.starved_states.end()) {
        result.report.starved_states.push_back(s);
      }
    }
    params = std::move(ms.params);
    es = e_step(sequences, params);
    const double next = es.total_loglik - coefficient_penalty(params, config.l2);
    result.report.loglik_trace.push_back(next);
    result.report.iters = iter;
    const double rel = (next - objective) / std::max(std::abs(objective), 1e-300);
    objective = next;
    if (rel < config.loglik_rel_tol) {
      result.report.converged = true;
      break;
    }
  }

  result.params = sort_states_by_mean(params);
  result.params.training.seed = config.seed;
  result.params.training.iterations = result.report.iters;
  result.params.training.converged = result.report.converged;
  result.params.training.final_loglik = es.total_loglik;
  return result;
}

FitResult fit(std::span<const PatientSequence> sequences, const TrainConfig& config) {
  config.validate();
  check_training_input(sequences);
  if (pooled_observations(sequences).empty()) throw DataError("training data has no observed values");

  std::vector<FitResult> runs(config.n_restarts);
  parallel_for(config.n_restarts, config.jobs, [&](std::size_t r) {
    runs[r] = fit_from(sequences, initial_params(sequences, config, r), config);
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].report.loglik_trace.back() > runs[best].report.loglik_trace.back()) best = r;
  }
  FitResult chosen = std::move(runs[best]);
  chosen.report.restart_index_chosen = best;
  chosen.params.training.restart = best;
  return chosen;
}

}  // namespace covhmm
