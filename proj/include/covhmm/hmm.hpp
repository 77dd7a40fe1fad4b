#pragma once

// Inference for a finite-state HMM with Gaussian emissions whose initial
// distribution and transition matrix are fixed for the duration of one
// sequence (they vary between patients through covariates, never over time).
//
// States are 0-based internally. Missing bins contribute an emission factor
// of one; the chain still advances through them.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace covhmm {

inline constexpr std::size_t kDefaultStates = 3;
// 10-day horizon at 4-hour bins.
inline constexpr std::size_t kMaxBins = 60;
inline constexpr double kSigmaFloor = 1e-3;

struct EmissionParams {
  std::vector<double> mu;
  std::vector<double> sigma;

  std::size_t n_states() const noexcept { return mu.size(); }
  // Throws InvalidArgument unless sizes agree, mu is finite and every
  // sigma >= kSigmaFloor.
  void validate() const;
};

struct StateDistribution {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  void validate() const;
};

class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  explicit TransitionMatrix(std::size_t n_states) : n_(n_states), p_(n_states * n_states, 0.0) {}
  // Row-major entries; validated for row-stochasticity.
  TransitionMatrix(std::size_t n_states, std::vector<double> row_major);

  std::size_t n_states() const noexcept { return n_; }
  double operator()(std::size_t from, std::size_t to) const { return p_[from * n_ + to]; }
  double& operator()(std::size_t from, std::size_t to) { return p_[from * n_ + to]; }
  std::span<const double> row(std::size_t from) const { return {p_.data() + from * n_, n_}; }
  std::span<double> row(std::size_t from) { return {p_.data() + from * n_, n_}; }

  void validate() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> p_;
};

struct ObservedSequence {
  std::vector<double> values;
  std::vector<bool> observed;

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }
  std::size_t n_observed() const noexcept;
  // 1 <= T <= kMaxBins, matching sizes, finite observed values.
  void validate() const;
  ObservedSequence prefix(std::size_t length) const;

  static ObservedSequence fully_observed(std::vector<double> values);
};

// Per-bin emission terms in a shifted form that cannot underflow:
// density(t, j) = exp(log_density(t, j) - shift[t]) with shift[t] the
// largest log density at bin t. Missing bins have log density 0 for every
// state.
struct EmissionTable {
  std::size_t n_states = 0;
  std::size_t length = 0;
  std::vector<double> log_density;  // state-major: [j * length + t]
  std::vector<double> scaled;       // state-major, exp(log_density - shift)
  std::vector<double> shift;        // per bin

  double log_at(std::size_t t, std::size_t j) const { return log_density[j * length + t]; }
  double scaled_at(std::size_t t, std::size_t j) const { return scaled[j * length + t]; }
};

EmissionTable compute_emissions(const ObservedSequence& seq, const EmissionParams& emit);

struct ForwardBackwardResult {
  std::size_t n_states = 0;
  std::size_t length = 0;
  double log_likelihood = 0.0;
  std::vector<double> gamma;  // length x n_states
  std::vector<double> xi;     // (length - 1) x n_states x n_states
  // log of the Rabiner scaling constants; log_likelihood = -sum(log_scaling).
  // Stored as logs because the per-bin emission shift is folded in.
  std::vector<double> log_scaling;

  double gamma_at(std::size_t t, std::size_t i) const { return gamma[t * n_states + i]; }
  double xi_at(std::size_t t, std::size_t i, std::size_t j) const {
    return xi[(t * n_states + i) * n_states + j];
  }
};

struct ViterbiPath {
  std::vector<std::size_t> states;
  double log_prob = 0.0;
};

double emission_density(const EmissionParams& emit, std::size_t state, double value);

double sequence_log_likelihood(const ObservedSequence& seq, const StateDistribution& init,
                               const TransitionMatrix& trans, const EmissionParams& emit);

ForwardBackwardResult forward_backward(const ObservedSequence& seq, const StateDistribution& init,
                                       const TransitionMatrix& trans, const EmissionParams& emit);

// Most probable state path, computed in log space. Ties go to the lower
// state index.
ViterbiPath viterbi(const ObservedSequence& seq, const StateDistribution& init,
                    const TransitionMatrix& trans, const EmissionParams& emit);

// Joint log-probability of the observations and one particular path.
double path_log_probability(const ObservedSequence& seq, const StateDistribution& init,
                            const TransitionMatrix& trans, const EmissionParams& emit,
                            std::span<const std::size_t> path);

// Scaled forward recursion fed one bin at a time. push() accepts
// std::nullopt for a missing bin.
class ForwardFilter {
 public:
  ForwardFilter(StateDistribution init, TransitionMatrix trans, EmissionParams emit);

  void push(std::optional<double> value);
  double log_likelihood() const noexcept { return log_likelihood_; }
  std::size_t steps() const noexcept { return steps_; }
  // Filtered state distribution P(S_t | O_1..t); the initial distribution
  // before the first push.
  std::span<const double> filtered() const noexcept { return alpha_; }

 private:
  StateDistribution init_;
  TransitionMatrix trans_;
  EmissionParams emit_;
  std::vector<double> alpha_;
  std::vector<double> scratch_;
  double log_likelihood_ = 0.0;
  std::size_t steps_ = 0;
};

}  // namespace covhmm
