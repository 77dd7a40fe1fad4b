#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "covhmm/error.hpp"
#include "covhmm/hmm.hpp"
#include "oracles.hpp"

using namespace covhmm;

namespace {

// Reference complication-class emissions.
EmissionParams complication_emissions() { return {{97.793, 98.582, 99.813}, {0.434, 0.435, 1.092}}; }

StateDistribution uniform_init(std::size_t k) { return {std::vector<double>(k, 1.0 / static_cast<double>(k))}; }

struct RandomModel {
  StateDistribution init;
  TransitionMatrix trans;
  EmissionParams emit;
  ObservedSequence seq;
};

RandomModel random_model(std::mt19937_64& rng, std::size_t k, std::size_t t, double missing_rate) {
  RandomModel m;
  m.init.probs = oracle::random_simplex(k, rng);
  std::vector<double> rows;
  for (std::size_t i = 0; i < k; ++i) {
    const auto r = oracle::random_simplex(k, rng);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  m.trans = TransitionMatrix(k, rows);
  std::uniform_real_distribution<double> mu(97.0, 100.5), sd(0.3, 1.5), obs(96.5, 101.0), u(0.0, 1.0);
  for (std::size_t j = 0; j < k; ++j) {
    m.emit.mu.push_back(mu(rng));
    m.emit.sigma.push_back(sd(rng));
  }
  for (std::size_t s = 0; s < t; ++s) {
    m.seq.values.push_back(obs(rng));
    m.seq.observed.push_back(u(rng) >= missing_rate);
  }
  return m;
}

std::vector<double> flat(const TransitionMatrix& m) {
  std::vector<double> v;
  for (std::size_t i = 0; i < m.n_states(); ++i) {
    for (double x : m.row(i)) v.push_back(x);
  }
  return v;
}

}  // namespace

TEST_CASE("emission density matches the Gaussian formula") {
  const auto emit = complication_emissions();
  // 1 / (0.434 sqrt(2 pi)), evaluated in 30-digit arithmetic.
  CHECK(emission_density(emit, 0, 97.793) == doctest::Approx(0.919221844242932437).epsilon(1e-12));
  CHECK(emission_density(emit, 2, 98.0) == doctest::Approx(0.0920728576445290343).epsilon(1e-12));
  for (std::size_t j = 0; j < 3; ++j) {
    for (double k : {0.3, 1.0, 2.5}) {
      const double up = emission_density(emit, j, emit.mu[j] + k * emit.sigma[j]);
      const double down = emission_density(emit, j, emit.mu[j] - k * emit.sigma[j]);
      CHECK(up == doctest::Approx(down).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(emission_density(emit, 3, 98.0), InvalidArgument);
}

TEST_CASE("single-bin log-likelihood under uniform init") {
  const auto emit = complication_emissions();
  const TransitionMatrix trans(3, std::vector<double>(9, 1.0 / 3.0));
  const auto seq = ObservedSequence::fully_observed({98.0});
  // log((0.820392 + 0.374726 + 0.092073) / 3) from 30-digit evaluation.
  CHECK(sequence_log_likelihood(seq, uniform_init(3), trans, emit) ==
        doctest::Approx(-0.846149414814359598).epsilon(1e-12));
}

TEST_CASE("a trailing missing bin contributes nothing") {
  const auto emit = complication_emissions();
  std::mt19937_64 rng(3);
  std::vector<double> rows;
  for (int i = 0; i < 3; ++i) {
    const auto r = oracle::random_simplex(3, rng);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const TransitionMatrix trans(3, rows);
  const StateDistribution init{oracle::random_simplex(3, rng)};
  const ObservedSequence one = ObservedSequence::fully_observed({98.4});
  const ObservedSequence two{{98.4, 0.0}, {true, false}};
  CHECK(sequence_log_likelihood(two, init, trans, emit) ==
        doctest::Approx(sequence_log_likelihood(one, init, trans, emit)).epsilon(1e-14));
}

TEST_CASE("likelihood, posteriors and Viterbi agree with path enumeration") {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 3);
    const std::size_t t = 1 + static_cast<std::size_t>(trial % 5);
    const auto m = random_model(rng, k, t, trial % 4 == 0 ? 0.3 : 0.0);
    const auto bf = oracle::enumerate_paths(m.seq, m.init.probs, flat(m.trans), m.emit.mu, m.emit.sigma);

    const double ll = sequence_log_likelihood(m.seq, m.init, m.trans, m.emit);
    CHECK(oracle::rel_err(ll, std::log(bf.likelihood)) <= 1e-10);

    const auto fb = forward_backward(m.seq, m.init, m.trans, m.emit);
    CHECK(std::abs(fb.log_likelihood - ll) <= 1e-12);
    for (std::size_t i = 0; i < fb.gamma.size(); ++i) CHECK(std::abs(fb.gamma[i] - bf.gamma[i]) <= 1e-10);
    for (std::size_t i = 0; i < fb.xi.size(); ++i) CHECK(std::abs(fb.xi[i] - bf.xi[i]) <= 1e-10);

    const auto vit = viterbi(m.seq, m.init, m.trans, m.emit);
    CHECK(oracle::rel_err(vit.log_prob, std::log(bf.best_joint)) <= 1e-10);
    CHECK(oracle::rel_err(path_log_probability(m.seq, m.init, m.trans, m.emit, vit.states),
                          std::log(bf.best_joint)) <= 1e-10);
  }
}

TEST_CASE("forward-backward structural invariants") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = random_model(rng, 3, 40, 0.1);
    const auto fb = forward_backward(m.seq, m.init, m.trans, m.emit);
    for (std::size_t t = 0; t < fb.length; ++t) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += fb.gamma_at(t, i);
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    for (std::size_t t = 0; t + 1 < fb.length; ++t) {
      for (std::size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 3; ++j) s += fb.xi_at(t, i, j);
        CHECK(std::abs(s - fb.gamma_at(t, i)) <= 1e-9);
      }
    }
    const double sum_log_scaling = std::accumulate(fb.log_scaling.begin(), fb.log_scaling.end(), 0.0);
    CHECK(std::abs(fb.log_likelihood + sum_log_scaling) <= 1e-9);
  }
}

TEST_CASE("single bin posterior is proportional to init times emission") {
  const auto emit = complication_emissions();
  const StateDistribution init{{0.5, 0.3, 0.2}};
  const TransitionMatrix trans(3, std::vector<double>(9, 1.0 / 3.0));
  const auto fb = forward_backward(ObservedSequence::fully_observed({98.3}), init, trans, emit);
  double z = 0.0;
  std::vector<double> w(3);
  for (std::size_t i = 0; i < 3; ++i) z += (w[i] = init[i] * oracle::gaussian(98.3, emit.mu[i], emit.sigma[i]));
  for (std::size_t i = 0; i < 3; ++i) CHECK(fb.gamma_at(0, i) == doctest::Approx(w[i] / z).epsilon(1e-13));
  CHECK(fb.xi.empty());
}

TEST_CASE("identical emissions make gamma the chain's marginal distribution") {
  const EmissionParams emit{{98.5, 98.5, 98.5}, {0.6, 0.6, 0.6}};
  const StateDistribution init{{0.6, 0.3, 0.1}};
  const TransitionMatrix trans(3, {0.8, 0.15, 0.05, 0.2, 0.7, 0.1, 0.1, 0.3, 0.6});
  const auto seq = ObservedSequence::fully_observed({97.0, 99.2, 98.1, 100.4, 98.8});
  const auto fb = forward_backward(seq, init, trans, emit);
  std::vector<double> marginal = init.probs;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    for (std::size_t i = 0; i < 3; ++i) CHECK(fb.gamma_at(t, i) == doctest::Approx(marginal[i]).epsilon(1e-12));
    std::vector<double> next(3, 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) next[j] += marginal[i] * trans(i, j);
    }
    marginal = next;
  }
}

TEST_CASE("Viterbi: single bin, dominant emission, ties") {
  const auto emit = complication_emissions();
  const StateDistribution init{{0.2, 0.5, 0.3}};
  const TransitionMatrix flat_trans(3, std::vector<double>(9, 1.0 / 3.0));
  {
    const double x = 98.2;
    const auto path = viterbi(ObservedSequence::fully_observed({x}), init, flat_trans, emit);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (init[i] * oracle::gaussian(x, emit.mu[i], emit.sigma[i]) >
          init[best] * oracle::gaussian(x, emit.mu[best], emit.sigma[best])) {
        best = i;
      }
    }
    CHECK(path.states == std::vector<std::size_t>{best});
  }
  {
    const EmissionParams sharp{{97.0, 98.5, 100.0}, {0.2, 0.2, 0.2}};
    const auto seq = ObservedSequence::fully_observed(std::vector<double>(8, 100.0));
    const auto path = viterbi(seq, uniform_init(3), flat_trans, sharp);
    CHECK(path.states == std::vector<std::size_t>(8, 2));
  }
  {
    // Everything symmetric: every path ties, lowest index wins.
    const EmissionParams same{{98.5, 98.5, 98.5}, {0.5, 0.5, 0.5}};
    const auto seq = ObservedSequence::fully_observed({98.0, 99.0, 98.7});
    CHECK(viterbi(seq, uniform_init(3), flat_trans, same).states == std::vector<std::size_t>(3, 0));
  }
}

TEST_CASE("relabelling states permutes outputs and keeps the likelihood") {
  std::mt19937_64 rng(5);
  const std::vector<std::size_t> order{2, 0, 1};  // new state s is old state order[s]
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(rng, 3, 12, 0.1);
    StateDistribution init2{{0, 0, 0}};
    std::vector<double> rows(9);
    EmissionParams emit2{{0, 0, 0}, {1, 1, 1}};
    for (std::size_t s = 0; s < 3; ++s) {
      init2.probs[s] = m.init[order[s]];
      emit2.mu[s] = m.emit.mu[order[s]];
      emit2.sigma[s] = m.emit.sigma[order[s]];
      for (std::size_t r = 0; r < 3; ++r) rows[s * 3 + r] = m.trans(order[s], order[r]);
    }
    const TransitionMatrix trans2(3, rows);
    const auto a = forward_backward(m.seq, m.init, m.trans, m.emit);
    const auto b = forward_backward(m.seq, init2, trans2, emit2);
    CHECK(std::abs(a.log_likelihood - b.log_likelihood) <= 1e-10);
    for (std::size_t t = 0; t < a.length; ++t) {
      for (std::size_t s = 0; s < 3; ++s) CHECK(std::abs(b.gamma_at(t, s) - a.gamma_at(t, order[s])) <= 1e-10);
    }
    const auto va = viterbi(m.seq, m.init, m.trans, m.emit);
    const auto vb = viterbi(m.seq, init2, trans2, emit2);
    for (std::size_t t = 0; t < va.states.size(); ++t) CHECK(order[vb.states[t]] == va.states[t]);
  }
}

TEST_CASE("missing bin is equivalent to a bin whose density is one under every state") {
  // sigma = 1/sqrt(2 pi) gives density exactly 1 at the mean; identical means
  // make it 1 under every state.
  const double s = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const EmissionParams emit{{98.0, 98.0, 98.0}, {s, s, s}};
  const StateDistribution init{{0.5, 0.25, 0.25}};
  const TransitionMatrix trans(3, {0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4});
  const ObservedSequence seen{{98.3, 98.0, 97.6}, {true, true, true}};
  const ObservedSequence hidden{{98.3, 0.0, 97.6}, {true, false, true}};
  CHECK(sequence_log_likelihood(seen, init, trans, emit) ==
        doctest::Approx(sequence_log_likelihood(hidden, init, trans, emit)).epsilon(1e-13));
}

TEST_CASE("long sequences with narrow emissions do not underflow") {
  const EmissionParams emit{{97.0, 98.5, 100.0}, {0.05, 0.05, 0.05}};
  const TransitionMatrix trans(3, std::vector<double>(9, 1.0 / 3.0));
  std::vector<double> values(60, 105.0);
  const auto fb = forward_backward(ObservedSequence::fully_observed(values), uniform_init(3), trans, emit);
  CHECK(std::isfinite(fb.log_likelihood));
  CHECK(fb.log_likelihood < -1e5);
  for (double g : fb.gamma) CHECK(std::isfinite(g));
}

TEST_CASE("input validation") {
  const auto emit = complication_emissions();
  const TransitionMatrix trans(3, std::vector<double>(9, 1.0 / 3.0));
  CHECK_THROWS_AS(sequence_log_likelihood(ObservedSequence{}, uniform_init(3), trans, emit), DataError);
  CHECK_THROWS_AS(sequence_log_likelihood(ObservedSequence::fully_observed(std::vector<double>(61, 98.0)),
                                          uniform_init(3), trans, emit),
                  DataError);
  CHECK_THROWS_AS(TransitionMatrix(2, {0.5, 0.6, 0.5, 0.5}), InvalidArgument);
  const EmissionParams bad{{98.0, 99.0, 100.0}, {0.5, 1e-4, 0.5}};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS(sequence_log_likelihood(ObservedSequence::fully_observed({98.0}), uniform_init(2), trans, emit),
                  InvalidArgument);
}

TEST_CASE("zero reachable mass raises a degenerate-likelihood error") {
  const EmissionParams emit{{97.0, 100.0}, {0.01, 0.01}};
  const StateDistribution init{{1.0, 0.0}};
  const TransitionMatrix trans(2, {1.0, 0.0, 0.0, 1.0});
  // Only state 2 can explain 100 degF, but the chain can never reach it.
  CHECK_THROWS_AS(sequence_log_likelihood(ObservedSequence::fully_observed({97.0, 100.0}), init, trans, emit),
                  DegenerateLikelihood);
}

TEST_CASE("streaming forward filter matches the batch likelihood") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(rng, 3, 30, 0.2);
    ForwardFilter filter(m.init, m.trans, m.emit);
    for (std::size_t t = 0; t < m.seq.size(); ++t) {
      filter.push(m.seq.observed[t] ? std::optional<double>(m.seq.values[t]) : std::nullopt);
      const double batch = sequence_log_likelihood(m.seq.prefix(t + 1), m.init, m.trans, m.emit);
      CHECK(std::abs(filter.log_likelihood() - batch) <= 1e-12 * std::max(1.0, std::abs(batch)));
    }
  }
}
