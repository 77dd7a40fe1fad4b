#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "covhmm/classifier.hpp"
#include "covhmm/error.hpp"
#include "covhmm/synthgen.hpp"
#include "oracles.hpp"

using namespace covhmm;

namespace {

ClassifierPair reference_pair(double prior = 0.24) {
  return {reference_params(Label::C), reference_params(Label::NC), prior};
}

}  // namespace

TEST_CASE("identical models return the prior exactly") {
  const auto data = generate(scenario("reference", 20, 3)).patients;
  for (double prior : {0.24, 0.5, 0.9}) {
    const ClassifierPair pair{reference_params(Label::NC), reference_params(Label::NC), prior};
    for (const auto& p : data) CHECK(posterior(p.seq, p.z, pair) == prior);
  }
  CHECK(posterior_from_loglik(-12.5, -12.5, 0.3) == 0.3);
}

TEST_CASE("posterior from log-likelihoods") {
  CHECK(posterior_from_loglik(std::log(3.0), 0.0, 0.5) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(posterior_from_loglik(0.0, std::log(3.0), 0.5) == doctest::Approx(0.25).epsilon(1e-15));
  // Prior odds 1:3 against likelihood ratio 3 give even odds.
  CHECK(posterior_from_loglik(std::log(3.0), 0.0, 0.25) == doctest::Approx(0.5).epsilon(1e-15));
  for (double d : {1000.0, -1000.0, 1e300, -1e300}) {
    const double p = posterior_from_loglik(d, 0.0, 0.3);
    CHECK(std::isfinite(p));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  CHECK(posterior_from_loglik(1000.0, 0.0, 0.3) == 1.0);
  CHECK(posterior_from_loglik(-1000.0, 0.0, 0.3) == 0.0);
}

TEST_CASE("posterior matches Bayes' rule on the likelihoods") {
  const auto pair = reference_pair();
  const auto data = generate(scenario("reference", 30, 5)).patients;
  for (const auto& p : data) {
    const double lc = sequence_log_likelihood(p.seq, p.z, pair.lambda_c);
    const double lnc = sequence_log_likelihood(p.seq, p.z, pair.lambda_nc);
    const long double a = std::exp(static_cast<long double>(lc - lnc)) * pair.prior_c;
    const long double want = a / (a + (1.0L - pair.prior_c));
    const double got = posterior(p.seq, p.z, pair);
    CHECK(std::abs(got - static_cast<double>(want)) <= 1e-12);
    CHECK(posterior_complement(p.seq, p.z, pair) == doctest::Approx(1.0 - got));
  }
}

TEST_CASE("threshold is inclusive") {
  CHECK(label_for(0.5, 0.5) == Label::C);
  CHECK(label_for(std::nextafter(0.5, 0.0), 0.5) == Label::NC);
  CHECK(label_for(0.2, 0.1) == Label::C);
  const auto pair = reference_pair();
  const auto data = generate(scenario("reference", 10, 7)).patients;
  for (const auto& p : data) {
    const double post = posterior(p.seq, p.z, pair);
    CHECK(classify(p.seq, p.z, pair, post) == Label::C);
    CHECK(classify(p.seq, p.z, pair, std::nextafter(post, 2.0)) == Label::NC);
  }
}

TEST_CASE("streaming scores equal scores recomputed from scratch") {
  const auto pair = reference_pair();
  const auto data = generate(scenario("reference", 15, 11)).patients;
  for (const auto& p : data) {
    RiskScorer scorer(pair, p.z);
    CHECK(scorer.score() == pair.prior_c);
    const auto series = risk_series(p.seq, p.z, pair);
    REQUIRE(series.scores.size() == p.seq.size());
    for (std::size_t t = 0; t < p.seq.size(); ++t) {
      const std::optional<double> v =
          p.seq.observed[t] ? std::optional<double>(p.seq.values[t]) : std::nullopt;
      const double s = scorer.push(v);
      const double batch = posterior(p.seq.prefix(t + 1), p.z, pair);
      CHECK(std::abs(s - batch) <= 1e-12);
      CHECK(series.scores[t] == s);
    }
    CHECK(scorer.steps() == p.seq.size());
  }
}

TEST_CASE("classifier pair validation") {
  CHECK_THROWS_AS(reference_pair(1.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(reference_pair(0.0).validate(), InvalidArgument);
  CHECK_NOTHROW(reference_pair(0.5).validate());
  ClassifierPair mismatched = reference_pair();
  mismatched.lambda_nc = HmmParams::uniform({{97.0, 99.0}, {1.0, 1.0}});
  CHECK_THROWS_AS(mismatched.validate(), InvalidArgument);
}

TEST_CASE("train_classifier uses the pre-oversampling prior") {
  auto data = generate(scenario("separated", 60, 19)).patients;
  TrainConfig cfg;
  cfg.seed = 2;
  cfg.n_restarts = 1;
  cfg.max_em_iters = 5;
  const auto pair = train_classifier(data, cfg);
  const double n_c = static_cast<double>(count_label(data, Label::C));
  CHECK(pair.prior_c == doctest::Approx(n_c / static_cast<double>(data.size())).epsilon(1e-15));
  CHECK_NOTHROW(pair.validate());
  const auto fixed = train_classifier(data, cfg, 0.5);
  CHECK(fixed.prior_c == 0.5);

  std::vector<PatientSequence> only_nc;
  for (const auto& p : data) {
    if (p.label == Label::NC) only_nc.push_back(p);
  }
  CHECK_THROWS_AS(train_classifier(only_nc, cfg), SingleClassError);
  data[0].label.reset();
  CHECK_THROWS_AS(train_classifier(data, cfg), DataError);
}
