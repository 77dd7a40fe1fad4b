#include "covhmm/classifier.hpp"

#include <cmath>
#include <string>

#include "covhmm/error.hpp"
#include "covhmm/ingest.hpp"
#include "covhmm/parallel.hpp"

namespace covhmm {

void ClassifierPair::validate() const {
  if (!(prior_c > 0.0 && prior_c < 1.0)) {
    throw InvalidArgument("classifier prior P(C) must lie strictly between 0 and 1");
  }
  lambda_c.validate();
  lambda_nc.validate();
  if (lambda_c.n_states != lambda_nc.n_states) {
    throw InvalidArgument("classifier models disagree on the number of states");
  }
}

double posterior_from_loglik(double loglik_c, double loglik_nc, double prior_c) {
  if (!(prior_c > 0.0 && prior_c < 1.0)) throw InvalidArgument("prior must lie in (0, 1)");
  const double d = loglik_c - loglik_nc;
  if (std::isnan(d)) throw DegenerateLikelihood("both class likelihoods are zero");
  if (d == 0.0) return prior_c;
  const double prior_nc = 1.0 - prior_c;
  if (d > 0.0) return prior_c / (prior_c + prior_nc * std::exp(-d));
  const double e = prior_c * std::exp(d);
  return e / (e + prior_nc);
}

double posterior(const ObservedSequence& seq, const CovariateVector& z, const ClassifierPair& pair) {
  const double lc = sequence_log_likelihood(seq, z, pair.lambda_c);
  const double lnc = sequence_log_likelihood(seq, z, pair.lambda_nc);
  return posterior_from_loglik(lc, lnc, pair.prior_c);
}

double posterior_complement(const ObservedSequence& seq, const CovariateVector& z,
                            const ClassifierPair& pair) {
  return 1.0 - posterior(seq, z, pair);
}

Label label_for(double posterior, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
  return posterior >= threshold ? Label::C : Label::NC;
}

Label classify(const ObservedSequence& seq, const CovariateVector& z, const ClassifierPair& pair,
               double threshold) {
  return label_for(posterior(seq, z, pair), threshold);
}

RiskScorer::RiskScorer(const ClassifierPair& pair, const CovariateVector& z)
    : c_(pair.lambda_c.initial_distribution(z), pair.lambda_c.transition_matrix(z), pair.lambda_c.theta3),
      nc_(pair.lambda_nc.initial_distribution(z), pair.lambda_nc.transition_matrix(z),
          pair.lambda_nc.theta3),
      prior_c_(pair.prior_c) {
  if (!(prior_c_ > 0.0 && prior_c_ < 1.0)) throw InvalidArgument("prior must lie in (0, 1)");
}

double RiskScorer::push(std::optional<double> value) {
  c_.push(value);
  nc_.push(value);
  return score();
}

double RiskScorer::score() const noexcept {
  const double d = c_.log_likelihood() - nc_.log_likelihood();
  if (d == 0.0) return prior_c_;
  if (d > 0.0) return prior_c_ / (prior_c_ + (1.0 - prior_c_) * std::exp(-d));
  const double e = prior_c_ * std::exp(d);
  return e / (e + (1.0 - prior_c_));
}

RiskScoreSeries risk_series(const ObservedSequence& seq, const CovariateVector& z,
                            const ClassifierPair& pair) {
  seq.validate();
  RiskScorer scorer(pair, z);
  RiskScoreSeries out;
  out.scores.reserve(seq.size());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    out.scores.push_back(scorer.push(seq.observed[t] ? std::optional<double>(seq.values[t]) : std::nullopt));
  }
  return out;
}

ClassifierPair train_classifier(std::span<const PatientSequence> train, const TrainConfig& config,
                                std::optional<double> prior_override) {
  config.validate();
  std::size_t n_c = 0;
  std::size_t n_nc = 0;
  for (const auto& p : train) {
    if (!p.label) throw DataError("patient " + p.patient_id + " has no label; training needs labels");
    (*p.label == Label::C ? n_c : n_nc) += 1;
  }
  if (n_c == 0 || n_nc == 0) {
    throw SingleClassError("training data contains a single class (C: " + std::to_string(n_c) +
                           ", NC: " + std::to_string(n_nc) + ")");
  }

  const std::vector<PatientSequence> balanced = oversample(train, config.seed);
  std::vector<PatientSequence> subset[2];
  for (const auto& p : balanced) subset[*p.label == Label::C ? 0 : 1].push_back(p);

  ClassifierPair pair;
  pair.prior_c = prior_override ? *prior_override
                                : static_cast<double>(n_c) / static_cast<double>(n_c + n_nc);
  TrainConfig inner = config;
  inner.jobs = 1;
  HmmParams* targets[2] = {&pair.lambda_c, &pair.lambda_nc};
  parallel_for(2, config.jobs, [&](std::size_t c) {
    try {
      *targets[c] = fit(subset[c], inner).params;
    } catch (const DataError& e) {
      throw DataError(std::string("fitting class ") + (c == 0 ? "C" : "NC") + " model: " + e.what());
    }
  });
  pair.validate();
  return pair;
}

}  // namespace covhmm
