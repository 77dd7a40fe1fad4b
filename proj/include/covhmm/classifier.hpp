#pragma once

// Two-model Bayesian sequence classifier: one covariate HMM per class and a
// class prior, combined by Bayes' rule in log space.

#include <optional>
#include <span>
#include <vector>

#include "covhmm/dataset.hpp"
#include "covhmm/training.hpp"

namespace covhmm {

struct ClassifierPair {
  HmmParams lambda_c;
  HmmParams lambda_nc;
  double prior_c = 0.5;

  // 0 < prior_c < 1, both models valid with the same number of states.
  void validate() const;
};

// P(C | O) from the two sequence log-likelihoods and P(C). Exactly prior_c
// when the log-likelihoods are equal.
double posterior_from_loglik(double loglik_c, double loglik_nc, double prior_c);

double posterior(const ObservedSequence& seq, const CovariateVector& z, const ClassifierPair& pair);
double posterior_complement(const ObservedSequence& seq, const CovariateVector& z,
                            const ClassifierPair& pair);

// Inclusive threshold: C iff posterior >= threshold.
Label label_for(double posterior, double threshold);
Label classify(const ObservedSequence& seq, const CovariateVector& z, const ClassifierPair& pair,
               double threshold = 0.5);

// Streaming risk score for one patient: push one bin at a time and read the
// posterior over the prefix seen so far.
class RiskScorer {
 public:
  RiskScorer(const ClassifierPair& pair, const CovariateVector& z);

  double push(std::optional<double> value);
  double score() const noexcept;
  std::size_t steps() const noexcept { return c_.steps(); }

 private:
  ForwardFilter c_;
  ForwardFilter nc_;
  double prior_c_;
};

struct RiskScoreSeries {
  std::vector<double> scores;  // scores[t] = P(C | O_1..t+1)
};

RiskScoreSeries risk_series(const ObservedSequence& seq, const CovariateVector& z,
                            const ClassifierPair& pair);

// Trains both class models on a labelled training set: random oversampling
// of the minority class, one fit() per class, prior from the counts before
// oversampling unless `prior_override` is given.
ClassifierPair train_classifier(std::span<const PatientSequence> train, const TrainConfig& config,
                                std::optional<double> prior_override = std::nullopt);

}  // namespace covhmm
