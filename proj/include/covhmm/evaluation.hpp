#pragma once

// Cross-validation, classification metrics, the early-classification sweep
// and Viterbi state-prevalence tables.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "covhmm/classifier.hpp"
#include "covhmm/dataset.hpp"
#include "covhmm/training.hpp"

namespace covhmm {

// Positive class is C.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept;
  bool operator==(const ConfusionCounts&) const = default;
};

// sqrt(TP/(TP+FN) * TN/(FP+TN)); UndefinedMetric if a class is empty.
double g_means(const ConfusionCounts& c);
// Harmonic mean of precision and recall; 0 when TP = 0. UndefinedMetric
// when TP = FP = FN = 0.
double f_score(const ConfusionCounts& c);

struct ScoredLabel {
  double score = 0.0;
  Label label = Label::NC;
};

// Mann-Whitney estimate P(score_C > score_NC) + 0.5 P(tie), via average
// ranks. SingleClassError when either class is missing.
double auc(std::span<const ScoredLabel> scores);

ConfusionCounts confusion_at(std::span<const ScoredLabel> scores, double threshold);

struct MetricsReport {
  double auc = 0.0;
  double f_score = 0.0;
  double g_means = 0.0;
  ConfusionCounts confusion;
  std::size_t n_test = 0;
};

MetricsReport compute_metrics(std::span<const ScoredLabel> scores, double threshold = 0.5);

struct Fold {
  std::vector<std::size_t> train;  // indices into the dataset
  std::vector<std::size_t> test;
};

struct FoldPlan {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

// Stratified by label: each class is shuffled (seeded) and dealt round-robin,
// so per-fold class counts differ by at most one.
FoldPlan make_fold_plan(std::span<const PatientSequence> data, std::size_t k, std::uint64_t seed);

struct EvalOptions {
  double threshold = 0.5;
  std::size_t jobs = 1;  // folds trained concurrently
};

struct FoldResult {
  std::size_t fold = 0;
  MetricsReport metrics;
  double prior_c = 0.0;
  std::size_t n_train = 0;
  std::size_t skipped = 0;  // test sequences emptied by truncation
};

struct CvReport {
  std::optional<double> truncate_hours;
  double threshold = 0.5;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<FoldResult> folds;
  double mean_auc = 0.0;
  double mean_f_score = 0.0;
  double mean_g_means = 0.0;
  ConfusionCounts pooled;
  std::size_t skipped = 0;
};

// One classifier per fold, trained on the full-length training sequences.
std::vector<ClassifierPair> train_folds(std::span<const PatientSequence> data, const FoldPlan& plan,
                                        const TrainConfig& config, const EvalOptions& options = {});

// Scores every test fold with its fold's classifier. With truncate_hours,
// test sequences are cut to floor(hours / 4) bins first.
CvReport evaluate_folds(std::span<const PatientSequence> data, const FoldPlan& plan,
                        std::span<const ClassifierPair> models, std::optional<double> truncate_hours,
                        const EvalOptions& options = {});

CvReport cross_validate(std::span<const PatientSequence> data, const FoldPlan& plan,
                        const TrainConfig& config, std::optional<double> truncate_hours = std::nullopt,
                        const EvalOptions& options = {});

struct EarlyCurvePoint {
  double hours = 0.0;
  double auc = 0.0;
  double f_score = 0.0;
  double g_means = 0.0;
  std::size_t skipped = 0;
};

// 24, 28, ..., 72.
std::vector<double> default_early_hours();

// Trains once per fold and evaluates the same models at every horizon.
std::vector<EarlyCurvePoint> early_curve(std::span<const PatientSequence> data, const FoldPlan& plan,
                                         const TrainConfig& config, std::span<const double> hours,
                                         const EvalOptions& options = {});

struct PrevalenceRow {
  std::size_t bin = 0;
  double hours = 0.0;
  std::size_t n_patients = 0;  // sequences that reach this bin
  std::vector<double> shares;  // per state
};

// Viterbi-decodes each sequence under its covariate-resolved model and
// tallies the share of patients in each state per bin.
std::vector<PrevalenceRow> state_prevalence(std::span<const PatientSequence> sequences,
                                            const HmmParams& params);

std::string cv_report_json(const CvReport& report);
std::string cv_report_text(const CvReport& report);
std::string early_curve_csv(std::span<const EarlyCurvePoint> points);
std::string prevalence_csv(std::span<const PrevalenceRow> rows);

}  // namespace covhmm
