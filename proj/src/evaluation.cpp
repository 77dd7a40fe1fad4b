#include "covhmm/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "covhmm/error.hpp"
#include "covhmm/io.hpp"
#include "covhmm/parallel.hpp"
#include "covhmm/random.hpp"

namespace covhmm {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

double g_means(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.fp + c.tn == 0) {
    throw UndefinedMetric("G-means needs at least one positive and one negative case");
  }
  // sqrt(tp * tn / ((tp + fn) * (fp + tn))), correctly rounded: the root of
  // the rounded ratio can land one ulp off, so pick whichever neighbour has
  // the smallest residual r^2 * den - num.
  const double num = static_cast<double>(c.tp) * static_cast<double>(c.tn);
  const double den = static_cast<double>(c.tp + c.fn) * static_cast<double>(c.fp + c.tn);
  const double r0 = std::sqrt(num / den);
  if (r0 == 0.0) return 0.0;
  auto residual = [&](double r) {
    const double sq = r * r;
    const double sq_lo = std::fma(r, r, -sq);
    const double p1 = sq * den;
    const double e1 = std::fma(sq, den, -p1);
    return std::abs((p1 - num) + e1 + sq_lo * den);
  };
  double best = r0, best_res = residual(r0);
  for (double r : {std::nextafter(r0, 0.0), std::nextafter(r0, 2.0)}) {
    const double res = residual(r);
    if (res < best_res) best = r, best_res = res;
  }
  return best;
}

double f_score(const ConfusionCounts& c) {
  if (c.tp + c.fp + c.fn == 0) throw UndefinedMetric("F-score undefined without any positives");
  if (c.tp == 0) return 0.0;
  // Harmonic mean of precision and recall, reduced to 2TP / (2TP + FP + FN).
  return static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

double auc(std::span<const ScoredLabel> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a].score < scores[b].score; });
  double rank_sum_c = 0.0;
  std::size_t n_c = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]].score == scores[order[i]].score) ++j;
    // Ranks i+1 .. j share their average.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t m = i; m < j; ++m) {
      if (scores[order[m]].label == Label::C) {
        rank_sum_c += avg_rank;
        ++n_c;
      }
    }
    i = j;
  }
  const std::size_t n_nc = scores.size() - n_c;
  if (n_c == 0 || n_nc == 0) throw SingleClassError("AUC needs both classes among the scores");
  const double nc = static_cast<double>(n_c);
  const double u = rank_sum_c - nc * (nc + 1.0) / 2.0;
  return u / (nc * static_cast<double>(n_nc));
}

ConfusionCounts confusion_at(std::span<const ScoredLabel> scores, double threshold) {
  ConfusionCounts c;
  for (const auto& s : scores) {
    const bool predicted_c = label_for(s.score, threshold) == Label::C;
    if (s.label == Label::C) {
      (predicted_c ? c.tp : c.fn) += 1;
    } else {
      (predicted_c ? c.fp : c.tn) += 1;
    }
  }
  return c;
}

MetricsReport compute_metrics(std::span<const ScoredLabel> scores, double threshold) {
  MetricsReport r;
  r.n_test = scores.size();
  r.auc = auc(scores);
  r.confusion = confusion_at(scores, threshold);
  r.f_score = f_score(r.confusion);
  r.g_means = g_means(r.confusion);
  return r;
}

FoldPlan make_fold_plan(std::span<const PatientSequence> data, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("cross-validation needs k >= 2");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].label) throw DataError("patient " + data[i].patient_id + " has no label");
    by_class[*data[i].label == Label::C ? 0 : 1].push_back(i);
  }
  if (by_class[0].size() < k || by_class[1].size() < k) {
    throw SingleClassError("each class needs at least k = " + std::to_string(k) +
                           " patients for stratified folds (C: " + std::to_string(by_class[0].size()) +
                           ", NC: " + std::to_string(by_class[1].size()) + ")");
  }
  std::mt19937_64 rng(derive_seed(seed, 0xf01d));
  std::vector<std::vector<std::size_t>> test(k);
  std::size_t slot = 0;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) {
      test[slot].push_back(idx);
      slot = (slot + 1) % k;
    }
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(test[f].begin(), test[f].end());
    plan.folds[f].test = test[f];
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) plan.folds[f].train.insert(plan.folds[f].train.end(), test[g].begin(), test[g].end());
    }
    std::sort(plan.folds[f].train.begin(), plan.folds[f].train.end());
  }
  return plan;
}

std::vector<ClassifierPair> train_folds(std::span<const PatientSequence> data, const FoldPlan& plan,
                                        const TrainConfig& config, const EvalOptions& options) {
  std::vector<ClassifierPair> models(plan.folds.size());
  parallel_for(plan.folds.size(), options.jobs, [&](std::size_t f) {
    std::vector<PatientSequence> train;
    train.reserve(plan.folds[f].train.size());
    for (std::size_t idx : plan.folds[f].train) train.push_back(data[idx]);
    TrainConfig fold_config = config;
    fold_config.seed = derive_seed(config.seed, f);
    fold_config.jobs = 1;
    try {
      models[f] = train_classifier(train, fold_config);
    } catch (const DataError& e) {
      throw DataError("fold " + std::to_string(f) + ": " + e.what());
    }
  });
  return models;
}

CvReport evaluate_folds(std::span<const PatientSequence> data, const FoldPlan& plan,
                        std::span<const ClassifierPair> models, std::optional<double> truncate_hours,
                        const EvalOptions& options) {
  if (models.size() != plan.folds.size()) throw InvalidArgument("one model per fold is required");
  std::optional<std::size_t> max_bins;
  if (truncate_hours) {
    if (!(*truncate_hours >= 0.0)) throw InvalidArgument("truncation hours must be >= 0");
    max_bins = static_cast<std::size_t>(std::floor(*truncate_hours / 4.0));
  }

  CvReport report;
  report.truncate_hours = truncate_hours;
  report.threshold = options.threshold;
  report.k = plan.k;
  report.seed = plan.seed;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    FoldResult fr;
    fr.fold = f;
    fr.prior_c = models[f].prior_c;
    fr.n_train = plan.folds[f].train.size();
    std::vector<ScoredLabel> scores;
    for (std::size_t idx : plan.folds[f].test) {
      const PatientSequence& p = data[idx];
      ObservedSequence seq = max_bins ? p.seq.prefix(*max_bins) : p.seq;
      if (seq.empty()) {
        ++fr.skipped;
        continue;
      }
      try {
        scores.push_back({posterior(seq, p.z, models[f]), *p.label});
      } catch (const DataError& e) {
        throw DataError("fold " + std::to_string(f) + ", patient " + p.patient_id + ": " + e.what());
      }
    }
    try {
      fr.metrics = compute_metrics(scores, options.threshold);
    } catch (const DataError& e) {
      throw DataError("fold " + std::to_string(f) + ": " + e.what());
    }
    report.pooled += fr.metrics.confusion;
    report.skipped += fr.skipped;
    report.mean_auc += fr.metrics.auc;
    report.mean_f_score += fr.metrics.f_score;
    report.mean_g_means += fr.metrics.g_means;
    report.folds.push_back(fr);
  }
  const auto n = static_cast<double>(report.folds.size());
  report.mean_auc /= n;
  report.mean_f_score /= n;
  report.mean_g_means /= n;
  return report;
}

CvReport cross_validate(std::span<const PatientSequence> data, const FoldPlan& plan,
                        const TrainConfig& config, std::optional<double> truncate_hours,
                        const EvalOptions& options) {
  const auto models = train_folds(data, plan, config, options);
  return evaluate_folds(data, plan, models, truncate_hours, options);
}

std::vector<double> default_early_hours() {
  std::vector<double> h;
  for (int v = 24; v <= 72; v += 4) h.push_back(v);
  return h;
}

std::vector<EarlyCurvePoint> early_curve(std::span<const PatientSequence> data, const FoldPlan& plan,
                                         const TrainConfig& config, std::span<const double> hours,
                                         const EvalOptions& options) {
  const auto models = train_folds(data, plan, config, options);
  std::vector<EarlyCurvePoint> points;
  for (double h : hours) {
    const CvReport r = evaluate_folds(data, plan, models, h, options);
    points.push_back({h, r.mean_auc, r.mean_f_score, r.mean_g_means, r.skipped});
  }
  return points;
}

std::vector<PrevalenceRow> state_prevalence(std::span<const PatientSequence> sequences,
                                            const HmmParams& params) {
  if (sequences.empty()) throw DataError("state prevalence needs at least one sequence");
  const std::size_t k = params.n_states;
  std::vector<std::vector<std::size_t>> counts;
  for (const auto& p : sequences) {
    const ViterbiPath path =
        viterbi(p.seq, params.initial_distribution(p.z), params.transition_matrix(p.z), params.theta3);
    if (counts.size() < path.states.size()) counts.resize(path.states.size(), std::vector<std::size_t>(k, 0));
    for (std::size_t t = 0; t < path.states.size(); ++t) ++counts[t][path.states[t]];
  }
  std::vector<PrevalenceRow> rows;
  rows.reserve(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) {
    PrevalenceRow row;
    row.bin = t;
    row.hours = 4.0 * static_cast<double>(t);
    row.n_patients = std::accumulate(counts[t].begin(), counts[t].end(), std::size_t{0});
    row.shares.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      row.shares[j] = static_cast<double>(counts[t][j]) / static_cast<double>(row.n_patients);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

nlohmann::json confusion_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

}  // namespace

std::string cv_report_json(const CvReport& report) {
  using nlohmann::json;
  json j = json::object();
  j["k"] = report.k;
  j["seed"] = report.seed;
  j["threshold"] = report.threshold;
  j["truncate_hours"] = report.truncate_hours ? json(*report.truncate_hours) : json(nullptr);
  json folds = json::array();
  for (const auto& f : report.folds) {
    folds.push_back({{"fold", f.fold},
                     {"n_train", f.n_train},
                     {"n_test", f.metrics.n_test},
                     {"prior_c", f.prior_c},
                     {"auc", f.metrics.auc},
                     {"f_score", f.metrics.f_score},
                     {"g_means", f.metrics.g_means},
                     {"confusion", confusion_json(f.metrics.confusion)},
                     {"skipped", f.skipped}});
  }
  j["folds"] = std::move(folds);
  j["mean"] = {{"auc", report.mean_auc}, {"f_score", report.mean_f_score}, {"g_means", report.mean_g_means}};
  j["pooled_confusion"] = confusion_json(report.pooled);
  j["skipped"] = report.skipped;
  return j.dump(2) + "\n";
}

std::string cv_report_text(const CvReport& report) {
  std::ostringstream out;
  out << "cross-validation: k=" << report.k << " seed=" << report.seed
      << " threshold=" << io::format_fixed(report.threshold, 2) << " horizon="
      << (report.truncate_hours ? io::format_fixed(*report.truncate_hours, 0) + "h" : std::string("full"))
      << "\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-6s %7s %7s %7s %7s %5s %5s %5s %5s %7s\n", "fold", "n_test", "prior",
                "auc", "f", "tp", "fp", "tn", "fn", "skipped");
  out << line;
  for (const auto& f : report.folds) {
    const auto& c = f.metrics.confusion;
    std::snprintf(line, sizeof(line), "%-6zu %7zu %7.3f %7.3f %7.3f %5zu %5zu %5zu %5zu %7zu\n", f.fold,
                  f.metrics.n_test, f.prior_c, f.metrics.auc, f.metrics.f_score, c.tp, c.fp, c.tn, c.fn,
                  f.skipped);
    out << line;
  }
  std::snprintf(line, sizeof(line), "mean   auc=%.3f f_score=%.3f g_means=%.3f\n", report.mean_auc,
                report.mean_f_score, report.mean_g_means);
  out << line;
  return out.str();
}

std::string early_curve_csv(std::span<const EarlyCurvePoint> points) {
  std::string out = "hours,auc,f_score,g_means\n";
  for (const auto& p : points) {
    out += io::format_double(p.hours) + "," + io::format_double(p.auc) + "," + io::format_double(p.f_score) +
           "," + io::format_double(p.g_means) + "\n";
  }
  return out;
}

std::string prevalence_csv(std::span<const PrevalenceRow> rows) {
  std::string out = "bin,hours";
  const std::size_t k = rows.empty() ? kDefaultStates : rows.front().shares.size();
  for (std::size_t j = 0; j < k; ++j) out += ",share_s" + std::to_string(j + 1);
  out += "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.bin) + "," + io::format_double(r.hours);
    for (double s : r.shares) out += "," + io::format_double(s);
    out += "\n";
  }
  return out;
}

}  // namespace covhmm
