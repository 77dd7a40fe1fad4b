#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "covhmm/error.hpp"
#include "covhmm/evaluation.hpp"
#include "covhmm/synthgen.hpp"

using namespace covhmm;

namespace {

// Direct pair enumeration: P(score_C > score_NC) + 0.5 P(tie).
double auc_pairs(const std::vector<ScoredLabel>& s) {
  double wins = 0.0, pairs = 0.0;
  for (const auto& a : s) {
    if (a.label != Label::C) continue;
    for (const auto& b : s) {
      if (b.label != Label::NC) continue;
      pairs += 1.0;
      if (a.score > b.score) wins += 1.0;
      else if (a.score == b.score) wins += 0.5;
    }
  }
  return wins / pairs;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.n_restarts = 1;
  c.max_em_iters = 8;
  return c;
}

}  // namespace

TEST_CASE("metric examples") {
  ConfusionCounts c{3, 2, 4, 1};
  CHECK(g_means(c) == doctest::Approx(0.707106781186547524).epsilon(1e-15));
  CHECK(f_score(ConfusionCounts{3, 2, 0, 1}) == doctest::Approx(0.666666666666666667).epsilon(1e-15));
  CHECK(f_score(ConfusionCounts{0, 2, 5, 3}) == 0.0);
  CHECK_THROWS_AS(f_score(ConfusionCounts{0, 0, 5, 0}), UndefinedMetric);
  CHECK_THROWS_AS(g_means(ConfusionCounts{0, 1, 5, 0}), UndefinedMetric);
  CHECK_THROWS_AS(g_means(ConfusionCounts{3, 0, 0, 1}), UndefinedMetric);
  ConfusionCounts sum = c;
  sum += ConfusionCounts{1, 1, 1, 1};
  CHECK(sum == ConfusionCounts{4, 3, 5, 2});
  CHECK(sum.total() == 14);
}

TEST_CASE("metrics equal correctly rounded reference values") {
  // Reference values evaluated to 21 digits in arbitrary precision.
  struct Case {
    ConfusionCounts c;
    double g, f;
  };
  const Case cases[] = {
      {{3, 2, 4, 1}, 0.707106781186547524401, 0.666666666666666666667},
      {{10, 5, 80, 5}, 0.792118034381339447323, 0.666666666666666666667},
      {{1, 0, 1, 0}, 1.0, 1.0},
      {{7, 3, 90, 11}, 0.613468895724555358931, 0.5},
      {{25, 10, 100, 15}, 0.753778361444409056617, 0.666666666666666666667},
      {{0, 5, 20, 5}, 0.0, 0.0},
      {{12, 12, 12, 12}, 0.5, 0.5},
      {{9, 1, 30, 3}, 0.851942751370597216731, 0.818181818181818181818},
      {{50, 25, 400, 30}, 0.76696498884737043701, 0.645161290322580645161},
      {{2, 7, 41, 1}, 0.754615428178118052214, 0.333333333333333333333},
  };
  for (const auto& k : cases) {
    CHECK(g_means(k.c) == k.g);
    CHECK(f_score(k.c) == k.f);
  }
}

TEST_CASE("AUC matches pair enumeration, with ties") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> coarse(0, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScoredLabel> s;
    const int n = 2 + trial % 25;
    for (int i = 0; i < n; ++i) {
      const double score = trial % 2 ? coarse(rng) / 5.0 : u(rng);
      s.push_back({score, u(rng) < 0.4 ? Label::C : Label::NC});
    }
    s.push_back({u(rng), Label::C});
    s.push_back({u(rng), Label::NC});
    const double a = auc(s);
    CHECK(std::abs(a - auc_pairs(s)) <= 1e-12);
    std::shuffle(s.begin(), s.end(), rng);
    CHECK(auc(s) == a);
  }
  const std::vector<ScoredLabel> one{{0.2, Label::C}, {0.3, Label::C}};
  CHECK_THROWS_AS(auc(one), SingleClassError);
}

TEST_CASE("confusion counts use an inclusive threshold") {
  const std::vector<ScoredLabel> s{{0.5, Label::C}, {0.49, Label::C}, {0.5, Label::NC}, {0.1, Label::NC}};
  CHECK(confusion_at(s, 0.5) == ConfusionCounts{1, 1, 1, 1});
  const auto m = compute_metrics(s, 0.5);
  CHECK(m.n_test == 4);
  CHECK(m.auc == doctest::Approx(auc_pairs(s)));
  CHECK(m.g_means == doctest::Approx(0.5));
}

TEST_CASE("fold plans are stratified partitions") {
  const auto data = generate(scenario("reference", 103, 8)).patients;
  const std::size_t n_c = count_label(data, Label::C);
  const auto plan = make_fold_plan(data, 5, 99);
  REQUIRE(plan.folds.size() == 5);
  std::multiset<std::size_t> all_test;
  for (const auto& f : plan.folds) {
    CHECK(f.train.size() + f.test.size() == data.size());
    std::set<std::size_t> tr(f.train.begin(), f.train.end());
    for (std::size_t i : f.test) {
      CHECK_FALSE(tr.count(i));
      all_test.insert(i);
    }
    std::size_t c = 0;
    for (std::size_t i : f.test) c += data[i].label == Label::C;
    CHECK(c >= n_c / 5);
    CHECK(c <= n_c / 5 + 1);
  }
  CHECK(all_test.size() == data.size());
  CHECK(std::set<std::size_t>(all_test.begin(), all_test.end()).size() == data.size());

  const auto again = make_fold_plan(data, 5, 99);
  for (std::size_t f = 0; f < 5; ++f) CHECK(again.folds[f].test == plan.folds[f].test);
  const auto other = make_fold_plan(data, 5, 100);
  bool differs = false;
  for (std::size_t f = 0; f < 5; ++f) differs |= other.folds[f].test != plan.folds[f].test;
  CHECK(differs);

  std::vector<PatientSequence> few(data.begin(), data.begin() + 12);
  CHECK_THROWS_AS(make_fold_plan(few, 12, 1), SingleClassError);
  CHECK_THROWS_AS(make_fold_plan(data, 1, 1), InvalidArgument);
}

TEST_CASE("truncated evaluation scores prefixes with the fold models") {
  const auto data = generate(scenario("separated", 60, 3)).patients;
  const auto plan = make_fold_plan(data, 3, 5);
  const auto models = train_folds(data, plan, small_config(1));
  REQUIRE(models.size() == 3);
  const auto report = evaluate_folds(data, plan, models, 24.0);
  CHECK(report.truncate_hours == 24.0);
  for (std::size_t f = 0; f < 3; ++f) {
    std::vector<ScoredLabel> s;
    for (std::size_t i : plan.folds[f].test) {
      const auto prefix = data[i].seq.prefix(std::min<std::size_t>(6, data[i].seq.size()));
      CHECK(prefix.size() <= 6);
      s.push_back({posterior(prefix, data[i].z, models[f]), *data[i].label});
    }
    CHECK(report.folds[f].metrics.auc == doctest::Approx(auc(s)).epsilon(1e-14));
  }
  // 240 h is the whole record.
  const auto full = evaluate_folds(data, plan, models, std::nullopt);
  const auto at240 = evaluate_folds(data, plan, models, 240.0);
  for (std::size_t f = 0; f < 3; ++f) CHECK(full.folds[f].metrics.auc == at240.folds[f].metrics.auc);
  double mean = 0.0;
  for (const auto& f : full.folds) mean += f.metrics.auc;
  CHECK(full.mean_auc == doctest::Approx(mean / 3.0));
}

TEST_CASE("cross-validation is deterministic across job counts") {
  const auto data = generate(scenario("reference", 50, 21)).patients;
  const auto plan = make_fold_plan(data, 3, 7);
  const auto a = cross_validate(data, plan, small_config(4));
  EvalOptions opt;
  opt.jobs = 3;
  const auto b = cross_validate(data, plan, small_config(4), std::nullopt, opt);
  CHECK(cv_report_json(a) == cv_report_json(b));
  CHECK(cv_report_text(a) == cv_report_text(b));
  CHECK(a.pooled.total() == data.size());
}

TEST_CASE("early curve reuses fold models across horizons") {
  const auto data = generate(scenario("separated", 45, 6)).patients;
  const auto plan = make_fold_plan(data, 3, 2);
  const std::vector<double> hours{24.0, 48.0};
  const auto curve = early_curve(data, plan, small_config(3), hours);
  REQUIRE(curve.size() == 2);
  const auto models = train_folds(data, plan, small_config(3));
  const auto at48 = evaluate_folds(data, plan, models, 48.0);
  CHECK(curve[1].hours == 48.0);
  CHECK(curve[1].auc == at48.mean_auc);
  const auto csv = early_curve_csv(curve);
  CHECK(csv.rfind("hours,auc,f_score,g_means\n", 0) == 0);
  const auto defaults = default_early_hours();
  CHECK(defaults.size() == 13);
  CHECK(defaults.front() == 24.0);
  CHECK(defaults.back() == 72.0);
}

TEST_CASE("state prevalence rows are shares of Viterbi states") {
  const auto data = generate(scenario("reference", 40, 12)).patients;
  const HmmParams params = reference_params(Label::NC);
  const auto rows = state_prevalence(data, params);
  std::size_t longest = 0;
  for (const auto& p : data) longest = std::max(longest, p.seq.size());
  REQUIRE(rows.size() == longest);
  std::vector<std::vector<std::size_t>> counts(longest, std::vector<std::size_t>(3, 0));
  for (const auto& p : data) {
    const auto path = viterbi(p.seq, params.initial_distribution(p.z), params.transition_matrix(p.z), params.theta3);
    for (std::size_t t = 0; t < path.states.size(); ++t) ++counts[t][path.states[t]];
  }
  for (std::size_t t = 0; t < longest; ++t) {
    CHECK(rows[t].bin == t);
    CHECK(rows[t].hours == 4.0 * static_cast<double>(t));
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < 3; ++s) n += counts[t][s];
    CHECK(rows[t].n_patients == n);
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(rows[t].shares[s] == doctest::Approx(static_cast<double>(counts[t][s]) / static_cast<double>(n)));
      sum += rows[t].shares[s];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(prevalence_csv(rows).rfind("bin,hours,share_s1,share_s2,share_s3\n", 0) == 0);
}
