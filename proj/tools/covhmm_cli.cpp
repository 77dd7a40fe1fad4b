// covhmm: command-line front end for the covariate HMM classifier.
//
// Exit status: 0 on success, 1 on data errors (unreadable or invalid input,
// degenerate fits), 2 on usage errors.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "covhmm/classifier.hpp"
#include "covhmm/dataset.hpp"
#include "covhmm/error.hpp"
#include "covhmm/evaluation.hpp"
#include "covhmm/ingest.hpp"
#include "covhmm/io.hpp"
#include "covhmm/model_io.hpp"
#include "covhmm/parallel.hpp"
#include "covhmm/synthgen.hpp"

namespace fs = std::filesystem;
using namespace covhmm;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainFlags {
  std::optional<std::uint64_t> seed;
  int max_iters = 200;
  double tol = 1e-6;
  std::size_t restarts = 5;
  double l2 = 1e-4;
  std::size_t jobs = default_jobs();

  TrainConfig config() const {
    TrainConfig c;
    c.seed = *seed;
    c.max_em_iters = max_iters;
    c.loglik_rel_tol = tol;
    c.n_restarts = restarts;
    c.l2 = l2;
    c.jobs = jobs;
    return c;
  }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--seed", f.seed, "Random seed for restarts, oversampling and folds")->required();
  cmd->add_option("--max-iters", f.max_iters, "Maximum EM iterations per restart")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tol", f.tol, "Stop when the relative objective gain falls below this")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--restarts", f.restarts, "EM restarts per class model")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--l2", f.l2, "L2 penalty on logit coefficients")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
}

void add_jobs_flag(CLI::App* cmd, std::size_t& jobs) {
  cmd->add_option("--jobs", jobs, "Worker threads (default: available cores)")->check(CLI::PositiveNumber);
}

CLI::Option* add_prior_flag(CLI::App* cmd, std::optional<double>& prior) {
  return cmd->add_option("--prior", prior, "Override P(C); must lie in (0, 1)")
      ->check(CLI::Range(0.0, 1.0));
}

CLI::Option* add_out_flag(CLI::App* cmd, std::string& out, const std::string& what) {
  return cmd->add_option("--out", out, what)->required();
}

void check_prior(const std::optional<double>& prior) {
  if (prior && !(*prior > 0.0 && *prior < 1.0)) throw UsageError("--prior must lie strictly between 0 and 1");
}

// The output directory must exist before any work starts.
void check_out_path(const std::string& out) {
  const fs::path parent = fs::path(out).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw UsageError("--out: directory '" + parent.string() + "' does not exist");
  }
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

std::vector<double> parse_hours(const std::string& text) {
  std::vector<double> hours;
  for (auto part : io::split(text, ',')) {
    part = io::trim(part);
    double h = 0.0;
    try {
      h = io::parse_double(part, "--hours");
    } catch (const DataError&) {
      throw UsageError("--hours: cannot parse '" + std::string(part) + "'");
    }
    if (!(h > 0.0)) throw UsageError("--hours: values must be positive");
    hours.push_back(h);
  }
  if (hours.empty()) throw UsageError("--hours: no values given");
  return hours;
}

ClassifierPair with_prior(ClassifierPair pair, const std::optional<double>& prior) {
  if (prior) pair.prior_c = *prior;
  return pair;
}

// ---------------------------------------------------------------- commands

struct IngestArgs {
  std::string measurements, covariates, out;
};

void run_ingest(const IngestArgs& a) {
  check_out_path(a.out);
  const auto result = build_dataset(read_measurements_csv(a.measurements), read_covariates_csv(a.covariates));
  print_warnings(result.warnings);
  if (result.patients.empty()) throw DataError("no patients left after ingest");
  write_dataset(a.out, result.patients);
  std::cerr << "wrote " << result.patients.size() << " patients to " << a.out << "\n";
}

struct SynthArgs {
  std::string scenario = "reference";
  std::size_t n = 600;
  std::optional<std::uint64_t> seed;
  std::optional<double> prevalence;
  std::optional<std::size_t> min_len, max_len;
  std::optional<double> missing_rate;
  std::string out, truth;
};

void run_synth(const SynthArgs& a) {
  check_out_path(a.out);
  if (!a.truth.empty()) check_out_path(a.truth);
  GeneratorSpec spec;
  try {
    spec = scenario(a.scenario, a.n, *a.seed);
    if (a.prevalence) spec.prevalence = *a.prevalence;
    if (a.min_len) spec.min_len = *a.min_len;
    if (a.max_len) spec.max_len = *a.max_len;
    if (a.missing_rate) spec.missing_rate = *a.missing_rate;
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto data = generate(spec);
  write_dataset(a.out, data.patients);
  if (!a.truth.empty()) io::write_file_atomic(a.truth, truth_json(spec, data));
}

struct TrainArgs {
  std::string data, out;
  TrainFlags train;
  std::optional<double> prior;
};

void run_train(const TrainArgs& a) {
  check_out_path(a.out);
  check_prior(a.prior);
  const auto data = read_dataset(a.data);
  const ClassifierPair pair = train_classifier(data, a.train.config(), a.prior);
  save_classifier(a.out, pair);
  std::cerr << "trained on " << data.size() << " patients (C " << count_label(data, Label::C) << ", NC "
            << count_label(data, Label::NC) << "), prior_c=" << io::format_double(pair.prior_c) << "\n";
}

struct ClassifyArgs {
  std::string data, model, out;
  double threshold = 0.5;
  std::optional<double> prior;
};

void run_classify(const ClassifyArgs& a) {
  check_out_path(a.out);
  check_prior(a.prior);
  const auto data = read_dataset(a.data);
  const ClassifierPair pair = with_prior(load_classifier(a.model), a.prior);
  std::string csv = "patient_id,label,posterior_c,predicted\n";
  for (const auto& p : data) {
    double post = 0.0;
    try {
      post = posterior(p.seq, p.z, pair);
    } catch (const DataError& e) {
      throw DataError("patient " + p.patient_id + ": " + e.what());
    }
    csv += p.patient_id + "," + (p.label ? std::string(to_string(*p.label)) : std::string()) + "," +
           io::format_double(post) + "," + std::string(to_string(label_for(post, a.threshold))) + "\n";
  }
  io::write_file_atomic(a.out, csv);
}

struct StreamArgs {
  std::string measurements, covariates, patient, model, out;
  std::optional<double> prior;
};

void run_score_stream(const StreamArgs& a) {
  check_out_path(a.out);
  check_prior(a.prior);
  const ClassifierPair pair = with_prior(load_classifier(a.model), a.prior);
  const auto table = read_measurements_csv(a.measurements);
  print_warnings(table.warnings);
  const auto covariates = read_covariates_csv(a.covariates);
  const auto it = covariates.rows.find(a.patient);
  if (it == covariates.rows.end()) throw DataError("patient " + a.patient + ": no covariate row");
  std::vector<RawMeasurement> rows;
  for (const auto& m : table.rows) {
    if (m.patient_id == a.patient) rows.push_back(m);
  }
  if (rows.empty()) throw DataError("patient " + a.patient + ": no measurements");
  const PatientSequence p = build_patient(a.patient, rows, it->second);
  const auto series = risk_series(p.seq, p.z, pair);
  std::string csv = "bin,hours,temp_f,risk_c\n";
  for (std::size_t t = 0; t < series.scores.size(); ++t) {
    csv += std::to_string(t) + "," + io::format_double(kBinHours * static_cast<double>(t + 1)) + "," +
           (p.seq.observed[t] ? io::format_double(p.seq.values[t]) : std::string()) + "," +
           io::format_double(series.scores[t]) + "\n";
  }
  io::write_file_atomic(a.out, csv);
}

struct EvaluateArgs {
  std::string data, out, text_out;
  std::size_t k = 5;
  TrainFlags train;
  double threshold = 0.5;
  std::optional<double> hours;
};

void run_evaluate(const EvaluateArgs& a) {
  check_out_path(a.out);
  if (!a.text_out.empty()) check_out_path(a.text_out);
  if (a.hours && !(*a.hours > 0.0)) throw UsageError("--hours must be positive");
  const auto data = read_dataset(a.data);
  const FoldPlan plan = make_fold_plan(data, a.k, *a.train.seed);
  const CvReport report = cross_validate(data, plan, a.train.config(), a.hours, {a.threshold, a.train.jobs});
  const std::string text = cv_report_text(report);
  io::write_file_atomic(a.out, cv_report_json(report));
  if (!a.text_out.empty()) io::write_file_atomic(a.text_out, text);
  std::cout << text;
}

struct EarlyArgs {
  std::string data, out, hours;
  std::size_t k = 5;
  TrainFlags train;
  double threshold = 0.5;
};

void run_early_curve(const EarlyArgs& a) {
  check_out_path(a.out);
  const std::vector<double> hours = a.hours.empty() ? default_early_hours() : parse_hours(a.hours);
  const auto data = read_dataset(a.data);
  const FoldPlan plan = make_fold_plan(data, a.k, *a.train.seed);
  const auto curve = early_curve(data, plan, a.train.config(), hours, {a.threshold, a.train.jobs});
  io::write_file_atomic(a.out, early_curve_csv(curve));
}

struct PrevalenceArgs {
  std::string data, model, out, label = "C";
  bool all = false;
};

void run_prevalence(const PrevalenceArgs& a) {
  check_out_path(a.out);
  const Label label = parse_label(a.label);
  const ClassifierPair pair = load_classifier(a.model);
  const auto data = read_dataset(a.data);
  std::vector<PatientSequence> subset;
  for (const auto& p : data) {
    if (a.all || p.label == label) subset.push_back(p);
  }
  if (subset.empty()) throw DataError("no patients labelled " + a.label + " in " + a.data);
  const auto rows = state_prevalence(subset, label == Label::C ? pair.lambda_c : pair.lambda_nc);
  io::write_file_atomic(a.out, prevalence_csv(rows));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-conditioned HMM sequence classifier for post-operative temperature series."};
  app.name("covhmm");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("covhmm 1.0"));

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Bin raw measurements into a JSON-lines dataset");
  c_ingest->add_option("--measurements", ingest.measurements, "CSV: patient_id,hours_since_surgery,temp_f")
      ->required()
      ->check(CLI::ExistingFile);
  c_ingest->add_option("--covariates", ingest.covariates, "CSV with one row of covariates and label per patient")
      ->required()
      ->check(CLI::ExistingFile);
  add_out_flag(c_ingest, ingest.out, "Dataset to write (JSON lines)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic cohort from known parameters");
  c_synth->add_option("--scenario", synth.scenario, "reference, separated, null or delayed")
      ->capture_default_str()
      ->check(CLI::IsMember(scenario_names()));
  c_synth->add_option("--n", synth.n, "Number of patients")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Random seed")->required();
  c_synth->add_option("--prevalence", synth.prevalence, "Probability of class C (scenario default 0.24)");
  c_synth->add_option("--min-len", synth.min_len, "Shortest sequence in 4 h bins");
  c_synth->add_option("--max-len", synth.max_len, "Longest sequence in 4 h bins (at most 60)");
  c_synth->add_option("--missing-rate", synth.missing_rate, "Probability that a bin is missing");
  add_out_flag(c_synth, synth.out, "Dataset to write (JSON lines)");
  c_synth->add_option("--truth", synth.truth, "Also write generating parameters and true states as JSON");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Fit the C and NC models and save a classifier");
  c_train->add_option("--data", train.data, "Labelled dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  add_train_flags(c_train, train.train);
  add_prior_flag(c_train, train.prior);
  add_jobs_flag(c_train, train.train.jobs);
  add_out_flag(c_train, train.out, "Classifier JSON to write");

  ClassifyArgs classify;
  auto* c_classify = app.add_subcommand("classify", "Posterior P(C) for every patient in a dataset");
  c_classify->add_option("--data", classify.data, "Dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  c_classify->add_option("--model", classify.model, "Classifier JSON")->required()->check(CLI::ExistingFile);
  c_classify->add_option("--threshold", classify.threshold, "Predict C when P(C) >= threshold")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  add_prior_flag(c_classify, classify.prior);
  add_out_flag(c_classify, classify.out, "CSV: patient_id,label,posterior_c,predicted");

  StreamArgs stream;
  auto* c_stream = app.add_subcommand("score-stream", "Risk score after each 4 h bin for one patient");
  c_stream->add_option("--measurements", stream.measurements, "CSV: patient_id,hours_since_surgery,temp_f")
      ->required()
      ->check(CLI::ExistingFile);
  c_stream->add_option("--covariates", stream.covariates, "Covariate CSV containing the patient")
      ->required()
      ->check(CLI::ExistingFile);
  c_stream->add_option("--patient", stream.patient, "Patient id to score")->required();
  c_stream->add_option("--model", stream.model, "Classifier JSON")->required()->check(CLI::ExistingFile);
  add_prior_flag(c_stream, stream.prior);
  add_out_flag(c_stream, stream.out, "CSV: bin,hours,temp_f,risk_c");

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Stratified k-fold cross-validation report");
  c_eval->add_option("--data", evaluate.data, "Labelled dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--k", evaluate.k, "Number of folds")->capture_default_str()->check(CLI::Range(2, 1000));
  add_train_flags(c_eval, evaluate.train);
  c_eval->add_option("--threshold", evaluate.threshold, "Predict C when P(C) >= threshold")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  c_eval->add_option("--hours", evaluate.hours, "Score only the first H hours of each test sequence");
  add_jobs_flag(c_eval, evaluate.train.jobs);
  add_out_flag(c_eval, evaluate.out, "JSON report to write");
  c_eval->add_option("--text-out", evaluate.text_out, "Also write the text report here");

  EarlyArgs early;
  auto* c_early = app.add_subcommand("early-curve", "Cross-validated metrics on truncated test sequences");
  c_early->add_option("--data", early.data, "Labelled dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  c_early->add_option("--k", early.k, "Number of folds")->capture_default_str()->check(CLI::Range(2, 1000));
  add_train_flags(c_early, early.train);
  c_early->add_option("--threshold", early.threshold, "Predict C when P(C) >= threshold")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  c_early->add_option("--hours", early.hours, "Comma-separated horizons in hours (default 24,28,...,72)");
  add_jobs_flag(c_early, early.train.jobs);
  add_out_flag(c_early, early.out, "CSV: hours,auc,f_score,g_means");

  PrevalenceArgs prev;
  auto* c_prev = app.add_subcommand("prevalence", "Share of Viterbi states per bin for one class");
  c_prev->add_option("--data", prev.data, "Dataset (JSON lines)")->required()->check(CLI::ExistingFile);
  c_prev->add_option("--model", prev.model, "Classifier JSON")->required()->check(CLI::ExistingFile);
  c_prev->add_option("--class", prev.label, "Class model and patients to decode: C or NC")
      ->capture_default_str()
      ->check(CLI::IsMember({"C", "NC"}));
  c_prev->add_flag("--all", prev.all, "Decode every patient, not only those labelled with --class");
  add_out_flag(c_prev, prev.out, "CSV: bin,hours,share_s1,share_s2,share_s3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_ingest) run_ingest(ingest);
    else if (*c_synth) run_synth(synth);
    else if (*c_train) run_train(train);
    else if (*c_classify) run_classify(classify);
    else if (*c_stream) run_score_stream(stream);
    else if (*c_eval) run_evaluate(evaluate);
    else if (*c_early) run_early_curve(early);
    else if (*c_prev) run_prevalence(prev);
  } catch (const UsageError& e) {
    std::cerr << "covhmm: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "covhmm: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "covhmm: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "covhmm: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
