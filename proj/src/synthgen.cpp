#include "covhmm/synthgen.hpp"

#include <json.hpp>

#include <cmath>
#include <random>

#include "covhmm/error.hpp"
#include "covhmm/model_io.hpp"
#include "covhmm/random.hpp"

namespace covhmm {

Standardization CovariateSampler::population_standardization() const {
  Standardization s = Standardization::identity();
  s.mean[1] = 0.5 * (age_min + age_max);
  s.sd[1] = age_max > age_min ? (age_max - age_min) / std::sqrt(12.0) : 1.0;
  s.mean[2] = 0.5 * (hours_min + hours_max);
  s.sd[2] = hours_max > hours_min ? (hours_max - hours_min) / std::sqrt(12.0) : 1.0;
  return s;
}

void GeneratorSpec::validate() const {
  class_c.validate();
  class_nc.validate();
  if (class_c.n_states != class_nc.n_states) throw InvalidArgument("generator models disagree on state count");
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw InvalidArgument("prevalence must lie in (0, 1)");
  if (min_len < 1 || max_len > kMaxBins || min_len > max_len) {
    throw InvalidArgument("sequence length range must satisfy 1 <= min <= max <= 60");
  }
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw InvalidArgument("missing rate must lie in [0, 1)");
  if (covariates.age_min < 0.0 || covariates.age_max < covariates.age_min || covariates.hours_min < 0.0 ||
      covariates.hours_max < covariates.hours_min) {
    throw InvalidArgument("covariate sampler ranges are invalid");
  }
  auto rate_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!rate_ok(covariates.gender_rate)) throw InvalidArgument("gender rate must lie in [0, 1]");
  for (double p : covariates.flag_rates) {
    if (!rate_ok(p)) throw InvalidArgument("comorbidity rates must lie in [0, 1]");
  }
}

namespace {

std::size_t draw_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the running sum: take the last state with mass.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

bool bernoulli(double p, std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

CovariateVector sample_covariates(const CovariateSampler& s, std::mt19937_64& rng) {
  CovariateVector z;
  z.age = std::uniform_real_distribution<double>(s.age_min, s.age_max)(rng);
  z.gender = bernoulli(s.gender_rate, rng);
  z.surgery_hours = std::uniform_real_distribution<double>(s.hours_min, s.hours_max)(rng);
  for (std::size_t f = 0; f < kComorbidityCount; ++f) z.comorbidities[f] = bernoulli(s.flag_rates[f], rng);
  return z;
}

}  // namespace

SyntheticDataset generate(const GeneratorSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  out.patients.reserve(spec.n_patients);
  out.true_states.reserve(spec.n_patients);
  const std::size_t width = std::to_string(spec.n_patients).size();

  for (std::size_t n = 0; n < spec.n_patients; ++n) {
    std::mt19937_64 rng(derive_seed(spec.seed, n));
    PatientSequence p;
    std::string id = std::to_string(n);
    p.patient_id = "P" + std::string(width - id.size(), '0') + id;
    p.z = sample_covariates(spec.covariates, rng);
    const bool is_c = bernoulli(spec.prevalence, rng);
    p.label = is_c ? Label::C : Label::NC;
    const std::size_t length =
        std::uniform_int_distribution<std::size_t>(spec.min_len, spec.max_len)(rng);

    const HmmParams& own = is_c ? spec.class_c : spec.class_nc;
    const std::size_t switch_bin = is_c ? spec.divergence_bin : 0;
    const HmmParams& early = switch_bin > 0 ? spec.class_nc : own;
    const StateDistribution init = early.initial_distribution(p.z);
    const TransitionMatrix trans_early = early.transition_matrix(p.z);
    const TransitionMatrix trans_own = own.transition_matrix(p.z);

    std::vector<std::size_t> states(length);
    p.seq.values.resize(length);
    p.seq.observed.assign(length, true);
    for (std::size_t t = 0; t < length; ++t) {
      const bool diverged = t >= switch_bin;
      if (t == 0) {
        states[t] = draw_categorical(init.probs, rng);
      } else {
        const TransitionMatrix& trans = diverged ? trans_own : trans_early;
        states[t] = draw_categorical(trans.row(states[t - 1]), rng);
      }
      const EmissionParams& emit = diverged ? own.theta3 : early.theta3;
      p.seq.values[t] =
          std::normal_distribution<double>(emit.mu[states[t]], emit.sigma[states[t]])(rng);
      if (spec.missing_rate > 0.0 && bernoulli(spec.missing_rate, rng)) p.seq.observed[t] = false;
    }
    if (p.seq.n_observed() == 0) p.seq.observed[0] = true;
    for (std::size_t t = 0; t < length; ++t) {
      if (!p.seq.observed[t]) p.seq.values[t] = 0.0;
    }
    out.patients.push_back(std::move(p));
    out.true_states.push_back(std::move(states));
  }
  return out;
}

HmmParams reference_params(Label label) {
  const Standardization std_pop = CovariateSampler{}.population_standardization();
  // Covariate columns: 0 gender, 1 age, 2 surgery_hours, 3.. comorbidities.
  if (label == Label::C) {
    HmmParams p = HmmParams::uniform({{97.793, 98.582, 99.813}, {0.434, 0.435, 1.092}}, std_pop);
    p.theta1.intercept(1) = 0.3;
    p.theta1.coef(1, 1) = 0.8;
    p.theta1.intercept(2) = -1.0;
    p.theta1.coef(2, 0) = -0.6;
    p.theta1.coef(2, 2) = 0.7;

    p.theta2[0].intercept(1) = -1.5;
    p.theta2[0].intercept(2) = -3.0;
    p.theta2[0].coef(1, 1) = 0.6;
    p.theta2[1].intercept(1) = 2.0;
    p.theta2[1].intercept(2) = -0.5;
    p.theta2[1].coef(2, 2) = 0.8;
    p.theta2[2].intercept(1) = 1.0;
    p.theta2[2].intercept(2) = 2.5;
    p.theta2[2].coef(2, 0) = -0.5;
    return p;
  }
  HmmParams p = HmmParams::uniform({{97.724, 98.497, 99.371}, {0.432, 0.372, 0.900}}, std_pop);
  p.theta1.intercept(1) = 0.5;
  p.theta1.coef(1, 1) = 0.5;
  p.theta1.intercept(2) = -2.0;
  p.theta1.coef(2, 2) = 0.5;

  p.theta2[0].intercept(1) = -1.0;
  p.theta2[0].intercept(2) = -4.0;
  p.theta2[0].coef(1, 1) = 0.5;
  p.theta2[1].intercept(1) = 1.5;
  p.theta2[1].intercept(2) = -2.0;
  p.theta2[1].coef(2, 2) = 0.5;
  p.theta2[2].intercept(1) = 1.5;
  p.theta2[2].intercept(2) = 1.0;
  return p;
}

std::vector<std::string> scenario_names() { return {"reference", "separated", "null", "delayed"}; }

GeneratorSpec scenario(std::string_view name, std::size_t n_patients, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.n_patients = n_patients;
  spec.seed = seed;
  spec.class_c = reference_params(Label::C);
  spec.class_nc = reference_params(Label::NC);
  if (name == "reference") {
    spec.missing_rate = 0.06;
  } else if (name == "separated") {
    spec.class_c.theta3.mu[2] = spec.class_nc.theta3.mu[2] + 1.5;
    spec.missing_rate = 0.06;
  } else if (name == "null") {
    spec.class_c = spec.class_nc;
    spec.missing_rate = 0.06;
  } else if (name == "delayed") {
    // After the switch, class C drifts into a hot high-risk state and stays.
    spec.class_c.theta2[0].intercept(2) = 0.0;
    spec.class_c.theta2[1].intercept(2) = 1.0;
    spec.class_c.theta2[2].intercept(2) = 3.0;
    spec.class_c.theta3.mu[2] = 100.3;
    spec.divergence_bin = 10;
    spec.min_len = 30;
    spec.missing_rate = 0.06;
  } else {
    throw InvalidArgument("unknown scenario '" + std::string(name) + "'");
  }
  return spec;
}

std::string truth_json(const GeneratorSpec& spec, const SyntheticDataset& data) {
  using nlohmann::json;
  json j = json::object();
  j["seed"] = spec.seed;
  j["n_patients"] = spec.n_patients;
  j["prevalence"] = spec.prevalence;
  j["min_len"] = spec.min_len;
  j["max_len"] = spec.max_len;
  j["missing_rate"] = spec.missing_rate;
  j["divergence_bin"] = spec.divergence_bin;
  j["lambda_c"] = json::parse(model_to_json(spec.class_c));
  j["lambda_nc"] = json::parse(model_to_json(spec.class_nc));
  json patients = json::array();
  for (std::size_t n = 0; n < data.patients.size(); ++n) {
    std::vector<std::size_t> states = data.true_states[n];
    for (auto& s : states) ++s;  // 1-based in the sidecar, matching share_s1..
    patients.push_back({{"patient_id", data.patients[n].patient_id},
                        {"label", std::string(to_string(*data.patients[n].label))},
                        {"states", states}});
  }
  j["patients"] = std::move(patients);
  return j.dump(1) + "\n";
}

}  // namespace covhmm
