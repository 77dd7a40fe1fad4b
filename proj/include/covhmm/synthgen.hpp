#pragma once

// Seeded synthetic cohorts drawn from known covariate-HMM parameters. Used
// as ground truth for recovery and evaluation tests and by `covhmm synth`.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "covhmm/dataset.hpp"
#include "covhmm/training.hpp"

namespace covhmm {

struct CovariateSampler {
  double age_min = 30.0;
  double age_max = 85.0;
  double gender_rate = 0.5;
  double hours_min = 1.0;
  double hours_max = 6.0;
  // tumor, htn, arrhythmia, fluid_electrolyte, valvular, liver, pulmonary,
  // diabetes
  std::array<double, kComorbidityCount> flag_rates = {0.10, 0.40, 0.15, 0.20, 0.05, 0.05, 0.15, 0.15};

  // Population mean/sd of the continuous columns under this sampler.
  Standardization population_standardization() const;
};

struct GeneratorSpec {
  HmmParams class_c;
  HmmParams class_nc;
  std::size_t n_patients = 600;
  double prevalence = 0.24;
  std::size_t min_len = 18;
  std::size_t max_len = kMaxBins;
  double missing_rate = 0.0;
  CovariateSampler covariates;
  std::uint64_t seed = 0;
  // Class-C patients follow the NC chain and emissions for bins before this
  // index, then switch to their own model (0 = from the start).
  std::size_t divergence_bin = 0;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<PatientSequence> patients;
  std::vector<std::vector<std::size_t>> true_states;
};

// Patient n is drawn from its own RNG stream derived from (seed, n), so the
// output does not depend on generation order.
SyntheticDataset generate(const GeneratorSpec& spec);

// Reference parameters: per-class emissions fitted to post-operative data
// and hand-picked logits (every nonzero coefficient has magnitude >= 0.5).
HmmParams reference_params(Label label);

// Named cohorts: "reference" (reference parameters), "separated" (class-C
// high-state mean 1.5 degF above NC), "null" (both classes share the NC
// model), "delayed" (classes identical until bin 10).
GeneratorSpec scenario(std::string_view name, std::size_t n_patients, std::uint64_t seed);
std::vector<std::string> scenario_names();

// Sidecar with the generating parameters and true state paths.
std::string truth_json(const GeneratorSpec& spec, const SyntheticDataset& data);

}  // namespace covhmm
