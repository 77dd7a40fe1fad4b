#pragma once

// Raw measurements and covariate tables to binned patient sequences.
//
// Bins are 4 h wide, left-closed, with hour 0 at the end of surgery; each
// bin keeps the maximum temperature measured inside it. Anything at or past
// 240 h is dropped.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "covhmm/dataset.hpp"

namespace covhmm {

inline constexpr double kBinHours = 4.0;
inline constexpr double kHorizonHours = 240.0;
inline constexpr double kMinPlausibleF = 90.0;
inline constexpr double kMaxPlausibleF = 110.0;

struct RawMeasurement {
  std::string patient_id;
  double hours_since_surgery = 0.0;
  double temperature = 0.0;  // degF
};

bool plausible_temperature(double temp_f) noexcept;

// One patient's measurements, in any order. The sequence ends at the last
// non-empty bin. Throws DataError for empty input, negative times,
// implausible temperatures, or when nothing survives the horizon cut.
ObservedSequence bin_measurements(std::span<const RawMeasurement> measurements);

// Fills each missing bin whose two neighbours are both observed with the
// neighbours' mean. Longer gaps and leading/trailing gaps are left alone.
ObservedSequence impute_single_gaps(const ObservedSequence& seq);

// Duplicates randomly chosen minority-class sequences (with replacement)
// until both classes have the same count. The input comes first in its
// original order, duplicates are appended. Throws SingleClassError if a
// class is absent; unlabelled sequences are rejected.
std::vector<PatientSequence> oversample(std::span<const PatientSequence> train, std::uint64_t seed);

struct MeasurementTable {
  std::vector<RawMeasurement> rows;
  std::vector<std::string> warnings;
};

struct CovariateRecord {
  CovariateVector z;
  std::optional<Label> label;
};

struct CovariateTable {
  std::vector<std::string> order;  // file order
  std::map<std::string, CovariateRecord> rows;
};

// measurements.csv: patient_id,hours_since_surgery,temp_f
// Rows outside the plausibility window are dropped with a warning.
MeasurementTable read_measurements_csv(const std::filesystem::path& path);
MeasurementTable parse_measurements_csv(std::string_view text, std::string_view source = "<memory>");

// covariates.csv: patient_id,age,gender,surgery_hours,tumor,htn,arrhythmia,
//   fluid_electrolyte,valvular,liver,pulmonary,diabetes,label
CovariateTable read_covariates_csv(const std::filesystem::path& path);
CovariateTable parse_covariates_csv(std::string_view text, std::string_view source = "<memory>");

struct IngestResult {
  std::vector<PatientSequence> patients;
  std::vector<std::string> warnings;
};

// Bins and imputes every patient in covariate-table order. A patient with
// measurements but no covariate row is an error; a covariate row with no
// usable measurements is skipped with a warning.
IngestResult build_dataset(const MeasurementTable& measurements, const CovariateTable& covariates);

// Same preprocessing for a single patient, as used for streaming scores.
PatientSequence build_patient(const std::string& patient_id, std::span<const RawMeasurement> measurements,
                              const CovariateRecord& covariates);

}  // namespace covhmm
