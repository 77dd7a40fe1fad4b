#include "covhmm/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "covhmm/error.hpp"
#include "covhmm/io.hpp"

namespace covhmm {

bool plausible_temperature(double temp_f) noexcept {
  return std::isfinite(temp_f) && temp_f >= kMinPlausibleF && temp_f <= kMaxPlausibleF;
}

ObservedSequence bin_measurements(std::span<const RawMeasurement> measurements) {
  if (measurements.empty()) throw DataError("no measurements to bin");
  constexpr auto kBins = static_cast<std::size_t>(kHorizonHours / kBinHours);
  std::vector<double> best(kBins, 0.0);
  std::vector<bool> seen(kBins, false);
  std::size_t length = 0;
  for (const auto& m : measurements) {
    if (!std::isfinite(m.hours_since_surgery) || m.hours_since_surgery < 0.0) {
      throw DataError("patient " + m.patient_id + ": negative or non-finite measurement time");
    }
    if (!plausible_temperature(m.temperature)) {
      throw DataError("patient " + m.patient_id + ": implausible temperature " +
                      io::format_double(m.temperature));
    }
    if (m.hours_since_surgery >= kHorizonHours) continue;
    const auto bin = static_cast<std::size_t>(std::floor(m.hours_since_surgery / kBinHours));
    if (!seen[bin] || m.temperature > best[bin]) best[bin] = m.temperature;
    seen[bin] = true;
    length = std::max(length, bin + 1);
  }
  if (length == 0) {
    throw DataError("patient " + measurements.front().patient_id +
                    ": no measurements within the 240 h horizon");
  }
  ObservedSequence seq;
  seq.values.assign(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(length));
  seq.observed.assign(seen.begin(), seen.begin() + static_cast<std::ptrdiff_t>(length));
  return seq;
}

ObservedSequence impute_single_gaps(const ObservedSequence& seq) {
  ObservedSequence out = seq;
  for (std::size_t t = 1; t + 1 < seq.size(); ++t) {
    if (!seq.observed[t] && seq.observed[t - 1] && seq.observed[t + 1]) {
      out.values[t] = 0.5 * (seq.values[t - 1] + seq.values[t + 1]);
      out.observed[t] = true;
    }
  }
  return out;
}

std::vector<PatientSequence> oversample(std::span<const PatientSequence> train, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!train[i].label) {
      throw DataError("patient " + train[i].patient_id + " has no label; cannot oversample");
    }
    by_class[*train[i].label == Label::C ? 0 : 1].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw SingleClassError("oversampling needs both classes (C: " + std::to_string(by_class[0].size()) +
                           ", NC: " + std::to_string(by_class[1].size()) + ")");
  }
  std::vector<PatientSequence> out(train.begin(), train.end());
  const std::size_t minority = by_class[0].size() <= by_class[1].size() ? 0 : 1;
  const auto& pool = by_class[minority];
  const std::size_t deficit = by_class[1 - minority].size() - pool.size();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6f7eu};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  out.reserve(train.size() + deficit);
  for (std::size_t d = 0; d < deficit; ++d) out.push_back(train[pool[pick(rng)]]);
  return out;
}

namespace {

std::vector<std::string_view> fields(std::string_view line) {
  auto parts = io::split(line, ',');
  for (auto& p : parts) p = io::trim(p);
  return parts;
}

void check_header(std::string_view line, std::string_view expected, std::string_view source) {
  const auto got = fields(line);
  const auto want = io::split(expected, ',');
  if (got != want) {
    throw DataError(std::string(source) + ": header must be '" + std::string(expected) + "'");
  }
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

bool parse_flag(std::string_view field, std::string_view what) {
  field = io::trim(field);
  if (field == "0") return false;
  if (field == "1") return true;
  throw DataError("field '" + std::string(what) + "' must be 0 or 1, got '" + std::string(field) + "'");
}

}  // namespace

MeasurementTable parse_measurements_csv(std::string_view text, std::string_view source) {
  static constexpr std::string_view kHeader = "patient_id,hours_since_surgery,temp_f";
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError(std::string(source) + ": empty file");
  check_header(lines[0], kHeader, source);
  MeasurementTable table;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(i + 1);
    const auto f = fields(lines[i]);
    if (f.size() != 3) throw DataError(where + ": expected 3 fields");
    if (f[0].empty()) throw DataError(where + ": empty patient_id");
    RawMeasurement m;
    m.patient_id = std::string(f[0]);
    try {
      m.hours_since_surgery = io::parse_double(f[1], "hours_since_surgery");
      m.temperature = io::parse_double(f[2], "temp_f");
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (m.hours_since_surgery < 0.0) throw DataError(where + ": hours_since_surgery is negative");
    if (!plausible_temperature(m.temperature)) {
      table.warnings.push_back(where + ": patient " + m.patient_id + ": temperature " +
                               std::string(f[2]) + " outside [90, 110] degF, row dropped");
      continue;
    }
    table.rows.push_back(std::move(m));
  }
  return table;
}

MeasurementTable read_measurements_csv(const std::filesystem::path& path) {
  return parse_measurements_csv(io::read_file(path), path.string());
}

CovariateTable parse_covariates_csv(std::string_view text, std::string_view source) {
  static constexpr std::string_view kHeader =
      "patient_id,age,gender,surgery_hours,tumor,htn,arrhythmia,fluid_electrolyte,valvular,liver,"
      "pulmonary,diabetes,label";
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError(std::string(source) + ": empty file");
  check_header(lines[0], kHeader, source);
  CovariateTable table;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(i + 1);
    const auto f = fields(lines[i]);
    if (f.size() != 13) throw DataError(where + ": expected 13 fields");
    const std::string id(f[0]);
    if (id.empty()) throw DataError(where + ": empty patient_id");
    if (table.rows.count(id)) throw DataError(where + ": duplicate patient_id " + id);
    CovariateRecord rec;
    try {
      rec.z.age = io::parse_double(f[1], "age");
      rec.z.gender = parse_flag(f[2], "gender");
      rec.z.surgery_hours = io::parse_double(f[3], "surgery_hours");
      for (std::size_t c = 0; c < kComorbidityCount; ++c) {
        rec.z.comorbidities[c] = parse_flag(f[4 + c], kCovariateNames[3 + c]);
      }
      if (!f[12].empty()) rec.label = parse_label(f[12]);
      rec.z.validate();
    } catch (const DataError& e) {
      throw DataError(where + ": patient " + id + ": " + e.what());
    }
    table.order.push_back(id);
    table.rows.emplace(id, rec);
  }
  return table;
}

CovariateTable read_covariates_csv(const std::filesystem::path& path) {
  return parse_covariates_csv(io::read_file(path), path.string());
}

PatientSequence build_patient(const std::string& patient_id, std::span<const RawMeasurement> measurements,
                              const CovariateRecord& covariates) {
  PatientSequence p;
  p.patient_id = patient_id;
  p.seq = impute_single_gaps(bin_measurements(measurements));
  p.z = covariates.z;
  p.label = covariates.label;
  p.validate();
  return p;
}

IngestResult build_dataset(const MeasurementTable& measurements, const CovariateTable& covariates) {
  std::map<std::string, std::vector<RawMeasurement>> grouped;
  for (const auto& m : measurements.rows) grouped[m.patient_id].push_back(m);
  for (const auto& [id, rows] : grouped) {
    if (!covariates.rows.count(id)) throw DataError("patient " + id + ": measurements but no covariate row");
  }
  IngestResult result;
  result.warnings = measurements.warnings;
  for (const auto& id : covariates.order) {
    const auto it = grouped.find(id);
    if (it == grouped.end()) {
      result.warnings.push_back("patient " + id + ": no measurements, skipped");
      continue;
    }
    try {
      result.patients.push_back(build_patient(id, it->second, covariates.rows.at(id)));
    } catch (const DataError& e) {
      result.warnings.push_back(std::string(e.what()) + ", skipped");
    }
  }
  return result;
}

}  // namespace covhmm
