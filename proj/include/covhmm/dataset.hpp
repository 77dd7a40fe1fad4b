#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "covhmm/covariates.hpp"
#include "covhmm/hmm.hpp"

namespace covhmm {

// Positive class C = complication, NC = no complication.
enum class Label { C, NC };

std::string_view to_string(Label label) noexcept;
// Accepts "C" or "NC"; throws DataError otherwise.
Label parse_label(std::string_view text);

struct PatientSequence {
  std::string patient_id;
  ObservedSequence seq;
  CovariateVector z;
  std::optional<Label> label;

  // T <= kMaxBins and at least one observed bin.
  void validate() const;
};

// JSON-lines dataset: one object per line,
//   {"patient_id": "...", "label": "C" | "NC" | null,
//    "covariates": {"age": .., "gender": 0|1, "surgery_hours": .., "tumor": 0|1, ...},
//    "values": [98.6, null, ...]}
// where null marks a missing bin.
std::string to_json_line(const PatientSequence& p);
PatientSequence from_json_line(std::string_view line);

std::vector<PatientSequence> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const std::vector<PatientSequence>& data);

std::size_t count_label(const std::vector<PatientSequence>& data, Label label);

}  // namespace covhmm
