#include "covhmm/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

#include "covhmm/error.hpp"
#include "covhmm/io.hpp"

namespace covhmm {

using nlohmann::json;

std::string_view to_string(Label label) noexcept { return label == Label::C ? "C" : "NC"; }

Label parse_label(std::string_view text) {
  if (text == "C") return Label::C;
  if (text == "NC") return Label::NC;
  throw DataError("label must be C or NC, got '" + std::string(text) + "'");
}

void PatientSequence::validate() const {
  try {
    seq.validate();
    z.validate();
  } catch (const Error& e) {
    throw DataError("patient " + patient_id + ": " + e.what());
  }
  if (seq.n_observed() == 0) throw DataError("patient " + patient_id + ": no observed bins");
}

namespace {

json covariates_to_json(const CovariateVector& z) {
  json j = json::object();
  j["age"] = z.age;
  j["gender"] = z.gender ? 1 : 0;
  j["surgery_hours"] = z.surgery_hours;
  for (std::size_t f = 0; f < kComorbidityCount; ++f) {
    j[std::string(kCovariateNames[3 + f])] = z.comorbidities[f] ? 1 : 0;
  }
  return j;
}

bool flag_from_json(const json& j, const std::string& key) {
  const int v = j.at(key).get<int>();
  if (v != 0 && v != 1) throw DataError("covariate '" + key + "' must be 0 or 1");
  return v == 1;
}

CovariateVector covariates_from_json(const json& j) {
  CovariateVector z;
  z.age = j.at("age").get<double>();
  z.gender = flag_from_json(j, "gender");
  z.surgery_hours = j.at("surgery_hours").get<double>();
  for (std::size_t f = 0; f < kComorbidityCount; ++f) {
    z.comorbidities[f] = flag_from_json(j, std::string(kCovariateNames[3 + f]));
  }
  return z;
}

}  // namespace

std::string to_json_line(const PatientSequence& p) {
  json j = json::object();
  j["patient_id"] = p.patient_id;
  j["label"] = p.label ? json(std::string(to_string(*p.label))) : json(nullptr);
  j["covariates"] = covariates_to_json(p.z);
  json values = json::array();
  for (std::size_t t = 0; t < p.seq.size(); ++t) {
    values.push_back(p.seq.observed[t] ? json(p.seq.values[t]) : json(nullptr));
  }
  j["values"] = std::move(values);
  return j.dump();
}

PatientSequence from_json_line(std::string_view line) {
  PatientSequence p;
  try {
    const json j = json::parse(line);
    p.patient_id = j.at("patient_id").get<std::string>();
    const json& label = j.at("label");
    if (!label.is_null()) p.label = parse_label(label.get<std::string>());
    p.z = covariates_from_json(j.at("covariates"));
    for (const json& v : j.at("values")) {
      if (v.is_null()) {
        p.seq.values.push_back(0.0);
        p.seq.observed.push_back(false);
      } else {
        p.seq.values.push_back(v.get<double>());
        p.seq.observed.push_back(true);
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed dataset record: ") + e.what());
  }
  p.validate();
  return p;
}

std::vector<PatientSequence> read_dataset(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  std::vector<PatientSequence> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<PatientSequence>& data) {
  std::string text;
  for (const auto& p : data) {
    text += to_json_line(p);
    text += '\n';
  }
  io::write_file_atomic(path, text);
}

std::size_t count_label(const std::vector<PatientSequence>& data, Label label) {
  std::size_t n = 0;
  for (const auto& p : data) n += (p.label == label) ? 1 : 0;
  return n;
}

}  // namespace covhmm
