#include "covhmm/model_io.hpp"

#include <json.hpp>

#include "covhmm/error.hpp"
#include "covhmm/io.hpp"

namespace covhmm {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json block_to_json(const LogitBlock& b) {
  json coefs = json::array();
  for (std::size_t c = 1; c < b.n_categories(); ++c) {
    json row = json::array();
    for (std::size_t d = 0; d < b.dim(); ++d) row.push_back(b.coef(c, d));
    coefs.push_back(std::move(row));
  }
  return {{"intercepts", std::vector<double>(b.intercepts().begin(), b.intercepts().end())},
          {"coefficients", std::move(coefs)}};
}

LogitBlock block_from_json(const json& j, std::size_t k, std::size_t dim) {
  LogitBlock b(k, dim);
  const auto intercepts = j.at("intercepts").get<std::vector<double>>();
  const json& coefs = j.at("coefficients");
  if (intercepts.size() != k - 1 || coefs.size() != k - 1) {
    throw DataError("logit block has the wrong number of categories");
  }
  for (std::size_t c = 1; c < k; ++c) {
    b.intercept(c) = intercepts[c - 1];
    const auto row = coefs.at(c - 1).get<std::vector<double>>();
    if (row.size() != dim) throw DataError("logit block has the wrong covariate dimension");
    for (std::size_t d = 0; d < dim; ++d) b.coef(c, d) = row[d];
  }
  return b;
}

json params_to_json(const HmmParams& p) {
  json j = json::object();
  j["format"] = "covhmm-model";
  j["version"] = kFormatVersion;
  j["n_states"] = p.n_states;
  std::vector<std::string> names(kCovariateNames.begin(), kCovariateNames.end());
  j["covariates"] = names;
  j["transition_covariates"] =
      std::vector<std::string>(names.begin(), names.begin() + kTransCovariateCount);
  j["standardization"] = {
      {"mean", std::vector<double>(p.standardization.mean.begin(), p.standardization.mean.end())},
      {"sd", std::vector<double>(p.standardization.sd.begin(), p.standardization.sd.end())}};
  j["theta1"] = block_to_json(p.theta1);
  json rows = json::array();
  for (const auto& r : p.theta2) rows.push_back(block_to_json(r));
  j["theta2"] = std::move(rows);
  j["theta3"] = {{"mu", p.theta3.mu}, {"sigma", p.theta3.sigma}};
  j["training"] = {{"seed", p.training.seed},
                   {"iterations", p.training.iterations},
                   {"final_loglik", p.training.final_loglik},
                   {"converged", p.training.converged},
                   {"restart", p.training.restart}};
  return j;
}

HmmParams params_from_json(const json& j) {
  if (j.at("format").get<std::string>() != "covhmm-model") throw DataError("not a covhmm model document");
  if (j.at("version").get<int>() != kFormatVersion) throw DataError("unsupported model version");
  HmmParams p;
  p.n_states = j.at("n_states").get<std::size_t>();
  if (p.n_states < 2) throw DataError("model needs at least two states");
  const auto names = j.at("covariates").get<std::vector<std::string>>();
  if (names.size() != kInitCovariateCount) throw DataError("model covariate list has the wrong length");
  for (std::size_t c = 0; c < kInitCovariateCount; ++c) {
    if (names[c] != kCovariateNames[c]) throw DataError("model covariate '" + names[c] + "' out of order");
  }
  const auto mean = j.at("standardization").at("mean").get<std::vector<double>>();
  const auto sd = j.at("standardization").at("sd").get<std::vector<double>>();
  if (mean.size() != kInitCovariateCount || sd.size() != kInitCovariateCount) {
    throw DataError("standardization has the wrong length");
  }
  std::copy(mean.begin(), mean.end(), p.standardization.mean.begin());
  std::copy(sd.begin(), sd.end(), p.standardization.sd.begin());
  p.theta1 = block_from_json(j.at("theta1"), p.n_states, kInitCovariateCount);
  const json& rows = j.at("theta2");
  if (rows.size() != p.n_states) throw DataError("theta2 must have one block per state");
  for (const json& r : rows) p.theta2.push_back(block_from_json(r, p.n_states, kTransCovariateCount));
  p.theta3.mu = j.at("theta3").at("mu").get<std::vector<double>>();
  p.theta3.sigma = j.at("theta3").at("sigma").get<std::vector<double>>();
  const json& t = j.at("training");
  p.training.seed = t.at("seed").get<std::uint64_t>();
  p.training.iterations = t.at("iterations").get<int>();
  p.training.final_loglik = t.at("final_loglik").get<double>();
  p.training.converged = t.at("converged").get<bool>();
  p.training.restart = t.at("restart").get<std::size_t>();
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("invalid model: ") + e.what());
  }
  return p;
}

template <typename Fn>
auto with_json_errors(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace

std::string model_to_json(const HmmParams& params) { return params_to_json(params).dump(2); }

HmmParams model_from_json(std::string_view text) {
  return with_json_errors([&] { return params_from_json(json::parse(text)); });
}

std::string classifier_to_json(const ClassifierPair& pair) {
  json j = json::object();
  j["format"] = "covhmm-classifier";
  j["version"] = kFormatVersion;
  j["prior_c"] = pair.prior_c;
  j["lambda_c"] = params_to_json(pair.lambda_c);
  j["lambda_nc"] = params_to_json(pair.lambda_nc);
  return j.dump(2);
}

ClassifierPair classifier_from_json(std::string_view text) {
  return with_json_errors([&] {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "covhmm-classifier") {
      throw DataError("not a covhmm classifier document");
    }
    if (j.at("version").get<int>() != kFormatVersion) throw DataError("unsupported classifier version");
    ClassifierPair pair;
    pair.prior_c = j.at("prior_c").get<double>();
    pair.lambda_c = params_from_json(j.at("lambda_c"));
    pair.lambda_nc = params_from_json(j.at("lambda_nc"));
    try {
      pair.validate();
    } catch (const InvalidArgument& e) {
      throw DataError(std::string("invalid classifier: ") + e.what());
    }
    return pair;
  });
}

void save_classifier(const std::filesystem::path& path, const ClassifierPair& pair) {
  io::write_file_atomic(path, classifier_to_json(pair) + "\n");
}

ClassifierPair load_classifier(const std::filesystem::path& path) {
  try {
    return classifier_from_json(io::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace covhmm
