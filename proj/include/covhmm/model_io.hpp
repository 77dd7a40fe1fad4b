#pragma once

// JSON documents for trained models.
//
// Model document:
//   {"format": "covhmm-model", "version": 1, "n_states": K,
//    "covariates": [11 names], "transition_covariates": [3 names],
//    "standardization": {"mean": [11], "sd": [11]},
//    "theta1": {"intercepts": [K-1], "coefficients": [[11] x (K-1)]},
//    "theta2": [K x {"intercepts": [K-1], "coefficients": [[3] x (K-1)]}],
//    "theta3": {"mu": [K], "sigma": [K]},
//    "training": {"seed", "iterations", "final_loglik", "converged", "restart"}}
//
// Classifier document:
//   {"format": "covhmm-classifier", "version": 1, "prior_c": p,
//    "lambda_c": <model>, "lambda_nc": <model>}
//
// Numbers are written in shortest round-trip form, so save/load is exact.

#include <filesystem>
#include <string>
#include <string_view>

#include "covhmm/classifier.hpp"
#include "covhmm/training.hpp"

namespace covhmm {

std::string model_to_json(const HmmParams& params);
HmmParams model_from_json(std::string_view text);

std::string classifier_to_json(const ClassifierPair& pair);
ClassifierPair classifier_from_json(std::string_view text);

void save_classifier(const std::filesystem::path& path, const ClassifierPair& pair);
ClassifierPair load_classifier(const std::filesystem::path& path);

}  // namespace covhmm
