#pragma once

// Strict JSON configuration: registration settings, loss weights and the dose
// constraint set. Missing keys keep their defaults; unknown keys and type mismatches
// are rejected with the JSON path of the offending value.

#include "segreg/dose.hpp"
#include "segreg/objective.hpp"
#include "segreg/register.hpp"

#include "json.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace segreg {

class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string path, const std::string &message)
        : std::invalid_argument(path + ": " + message), path_(std::move(path)) {}
    const std::string &path() const { return path_; }

private:
    std::string path_;
};

struct PipelineConfig {
    RegistrationConfig registration;
    LossWeights loss;
    std::vector<DoseConstraint> constraints = default_constraints();
};

PipelineConfig parse_config(const nlohmann::json &doc);
/// A file holding only whitespace is an empty configuration.
PipelineConfig load_config(const std::filesystem::path &path);
nlohmann::json to_json(const PipelineConfig &config);

/// Constraint list on its own, as accepted under "constraints".
std::vector<DoseConstraint> parse_constraints(const nlohmann::json &list, const std::string &path = "/constraints");
nlohmann::json to_json(const DoseConstraint &c);

/// "D95", "V30", "mean".
DoseQuery parse_query(const std::string &text);
DoseConstraint::Op parse_op(const std::string &text);
std::string to_string(SmoothReduction r);

} // namespace segreg
