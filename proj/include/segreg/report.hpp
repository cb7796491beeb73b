#pragma once

// JSON and CSV report documents. Every JSON report carries the tool version and the
// configuration it was produced with; numbers are written with 9 significant digits.

#include "segreg/config.hpp"
#include "segreg/dose.hpp"
#include "segreg/metrics.hpp"
#include "segreg/register.hpp"
#include "segreg/stats.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace segreg {

inline constexpr const char *tool_version = "segreg 0.1.0";

/// x rounded to 9 significant digits (the value a reader parses back from the report).
double sig9(double x);

struct StructureMetrics {
    Structure structure = Structure::bladder;
    double dsc = 0.0;
    std::optional<double> hd95; // empty when either mask is empty
    std::optional<double> mda;
};

/// DSC, HD95 and MDA of the warped labels against the fixed labels, per structure.
std::vector<StructureMetrics> structure_metrics(const LabelVolume &warped, const LabelVolume &fixed,
                                                std::span<const Structure> structures);

struct JacobianSummary {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    std::size_t nonpositive = 0;
    double percent_nonpositive = 0.0;
};

JacobianSummary summarize_jacobian(const ScalarVolume &det);

nlohmann::json report_header(const std::string &kind, const nlohmann::json &config);
nlohmann::json to_json(const LossBreakdown &b);
nlohmann::json to_json(const std::vector<StructureMetrics> &m);
nlohmann::json to_json(const JacobianSummary &j);
nlohmann::json to_json(const std::vector<ConstraintResult> &results, const std::vector<DoseConstraint> &constraints);
nlohmann::json to_json(const TestResult &t);

nlohmann::json registration_report(const RegistrationResult &r, const LabelVolume &fixed_labels,
                                   const PipelineConfig &config);

/// Header "level_gy,percent_volume", one row per level.
std::string dvh_csv(const std::vector<DvhPoint> &curve);

std::string dump_report(const nlohmann::json &doc);
void write_text_atomic(const std::filesystem::path &path, const std::string &text);

/// Columns of a CSV file with a header row; every cell must parse as a number.
std::map<std::string, std::vector<double>> read_csv_columns(const std::filesystem::path &path);

} // namespace segreg
