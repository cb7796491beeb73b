#include "segreg/report.hpp"

#include "segreg/nifti.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace segreg {

using nlohmann::json;

double sig9(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("report: non-finite number");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return std::strtod(buf, nullptr);
}

std::vector<StructureMetrics> structure_metrics(const LabelVolume &warped, const LabelVolume &fixed,
                                                std::span<const Structure> structures) {
    std::vector<StructureMetrics> out;
    for (Structure s : structures) {
        const auto a = structure_mask(warped, s), b = structure_mask(fixed, s);
        StructureMetrics m;
        m.structure = s;
        m.dsc = dsc_binary(a, b);
        if (a.count() > 0 && b.count() > 0) {
            m.hd95 = hd95(a, b);
            m.mda = mda(a, b);
        }
        out.push_back(m);
    }
    return out;
}

JacobianSummary summarize_jacobian(const ScalarVolume &det) {
    if (det.data.empty()) throw std::invalid_argument("jacobian summary: empty volume");
    JacobianSummary j;
    j.min = j.max = det.data[0];
    double acc = 0.0;
    for (double v : det.data) {
        j.min = std::min(j.min, v);
        j.max = std::max(j.max, v);
        acc += v;
        j.nonpositive += v <= 0.0;
    }
    j.mean = acc / static_cast<double>(det.data.size());
    j.percent_nonpositive = 100.0 * static_cast<double>(j.nonpositive) / static_cast<double>(det.data.size());
    return j;
}

json report_header(const std::string &kind, const json &config) {
    return {{"tool", tool_version}, {"report", kind}, {"config", config}};
}

json to_json(const LossBreakdown &b) {
    return {{"similarity", sig9(b.similarity)},
            {"smooth", sig9(b.smooth)},
            {"consistency", sig9(b.consistency)},
            {"total", sig9(b.total)}};
}

json to_json(const std::vector<StructureMetrics> &metrics) {
    json out = json::object();
    for (const auto &m : metrics) {
        out[std::string(structure_name(m.structure))] = {
            {"dsc", sig9(m.dsc)},
            {"hd95_mm", m.hd95 ? json(sig9(*m.hd95)) : json(nullptr)},
            {"mda_mm", m.mda ? json(sig9(*m.mda)) : json(nullptr)}};
    }
    return out;
}

json to_json(const JacobianSummary &j) {
    return {{"min", sig9(j.min)},
            {"max", sig9(j.max)},
            {"mean", sig9(j.mean)},
            {"nonpositive_voxels", j.nonpositive},
            {"percent_nonpositive", sig9(j.percent_nonpositive)}};
}

json to_json(const std::vector<ConstraintResult> &results, const std::vector<DoseConstraint> &constraints) {
    if (results.size() != constraints.size()) throw std::invalid_argument("constraint report: size mismatch");
    json out = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto &r = results[i];
        const auto &c = constraints[i];
        out.push_back({{"id", r.id},
                       {"structure", std::string(structure_name(c.structure))},
                       {"query", describe(c.query)},
                       {"op", to_string(c.op)},
                       {"threshold", c.op == DoseConstraint::Op::report ? json(nullptr) : json(sig9(c.threshold))},
                       {"value", sig9(r.value)},
                       {"passed", r.passed ? json(*r.passed) : json(nullptr)}});
    }
    return out;
}

json to_json(const TestResult &t) {
    return {{"statistic", sig9(t.statistic)},
            {"p_value", sig9(t.p_value)},
            {"n_effective", t.n_effective},
            {"method", std::string(to_string(t.method))},
            {"degenerate", t.degenerate}};
}

json registration_report(const RegistrationResult &r, const LabelVolume &fixed_labels, const PipelineConfig &config) {
    json doc = report_header("register", to_json(config));
    json steps = json::array();
    for (std::size_t i = 0; i < r.per_step_loss.size(); ++i) {
        steps.push_back({{"step", i + 1},
                         {"loss", to_json(r.per_step_loss[i])},
                         {"iterations", r.iterations_used[i]},
                         {"accepted", static_cast<bool>(r.accepted[i])}});
    }
    doc["initial_loss"] = to_json(r.initial_loss);
    doc["steps"] = steps;
    doc["final_loss"] = to_json(r.per_step_loss.back());
    doc["deep_supervision_consistency"] = sig9(r.deep_supervision_consistency);
    const std::array<Structure, 4> all{Structure::bladder, Structure::rectum, Structure::ctv, Structure::urethra};
    doc["metrics"] = to_json(structure_metrics(r.warped_labels, fixed_labels, all));
    doc["jacobian"] = to_json(summarize_jacobian(jacobian_determinant(r.final_field)));
    return doc;
}

std::string dvh_csv(const std::vector<DvhPoint> &curve) {
    std::string out = "level_gy,percent_volume\n";
    char buf[96];
    for (const auto &p : curve) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", p.level_gy, p.percent_volume);
        out += buf;
    }
    return out;
}

std::string dump_report(const json &doc) { return doc.dump(2) + "\n"; }

void write_text_atomic(const std::filesystem::path &path, const std::string &text) {
    write_file_atomic(path, text.data(), text.size());
}

std::map<std::string, std::vector<double>> read_csv_columns(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    auto split = [](const std::string &line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
            cells.push_back(cell);
        }
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": empty CSV file");
    const auto header = split(line);
    std::map<std::string, std::vector<double>> cols;
    for (const auto &h : header) {
        if (h.empty() || cols.count(h)) throw std::invalid_argument(path.string() + ": empty or duplicate column name");
        cols[h];
    }
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw std::invalid_argument(path.string() + ": row " + std::to_string(row) + " has the wrong number of cells");
        for (std::size_t c = 0; c < cells.size(); ++c) {
            char *end = nullptr;
            const double v = std::strtod(cells[c].c_str(), &end);
            if (cells[c].empty() || *end != '\0' || !std::isfinite(v))
                throw std::invalid_argument(path.string() + ": row " + std::to_string(row) + ", column '" + header[c] +
                                            "' is not a number");
            cols[header[c]].push_back(v);
        }
    }
    return cols;
}

} // namespace segreg
