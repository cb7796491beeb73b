#include "segreg/dose.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace segreg {

void validate_dose(const DoseVolume &dose) {
    dose.validate();
    for (double d : dose.data)
        if (!std::isfinite(d) || d < 0.0) throw std::invalid_argument("dose values must be finite and >= 0");
}

DoseVolume map_dose(const FractionRecord &fraction, const GridGeometry &reference) {
    validate_dose(fraction.dose);
    fraction.field_to_fraction.validate();
    if (!(fraction.field_to_fraction.geometry == reference))
        throw std::invalid_argument("map_dose: field geometry differs from the reference grid");
    auto out = warp_image(fraction.dose, fraction.field_to_fraction);
    // Trilinear weights are convex, so negatives can only be rounding residue.
    for (auto &d : out.data) d = std::max(d, 0.0);
    return out;
}

DoseVolume accumulate(const std::vector<DoseVolume> &mapped) {
    if (mapped.empty()) throw std::invalid_argument("accumulate: no doses");
    DoseVolume out = mapped.front();
    out.validate();
    for (std::size_t f = 1; f < mapped.size(); ++f) {
        if (!(mapped[f].geometry == out.geometry)) throw std::invalid_argument("accumulate: geometry mismatch");
        for (std::size_t n = 0; n < out.data.size(); ++n) out.data[n] += mapped[f].data[n];
    }
    return out;
}

namespace {

std::vector<double> structure_doses(const DoseVolume &dose, const LabelVolume &labels, Structure s) {
    if (!(dose.geometry == labels.geometry)) throw std::invalid_argument("dose and labels are not co-located");
    std::vector<double> out;
    const auto code = static_cast<std::int32_t>(s);
    for (std::size_t n = 0; n < labels.data.size(); ++n)
        if (labels.data[n] == code) out.push_back(dose.data[n]);
    if (out.empty()) throw std::invalid_argument("structure " + std::string(structure_name(s)) + " is empty");
    return out;
}

double percent_at_least(const std::vector<double> &sorted_doses, double level) {
    const auto first = std::lower_bound(sorted_doses.begin(), sorted_doses.end(), level);
    return 100.0 * static_cast<double>(sorted_doses.end() - first) / static_cast<double>(sorted_doses.size());
}

} // namespace

std::vector<DvhPoint> dvh(const DoseVolume &dose, const LabelVolume &labels, Structure s, double bin_width) {
    if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw std::invalid_argument("bin_width must be positive");
    auto d = structure_doses(dose, labels, s);
    std::sort(d.begin(), d.end());
    std::vector<DvhPoint> out;
    for (long b = 0;; ++b) {
        const double level = static_cast<double>(b) * bin_width;
        out.push_back({level, percent_at_least(d, level)});
        if (level > d.back()) break;
    }
    return out;
}

double dose_metric(const DoseVolume &dose, const LabelVolume &labels, Structure s, const DoseQuery &q) {
    auto d = structure_doses(dose, labels, s);
    switch (q.kind) {
    case DoseQuery::Kind::d_percent: {
        if (!(q.value > 0.0 && q.value <= 100.0)) throw std::invalid_argument("D_x needs x in (0, 100]");
        return percentile_nearest_rank(d, 100.0 - q.value);
    }
    case DoseQuery::Kind::v_gy: {
        if (!std::isfinite(q.value)) throw std::invalid_argument("V_d needs a finite level");
        std::sort(d.begin(), d.end());
        return percent_at_least(d, q.value);
    }
    case DoseQuery::Kind::mean: {
        double acc = 0.0;
        for (double x : d) acc += x;
        return acc / static_cast<double>(d.size());
    }
    }
    throw std::logic_error("unknown dose query");
}

void DoseConstraint::validate() const {
    if (id.empty()) throw std::invalid_argument("constraint id must be nonempty");
    if (query.kind == DoseQuery::Kind::d_percent && !(query.value > 0.0 && query.value <= 100.0))
        throw std::invalid_argument("constraint " + id + ": percent must be in (0, 100]");
    if (query.kind == DoseQuery::Kind::v_gy && !(query.value >= 0.0))
        throw std::invalid_argument("constraint " + id + ": Gy level must be >= 0");
    if (!std::isfinite(threshold) || threshold < 0.0)
        throw std::invalid_argument("constraint " + id + ": threshold must be >= 0");
    if (query.kind == DoseQuery::Kind::v_gy && op != Op::report && threshold > 100.0)
        throw std::invalid_argument("constraint " + id + ": volume limit must be <= 100%");
}

std::vector<DoseConstraint> default_constraints() {
    using Op = DoseConstraint::Op;
    return {
        {"ctv_d95_ge_40.0", Structure::ctv, DoseQuery::d(95.0), Op::ge, 40.0},
        {"ctv_mean_ge_40.4", Structure::ctv, DoseQuery::mean_dose(), Op::ge, 40.4},
        {"ctv_mean_lt_42.0", Structure::ctv, DoseQuery::mean_dose(), Op::lt, 42.0},
        {"bladder_d50_le_20.0", Structure::bladder, DoseQuery::d(50.0), Op::le, 20.0},
        {"rectum_v30", Structure::rectum, DoseQuery::v(30.0), Op::report, 0.0},
        {"rectum_v24", Structure::rectum, DoseQuery::v(24.0), Op::report, 0.0},
    };
}

std::vector<ConstraintResult> check_constraints(const DoseVolume &dose, const LabelVolume &labels,
                                                const std::vector<DoseConstraint> &constraints) {
    validate_dose(dose);
    std::vector<ConstraintResult> out;
    for (const auto &c : constraints) {
        c.validate();
        ConstraintResult r{c.id, dose_metric(dose, labels, c.structure, c.query), std::nullopt};
        switch (c.op) {
        case DoseConstraint::Op::ge: r.passed = r.value >= c.threshold; break;
        case DoseConstraint::Op::gt: r.passed = r.value > c.threshold; break;
        case DoseConstraint::Op::le: r.passed = r.value <= c.threshold; break;
        case DoseConstraint::Op::lt: r.passed = r.value < c.threshold; break;
        case DoseConstraint::Op::report: break;
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ComplianceRate> compliance_summary(const std::vector<std::vector<ConstraintResult>> &reports) {
    if (reports.empty()) throw std::invalid_argument("compliance_summary: no reports");
    std::vector<ComplianceRate> out;
    for (const auto &r : reports.front()) out.push_back({r.id, 0, 0, std::nullopt});
    for (const auto &rep : reports) {
        if (rep.size() != out.size()) throw std::invalid_argument("compliance_summary: inconsistent constraint sets");
        for (std::size_t c = 0; c < rep.size(); ++c) {
            if (rep[c].id != out[c].id)
                throw std::invalid_argument("compliance_summary: constraint id mismatch: " + rep[c].id);
            if (rep[c].passed.has_value() != (reports.front()[c].passed.has_value()))
                throw std::invalid_argument("compliance_summary: constraint " + rep[c].id + " mixes report-only and checked");
            if (rep[c].passed) {
                ++out[c].evaluated;
                if (*rep[c].passed) ++out[c].passed;
            }
        }
    }
    for (auto &c : out)
        if (c.evaluated > 0) c.percent = 100.0 * c.passed / c.evaluated;
    return out;
}

double round_percent(double percent) { return std::round(percent * 10.0) / 10.0; }

std::string to_string(DoseConstraint::Op op) {
    switch (op) {
    case DoseConstraint::Op::ge: return ">=";
    case DoseConstraint::Op::gt: return ">";
    case DoseConstraint::Op::le: return "<=";
    case DoseConstraint::Op::lt: return "<";
    case DoseConstraint::Op::report: return "report";
    }
    return "?";
}

std::string describe(const DoseQuery &q) {
    char buf[64];
    switch (q.kind) {
    case DoseQuery::Kind::d_percent: std::snprintf(buf, sizeof buf, "D%g", q.value); break;
    case DoseQuery::Kind::v_gy: std::snprintf(buf, sizeof buf, "V%g", q.value); break;
    case DoseQuery::Kind::mean: std::snprintf(buf, sizeof buf, "mean"); break;
    }
    return buf;
}

} // namespace segreg
