#pragma once

// Dose mapping through displacement fields, course accumulation, DVHs, dose-volume
// metrics and constraint compliance. Doses are in Gy.

#include "segreg/field.hpp"
#include "segreg/grid.hpp"

#include <optional>
#include <string>
#include <vector>

namespace segreg {

using DoseVolume = ScalarVolume;

/// Throws std::invalid_argument unless every voxel is finite and >= 0.
void validate_dose(const DoseVolume &dose);

struct FractionRecord {
    int index = 1;
    DoseVolume dose;                     // on the fraction's grid
    DisplacementField field_to_fraction; // on the reference grid, points into the fraction
};

/// Trilinear pull-back of the fraction dose onto the reference grid.
DoseVolume map_dose(const FractionRecord &fraction, const GridGeometry &reference);

/// Voxelwise sum in list order.
DoseVolume accumulate(const std::vector<DoseVolume> &mapped);

struct DvhPoint {
    double level_gy;
    double percent_volume;
};

/// Cumulative DVH at levels 0, w, 2w, ... up to the first level above the structure's
/// maximum dose (which reads 0%).
std::vector<DvhPoint> dvh(const DoseVolume &dose, const LabelVolume &labels, Structure s, double bin_width = 0.1);

struct DoseQuery {
    enum class Kind { d_percent, v_gy, mean };
    Kind kind = Kind::mean;
    double value = 0.0; // percent for D, Gy for V, unused for mean

    static DoseQuery d(double percent) { return {Kind::d_percent, percent}; }
    static DoseQuery v(double gy) { return {Kind::v_gy, gy}; }
    static DoseQuery mean_dose() { return {Kind::mean, 0.0}; }
};

/// D_x in Gy by nearest rank: the dose at ascending rank ceil((100 - x) / 100 * n),
/// clamped to [1, n]. V_d in percent of structure volume. Mean in Gy.
double dose_metric(const DoseVolume &dose, const LabelVolume &labels, Structure s, const DoseQuery &q);

struct DoseConstraint {
    enum class Op { ge, gt, le, lt, report };
    std::string id;
    Structure structure = Structure::ctv;
    DoseQuery query;
    Op op = Op::report;
    double threshold = 0.0; // Gy for D and mean, percent for V

    void validate() const;
};

/// Clinical defaults: CTV D95 >= 40, CTV mean >= 40.4, CTV mean < 42, bladder D50 <= 20,
/// rectum V30 and V24 report-only.
std::vector<DoseConstraint> default_constraints();

struct ConstraintResult {
    std::string id;
    double value = 0.0;
    std::optional<bool> passed; // empty for report-only
};

std::vector<ConstraintResult> check_constraints(const DoseVolume &dose, const LabelVolume &labels,
                                                const std::vector<DoseConstraint> &constraints);

struct ComplianceRate {
    std::string id;
    int passed = 0;
    int evaluated = 0;
    std::optional<double> percent; // empty for report-only
};

/// Per-constraint pass rate over patients. Every report must list the same ids in order.
std::vector<ComplianceRate> compliance_summary(const std::vector<std::vector<ConstraintResult>> &reports);

/// Percent rounded to one decimal place, the granularity used for reporting.
double round_percent(double percent);

std::string to_string(DoseConstraint::Op op);
std::string describe(const DoseQuery &q);

} // namespace segreg
