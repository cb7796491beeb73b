#include "segreg/cli.hpp"

#include "segreg/config.hpp"
#include "segreg/nifti.hpp"
#include "segreg/phantom.hpp"
#include "segreg/report.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace segreg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class NumericalFailure : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything a command produces, held until the command has finished.
class Outputs {
public:
    void check(const fs::path &p) const {
        const fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
        if (!fs::is_directory(dir)) throw std::invalid_argument("output directory does not exist: " + dir.string());
    }
    void add(const fs::path &p, std::vector<std::uint8_t> bytes) { files_.emplace_back(p, std::move(bytes)); }
    void add(const fs::path &p, const std::string &text) { add(p, std::vector<std::uint8_t>(text.begin(), text.end())); }
    void add_or_print(const std::string &p, const std::string &text) {
        if (p.empty()) stdout_ += text;
        else add(p, text);
    }
    void commit(std::ostream &out) {
        std::vector<fs::path> written;
        try {
            for (const auto &[p, bytes] : files_) {
                write_file_atomic(p, bytes.data(), bytes.size());
                written.push_back(p);
            }
        } catch (...) {
            std::error_code ec;
            for (const auto &p : written) fs::remove(p, ec);
            throw;
        }
        out << stdout_;
    }

private:
    std::vector<std::pair<fs::path, std::vector<std::uint8_t>>> files_;
    std::string stdout_;
};

void require_finite(std::span<const double> v, const char *what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericalFailure(std::string(what) + " contains non-finite values");
}

void require_finite(const DisplacementField &f, const char *what) {
    for (const auto &u : f.u) require_finite(u, what);
}

json load_json(const fs::path &p) {
    std::ifstream in(p);
    if (!in) throw std::invalid_argument("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw std::invalid_argument(p.string() + ": invalid JSON: " + e.what());
    }
}

PipelineConfig config_from(const std::string &path) { return path.empty() ? PipelineConfig{} : load_config(path); }

// A constraint file is either a bare list or a configuration document.
std::vector<DoseConstraint> constraints_from(const std::string &path) {
    if (path.empty()) return default_constraints();
    const json doc = load_json(path);
    if (doc.is_array()) return parse_constraints(doc, "");
    return parse_config(doc).constraints;
}

json constraints_json(const std::vector<DoseConstraint> &cs) {
    json a = json::array();
    for (const auto &c : cs) a.push_back(to_json(c));
    return a;
}

std::vector<Structure> structures_from(const std::vector<std::string> &names) {
    std::vector<Structure> out;
    for (const auto &n : names) out.push_back(parse_structure(n));
    return out;
}

json structure_names(const std::vector<Structure> &s) {
    json a = json::array();
    for (auto x : s) a.push_back(std::string(structure_name(x)));
    return a;
}

const std::vector<std::string> all_structures{"bladder", "rectum", "ctv", "urethra"};

// ---- subcommands ----

struct PreprocessArgs {
    std::string image, labels, reference, out_image, out_labels;
    double lo = 10.0, hi = 90.0;
};

void preprocess(const PreprocessArgs &a, Outputs &o, std::ostream &err) {
    o.check(a.out_image);
    if (!a.out_labels.empty()) o.check(a.out_labels);
    if (a.out_labels.empty() != a.labels.empty())
        throw std::invalid_argument("--labels and --out-labels must be given together");
    const auto image = read_scalar(a.image);
    const GridGeometry target = a.reference.empty() ? image.geometry : read_nifti_info(a.reference).geometry;
    const auto norm = normalize_percentile(resample(image, target), a.lo, a.hi);
    if (norm.degenerate) err << "warning: " << a.image << ": percentile range is empty, output is all zeros\n";
    o.add(a.out_image, encode_nifti(norm.volume));
    if (!a.labels.empty()) o.add(a.out_labels, encode_nifti(resample(read_labels(a.labels), target)));
}

struct RegisterArgs {
    std::string moving, fixed, moving_labels, fixed_labels, config, out_field, out_warped, out_warped_labels, out_report;
};

void register_cmd(const RegisterArgs &a, Outputs &o) {
    for (const auto *p : {&a.out_field, &a.out_warped, &a.out_warped_labels, &a.out_report})
        if (!p->empty()) o.check(*p);
    const auto config = config_from(a.config);
    const auto moving = read_scalar(a.moving);
    const auto fixed = read_scalar(a.fixed);
    const auto pre = preprocess_pair(moving, fixed, read_labels(a.moving_labels), read_labels(a.fixed_labels),
                                     fixed.geometry);
    const auto res = register_pair(pre.moving, pre.fixed, pre.moving_labels, pre.fixed_labels, config.loss,
                                   config.registration);
    require_finite(res.final_field, "registration field");
    o.add(a.out_field, encode_nifti(res.final_field));
    if (!a.out_warped.empty()) o.add(a.out_warped, encode_nifti(warp_image(moving, res.final_field)));
    if (!a.out_warped_labels.empty()) o.add(a.out_warped_labels, encode_nifti(res.warped_labels));
    if (!a.out_report.empty()) o.add(a.out_report, dump_report(registration_report(res, pre.fixed_labels, config)));
}

struct WarpArgs {
    std::string moving, field, out;
    bool labels = false;
};

void warp(const WarpArgs &a, Outputs &o) {
    o.check(a.out);
    const auto field = read_field(a.field);
    if (a.labels) o.add(a.out, encode_nifti(warp_labels(read_labels(a.moving), field)));
    else o.add(a.out, encode_nifti(warp_image(read_scalar(a.moving), field)));
}

struct JacobianArgs {
    std::string field, out, report;
};

void jacobian(const JacobianArgs &a, Outputs &o) {
    if (!a.out.empty()) o.check(a.out);
    if (!a.report.empty()) o.check(a.report);
    const auto det = jacobian_determinant(read_field(a.field));
    require_finite(det.data, "Jacobian determinant");
    if (!a.out.empty()) o.add(a.out, encode_nifti(det));
    json doc = report_header("jacobian", json::object());
    doc["jacobian"] = to_json(summarize_jacobian(det));
    o.add_or_print(a.report, dump_report(doc));
}

struct MetricsArgs {
    std::string warped, fixed, out;
    std::vector<std::string> structures = all_structures;
};

void metrics(const MetricsArgs &a, Outputs &o) {
    if (!a.out.empty()) o.check(a.out);
    const auto s = structures_from(a.structures);
    const auto warped = read_labels(a.warped);
    const auto fixed = read_labels(a.fixed);
    if (!(warped.geometry == fixed.geometry)) throw std::invalid_argument("metrics: label volumes are not co-located");
    json doc = report_header("metrics", {{"structures", structure_names(s)}});
    doc["metrics"] = to_json(structure_metrics(warped, fixed, s));
    o.add_or_print(a.out, dump_report(doc));
}

struct MapDoseArgs {
    std::string dose, field, out;
};

void map_dose_cmd(const MapDoseArgs &a, Outputs &o) {
    o.check(a.out);
    const FractionRecord f{1, read_scalar(a.dose), read_field(a.field)};
    const auto mapped = map_dose(f, f.field_to_fraction.geometry);
    require_finite(mapped.data, "mapped dose");
    o.add(a.out, encode_nifti(mapped));
}

struct AccumulateArgs {
    std::vector<std::string> doses;
    std::string out;
};

void accumulate_cmd(const AccumulateArgs &a, Outputs &o) {
    o.check(a.out);
    std::vector<DoseVolume> mapped;
    for (const auto &p : a.doses) {
        mapped.push_back(read_scalar(p));
        validate_dose(mapped.back());
        if (!(mapped.back().geometry == mapped.front().geometry))
            throw std::invalid_argument("accumulate: " + p + " is on a different grid");
    }
    const auto total = accumulate(mapped);
    require_finite(total.data, "accumulated dose");
    o.add(a.out, encode_nifti(total));
}

struct DvhArgs {
    std::string dose, labels, structure, out;
    double bin_width = 0.1;
};

void dvh_cmd(const DvhArgs &a, Outputs &o) {
    if (!a.out.empty()) o.check(a.out);
    const auto s = parse_structure(a.structure);
    o.add_or_print(a.out, dvh_csv(dvh(read_scalar(a.dose), read_labels(a.labels), s, a.bin_width)));
}

struct ComplyArgs {
    std::string dose, labels, constraints, out;
};

void comply(const ComplyArgs &a, Outputs &o) {
    if (!a.out.empty()) o.check(a.out);
    const auto cs = constraints_from(a.constraints);
    const auto dose = read_scalar(a.dose);
    validate_dose(dose);
    const auto results = check_constraints(dose, read_labels(a.labels), cs);
    json doc = report_header("comply", {{"constraints", constraints_json(cs)}});
    doc["results"] = to_json(results, cs);
    o.add_or_print(a.out, dump_report(doc));
}

struct StatsArgs {
    std::string csv, a, b, out;
    bool paired = false, unpaired = false;
    StatOptions opt;
};

void stats(const StatsArgs &a, Outputs &o) {
    if (!a.out.empty()) o.check(a.out);
    const auto cols = read_csv_columns(a.csv);
    auto column = [&](const std::string &name) -> const std::vector<double> & {
        auto it = cols.find(name);
        if (it == cols.end()) throw std::invalid_argument(a.csv + ": no column named '" + name + "'");
        return it->second;
    };
    const auto &x = column(a.a);
    const auto &y = column(a.b);
    const auto r = a.paired ? wilcoxon_signed_rank(x, y, a.opt) : wilcoxon_rank_sum(x, y, a.opt);
    json doc = report_header("stats", {{"test", a.paired ? "signed_rank" : "rank_sum"},
                                       {"a", a.a},
                                       {"b", a.b},
                                       {"signed_rank_exact_max", a.opt.signed_rank_exact_max},
                                       {"rank_sum_exact_max", a.opt.rank_sum_exact_max}});
    doc["result"] = to_json(r);
    o.add_or_print(a.out, dump_report(doc));
}

struct PhantomArgs {
    std::string out_dir;
    std::uint64_t seed = 1;
    int fractions = 5;
    double max_displacement = 8.0;
    double dose_gy = 8.0;
    bool uniform_dose = false;
};

void phantom(const PhantomArgs &a, Outputs &o) {
    if (!fs::is_directory(a.out_dir)) throw std::invalid_argument("output directory does not exist: " + a.out_dir);
    PhantomSpec ps;
    ps.seed = a.seed;
    DeformSpec ds;
    ds.seed = a.seed;
    ds.max_displacement_mm = a.max_displacement;
    FractionDoseSpec fd;
    fd.dose_gy = a.dose_gy;
    fd.uniform = a.uniform_dose;
    ps.validate();
    ds.validate();
    const auto course = make_course(ps, a.fractions, fd, ds);
    const fs::path dir(a.out_dir);
    o.add(dir / "reference_image.nii", encode_nifti(course.reference.image));
    o.add(dir / "reference_labels.nii", encode_nifti(course.reference.labels));
    json files = json::array();
    for (std::size_t f = 0; f < course.records.size(); ++f) {
        const std::string stem = "fraction_" + std::to_string(course.records[f].index);
        o.add(dir / (stem + "_image.nii"), encode_nifti(course.fractions[f].image));
        o.add(dir / (stem + "_labels.nii"), encode_nifti(course.fractions[f].labels));
        o.add(dir / (stem + "_dose.nii"), encode_nifti(course.records[f].dose));
        o.add(dir / (stem + "_gt_field.nii"), encode_nifti(course.records[f].field_to_fraction));
        files.push_back({{"index", course.records[f].index},
                         {"image", stem + "_image.nii"},
                         {"labels", stem + "_labels.nii"},
                         {"dose", stem + "_dose.nii"},
                         {"gt_field", stem + "_gt_field.nii"}});
    }
    json doc = report_header("phantom", {{"seed", a.seed},
                                         {"fractions", a.fractions},
                                         {"max_displacement_mm", a.max_displacement},
                                         {"dose_gy", a.dose_gy},
                                         {"uniform_dose", a.uniform_dose}});
    doc["reference"] = {{"image", "reference_image.nii"}, {"labels", "reference_labels.nii"}};
    doc["fractions"] = files;
    doc["planned_ctv_dose_gy"] = sig9(course.planned_ctv_dose);
    o.add(dir / "phantom.json", dump_report(doc));
}

} // namespace

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Segmentation-regularized progressive deformable registration and dose evaluation", "segreg"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version);

    Outputs outputs;
    std::function<void()> action;

    PreprocessArgs pp;
    auto *c = app.add_subcommand("preprocess", "Resample onto a reference grid and normalize intensities to [0, 1]");
    c->add_option("--image", pp.image, "Input image")->required();
    c->add_option("--reference", pp.reference, "Volume whose grid is the target (default: the image's own grid)");
    c->add_option("--labels", pp.labels, "Label volume resampled alongside");
    c->add_option("--out-image", pp.out_image)->required();
    c->add_option("--out-labels", pp.out_labels);
    c->add_option("--lo-percentile", pp.lo)->capture_default_str();
    c->add_option("--hi-percentile", pp.hi)->capture_default_str();
    c->callback([&] { action = [&] { preprocess(pp, outputs, err); }; });

    RegisterArgs rg;
    c = app.add_subcommand("register", "Progressive deformable registration of moving onto fixed");
    c->add_option("--moving", rg.moving)->required();
    c->add_option("--fixed", rg.fixed)->required();
    c->add_option("--moving-labels", rg.moving_labels)->required();
    c->add_option("--fixed-labels", rg.fixed_labels)->required();
    c->add_option("--config", rg.config, "JSON configuration (default: built-in defaults)");
    c->add_option("--out-field", rg.out_field, "Pull-back field on the fixed grid, mm")->required();
    c->add_option("--out-warped", rg.out_warped, "Moving image warped onto the fixed grid");
    c->add_option("--out-warped-labels", rg.out_warped_labels);
    c->add_option("--out-report", rg.out_report, "JSON registration report");
    c->callback([&] { action = [&] { register_cmd(rg, outputs); }; });

    WarpArgs wp;
    c = app.add_subcommand("warp", "Warp a volume with a displacement field");
    c->add_option("--moving", wp.moving)->required();
    c->add_option("--field", wp.field)->required();
    c->add_option("--out", wp.out)->required();
    c->add_flag("--labels", wp.labels, "Input is a label volume (nearest neighbour)");
    c->callback([&] { action = [&] { warp(wp, outputs); }; });

    JacobianArgs jc;
    c = app.add_subcommand("jacobian", "Jacobian determinant map and summary");
    c->add_option("--field", jc.field)->required();
    c->add_option("--out", jc.out, "Determinant volume");
    c->add_option("--report", jc.report, "JSON summary (default: standard output)");
    c->callback([&] { action = [&] { jacobian(jc, outputs); }; });

    MetricsArgs mt;
    c = app.add_subcommand("metrics", "DSC, HD95 and MDA per structure as JSON");
    c->add_option("--warped-labels", mt.warped)->required();
    c->add_option("--fixed-labels", mt.fixed)->required();
    c->add_option("--structures", mt.structures)->capture_default_str();
    c->add_option("--out", mt.out, "JSON report (default: standard output)");
    c->callback([&] { action = [&] { metrics(mt, outputs); }; });

    MapDoseArgs md;
    c = app.add_subcommand("map-dose", "Pull a fraction dose back onto the reference grid");
    c->add_option("--dose", md.dose)->required();
    c->add_option("--field", md.field, "Reference-to-fraction field on the reference grid")->required();
    c->add_option("--out", md.out)->required();
    c->callback([&] { action = [&] { map_dose_cmd(md, outputs); }; });

    AccumulateArgs ac;
    c = app.add_subcommand("accumulate", "Voxelwise sum of mapped doses");
    c->add_option("--dose", ac.doses, "Mapped doses, in order")->required();
    c->add_option("--out", ac.out)->required();
    c->callback([&] { action = [&] { accumulate_cmd(ac, outputs); }; });

    DvhArgs dv;
    c = app.add_subcommand("dvh", "Cumulative DVH of one structure as CSV");
    c->add_option("--dose", dv.dose)->required();
    c->add_option("--labels", dv.labels)->required();
    c->add_option("--structure", dv.structure)->required();
    c->add_option("--bin-width", dv.bin_width, "Gy")->capture_default_str();
    c->add_option("--out", dv.out, "CSV file (default: standard output)");
    c->callback([&] { action = [&] { dvh_cmd(dv, outputs); }; });

    ComplyArgs cp;
    c = app.add_subcommand("comply", "Evaluate dose constraints");
    c->add_option("--dose", cp.dose)->required();
    c->add_option("--labels", cp.labels)->required();
    c->add_option("--constraints", cp.constraints,
                  "Constraint list or configuration document (default: built-in constraints)");
    c->add_option("--out", cp.out, "JSON report (default: standard output)");
    c->callback([&] { action = [&] { comply(cp, outputs); }; });

    StatsArgs st;
    c = app.add_subcommand("stats", "Wilcoxon test between two CSV columns");
    c->add_option("--csv", st.csv)->required();
    c->add_option("-a,--column-a", st.a)->required();
    c->add_option("-b,--column-b", st.b)->required();
    auto *paired = c->add_flag("--paired", st.paired, "Signed-rank test on paired values");
    auto *unpaired = c->add_flag("--unpaired", st.unpaired, "Rank-sum test on independent samples");
    paired->excludes(unpaired);
    c->add_option("--exact-max-paired", st.opt.signed_rank_exact_max)->capture_default_str();
    c->add_option("--exact-max-unpaired", st.opt.rank_sum_exact_max)->capture_default_str();
    c->add_option("--out", st.out, "JSON report (default: standard output)");
    c->callback([&] {
        if (!st.paired && !st.unpaired) throw CLI::ValidationError("stats", "one of --paired or --unpaired is required");
        action = [&] { stats(st, outputs); };
    });

    PhantomArgs ph;
    c = app.add_subcommand("phantom", "Generate a synthetic phantom course");
    c->add_option("--out-dir", ph.out_dir)->required();
    c->add_option("--seed", ph.seed)->capture_default_str();
    c->add_option("--fractions", ph.fractions)->capture_default_str()->check(CLI::Range(1, 100));
    c->add_option("--max-displacement", ph.max_displacement, "mm")->capture_default_str();
    c->add_option("--dose-gy", ph.dose_gy, "Per-fraction prescription")->capture_default_str();
    c->add_flag("--uniform-dose", ph.uniform_dose, "Whole grid at the prescription dose");
    c->callback([&] { action = [&] { phantom(ph, outputs); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e, out, err) == 0 ? ok : usage;
    }

    try {
        action();
        outputs.commit(out);
        return ok;
    } catch (const NumericalFailure &e) {
        err << "segreg: numerical failure: " << e.what() << "\n";
        return numerical_failure;
    } catch (const NiftiError &e) {
        err << "segreg: " << e.what() << "\n";
        return data_error;
    } catch (const std::logic_error &e) { // invalid_argument, out_of_range, ConfigError
        err << "segreg: " << e.what() << "\n";
        return data_error;
    } catch (const std::exception &e) {
        err << "segreg: numerical failure: " << e.what() << "\n";
        return numerical_failure;
    }
}

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    std::vector<const char *> argv{"segreg"};
    for (const auto &a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace segreg::cli
