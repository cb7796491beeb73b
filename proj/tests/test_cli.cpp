#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pipeline.hpp"
#include "schema_check.hpp"
#include "segreg/cli.hpp"

using namespace segreg;
using namespace segreg::testing;
using nlohmann::json;

namespace {

SchemaCheck schema(const std::string &name) {
    return SchemaCheck(json::parse(slurp(fs::path(SEGREG_SOURCE_DIR) / "docs" / "schemas" / name)));
}

std::string show(const std::vector<std::string> &errors) {
    std::string s;
    for (const auto &e : errors) s += e + "\n";
    return s;
}

std::size_t file_count(const fs::path &dir) {
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
}

} // namespace

TEST_CASE("usage errors exit 1") {
    TempDir t("cli_usage");
    const auto log = t.path / "log";
    CHECK(run_segreg("", log) == 1);
    CHECK(run_segreg("frobnicate", log) == 1);
    CHECK(run_segreg("warp --moving a.nii", log) == 1);
    CHECK(run_segreg("stats --csv x.csv -a a -b b", log) == 1);
    CHECK(run_segreg("stats --csv x.csv -a a -b b --paired --unpaired", log) == 1);
    CHECK(run_segreg("--help", log) == 0);
    CHECK(run_segreg("--version", log) == 0);
    CHECK(slurp(log).find(tool_version) != std::string::npos);
}

TEST_CASE("data errors exit 2 and leave no outputs") {
    TempDir t("cli_data");
    const auto d = [&](const std::string &n) { return quote(t.path / n); };
    const auto log = t.path / "log";
    REQUIRE(run_segreg("phantom --out-dir " + quote(t.path) + " --fractions 1 --seed 4", log) == 0);
    const auto before = file_count(t.path) - 1; // minus the log

    CHECK(run_segreg("warp --moving " + d("missing.nii") + " --field " + d("fraction_1_gt_field.nii") + " --out " +
                         d("w.nii"),
                     log) == 2);
    CHECK(slurp(log).find("missing.nii") != std::string::npos);
    // a label file read as a field
    CHECK(run_segreg("jacobian --field " + d("reference_labels.nii") + " --out " + d("j.nii"), log) == 2);
    // second output's directory is missing: the first output is not written either
    CHECK(run_segreg("jacobian --field " + d("fraction_1_gt_field.nii") + " --out " + d("j.nii") + " --report " +
                         d("nodir/j.json"),
                     log) == 2);
    std::ofstream(t.path / "bad.json") << R"({"loss": {"lambda_cons": -1}})";
    CHECK(run_segreg("register --moving " + d("reference_image.nii") + " --fixed " + d("reference_image.nii") +
                         " --moving-labels " + d("reference_labels.nii") + " --fixed-labels " +
                         d("reference_labels.nii") + " --config " + d("bad.json") + " --out-field " + d("f.nii"),
                     log) == 2);
    CHECK(slurp(log).find("/loss/lambda_cons") != std::string::npos);
    CHECK(run_segreg("dvh --dose " + d("fraction_1_dose.nii") + " --labels " + d("reference_labels.nii") +
                         " --structure liver --out " + d("dvh.csv"),
                     log) == 2);
    std::ofstream(t.path / "neg.csv") << "a,b\n1,2\n";
    CHECK(run_segreg("stats --csv " + d("neg.csv") + " -a a -b c --paired --out " + d("s.json"), log) == 2);

    fs::remove(t.path / "log");
    CHECK(file_count(t.path) == before + 2); // bad.json and neg.csv only
    CHECK_FALSE(fs::exists(t.path / "j.nii"));
}

TEST_CASE("phantom writes a readable course") {
    TempDir t("cli_phantom");
    REQUIRE(run_segreg("phantom --out-dir " + quote(t.path) + " --fractions 2 --seed 7", t.path / "log") == 0);
    PhantomSpec ps;
    ps.seed = 7;
    DeformSpec ds;
    ds.seed = 7;
    const auto course = make_course(ps, 2, FractionDoseSpec{}, ds);
    CHECK(read_labels(t.path / "reference_labels.nii") == course.reference.labels);
    CHECK(read_labels(t.path / "fraction_2_labels.nii") == course.fractions[1].labels);
    CHECK(read_file(t.path / "fraction_2_gt_field.nii") == encode_nifti(course.records[1].field_to_fraction));
    CHECK(read_file(t.path / "fraction_2_dose.nii") == encode_nifti(course.records[1].dose));
    const auto manifest = json::parse(slurp(t.path / "phantom.json"));
    CHECK(manifest["fractions"].size() == 2);
    CHECK(manifest["config"]["seed"] == 7);
}

TEST_CASE("accumulate five uniform 8 Gy fractions") {
    TempDir t("cli_acc");
    const auto d = [&](const std::string &n) { return quote(t.path / n); };
    REQUIRE(run_segreg("phantom --out-dir " + quote(t.path) + " --fractions 5 --uniform-dose", t.path / "log") == 0);
    std::string doses;
    for (int f = 1; f <= 5; ++f) doses += " " + d("fraction_" + std::to_string(f) + "_dose.nii");
    REQUIRE(run_segreg("accumulate --dose" + doses + " --out " + d("acc.nii"), t.path / "log") == 0);
    const auto acc = read_scalar(t.path / "acc.nii");
    CHECK(*std::max_element(acc.data.begin(), acc.data.end()) == 40.0);
    CHECK(*std::min_element(acc.data.begin(), acc.data.end()) == 40.0);

    REQUIRE(run_segreg("comply --dose " + d("acc.nii") + " --labels " + d("reference_labels.nii") + " --out " +
                           d("c.json"),
                       t.path / "log") == 0);
    const auto report = json::parse(slurp(t.path / "c.json"));
    CHECK(show(schema("comply_report.schema.json").errors(report)) == "");
    CHECK(report["results"][0]["value"] == 40.0);
    CHECK(report["results"][0]["passed"] == true);  // D95 >= 40
    CHECK(report["results"][1]["passed"] == false); // mean >= 40.4

    REQUIRE(run_segreg("dvh --dose " + d("acc.nii") + " --labels " + d("reference_labels.nii") +
                           " --structure ctv --bin-width 10",
                       t.path / "dvh.csv") == 0);
    CHECK(slurp(t.path / "dvh.csv") == "level_gy,percent_volume\n0,100\n10,100\n20,100\n30,100\n40,100\n50,0\n");
}

TEST_CASE("self-registration, warp, metrics and jacobian") {
    TempDir t("cli_self");
    const auto d = [&](const std::string &n) { return quote(t.path / n); };
    const auto log = t.path / "log";
    REQUIRE(run_segreg("phantom --out-dir " + quote(t.path) + " --fractions 1 --seed 2", log) == 0);
    std::ofstream(t.path / "cfg.json") << R"({"registration": {"n_steps": 4}})";
    REQUIRE(run_segreg("register --moving " + d("reference_image.nii") + " --fixed " + d("reference_image.nii") +
                           " --moving-labels " + d("reference_labels.nii") + " --fixed-labels " +
                           d("reference_labels.nii") + " --config " + d("cfg.json") + " --out-field " + d("f.nii") +
                           " --out-warped " + d("w.nii") + " --out-warped-labels " + d("wl.nii") + " --out-report " +
                           d("r.json"),
                       log) == 0);
    const auto report = json::parse(slurp(t.path / "r.json"));
    CHECK(show(schema("registration_report.schema.json").errors(report)) == "");
    CHECK(report["steps"].size() == 4);
    CHECK(report["config"]["registration"]["n_steps"] == 4);
    CHECK(report["config"]["loss"]["lambda_smooth"] == 30.0);
    CHECK(report["metrics"]["bladder"]["dsc"].get<double>() >= 0.999);

    REQUIRE(run_segreg("warp --labels --moving " + d("reference_labels.nii") + " --field " + d("f.nii") + " --out " +
                           d("wl2.nii"),
                       log) == 0);
    CHECK(read_labels(t.path / "wl2.nii") == read_labels(t.path / "wl.nii"));
    REQUIRE(run_segreg("metrics --warped-labels " + d("wl.nii") + " --fixed-labels " + d("reference_labels.nii") +
                           " --out " + d("m.json"),
                       log) == 0);
    const auto m = json::parse(slurp(t.path / "m.json"));
    CHECK(show(schema("metrics_report.schema.json").errors(m)) == "");
    CHECK(m["metrics"] == report["metrics"]);
    REQUIRE(run_segreg("jacobian --field " + d("f.nii") + " --out " + d("j.nii") + " --report " + d("j.json"), log) == 0);
    CHECK(json::parse(slurp(t.path / "j.json"))["jacobian"]["nonpositive_voxels"] == 0);

    REQUIRE(run_segreg("preprocess --image " + d("reference_image.nii") + " --out-image " + d("p.nii"), log) == 0);
    const auto p = read_scalar(t.path / "p.nii");
    CHECK(*std::min_element(p.data.begin(), p.data.end()) == 0.0);
    CHECK(*std::max_element(p.data.begin(), p.data.end()) == 1.0);
}

TEST_CASE("stats over CSV columns") {
    TempDir t("cli_stats");
    std::ofstream(t.path / "s.csv") << "before,after\n1,2\n2,4\n3,6\n4,8\n5,10\n6,12\n";
    REQUIRE(run_segreg("stats --csv " + quote(t.path / "s.csv") + " -a after -b before --paired --out " +
                           quote(t.path / "s.json"),
                       t.path / "log") == 0);
    const auto r = json::parse(slurp(t.path / "s.json"));
    CHECK(show(schema("stats_report.schema.json").errors(r)) == "");
    CHECK(r["result"]["p_value"] == 0.03125);
    CHECK(r["result"]["method"] == "exact");
    REQUIRE(run_segreg("stats --csv " + quote(t.path / "s.csv") + " -a after -b before --unpaired", t.path / "u.json") == 0);
    CHECK(json::parse(slurp(t.path / "u.json"))["config"]["test"] == "rank_sum");
}

TEST_CASE("in-process entry point") {
    std::ostringstream out, err;
    CHECK(cli::run(std::vector<std::string>{"--version"}, out, err) == cli::ok);
    CHECK(cli::run(std::vector<std::string>{"register"}, out, err) == cli::usage);
}

TEST_CASE("configuration schema accepts the default configuration") {
    const auto s = schema("config.schema.json");
    CHECK(show(s.errors(to_json(PipelineConfig{}))) == "");
    CHECK_FALSE(s.errors(json::parse(R"({"loss": {"lambda_cons": -1}})")).empty());
    CHECK_FALSE(s.errors(json::parse(R"({"registration": {"n_step": 4}})")).empty());
}

TEST_CASE("course through the executable matches the library run bit for bit") {
    TempDir t("cli_course");
    const auto cli = cli_course(t.path, 5, 3);
    REQUIRE_MESSAGE(cli.ok, cli.failure);
    MESSAGE("CLI course took " << cli.seconds << " s");
    CHECK(cli.seconds <= 300.0);
    const auto lib = library_course(5, 3);
    CHECK(cli.comply_report == lib.comply_report);
    CHECK(cli.accumulated == lib.accumulated);
    REQUIRE(cli.fields.size() == lib.fields.size());
    for (std::size_t f = 0; f < cli.fields.size(); ++f) CHECK(cli.fields[f] == lib.fields[f]);
    CHECK(show(schema("comply_report.schema.json").errors(json::parse(cli.comply_report))) == "");
}
