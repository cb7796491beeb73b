#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "segreg/report.hpp"
#include "support.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>

using namespace segreg;
using namespace segreg::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("segreg_cfg_" + std::to_string(::getpid()))) { fs::create_directories(path); }
    ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path &p, const std::string &text) { std::ofstream(p) << text; }

std::string error_path(const json &doc) {
    try {
        parse_config(doc);
    } catch (const ConfigError &e) {
        return e.path();
    }
    return "<no error>";
}

} // namespace

TEST_CASE("empty configuration gives defaults") {
    TempDir t;
    write(t.path / "empty.json", "  \n");
    write(t.path / "obj.json", "{}");
    for (const char *name : {"empty.json", "obj.json"}) {
        const auto c = load_config(t.path / name);
        CHECK(c.loss.lambda_smooth == 30.0);
        CHECK(c.loss.lambda_cons == 5.0);
        CHECK(c.loss.structure_weights.at(Structure::bladder) == 0.40);
        CHECK(c.loss.structure_weights.at(Structure::rectum) == 0.30);
        CHECK(c.loss.structure_weights.at(Structure::ctv) == 0.30);
        CHECK(c.registration.n_steps == 8);
        CHECK(c.constraints.size() == default_constraints().size());
    }
}

TEST_CASE("validation errors carry the JSON path") {
    CHECK(error_path(json::parse(R"({"loss": {"lambda_cons": -1}})")) == "/loss/lambda_cons");
    CHECK(error_path(json::parse(R"({"loss": {"lambda_smooth": "thirty"}})")) == "/loss/lambda_smooth");
    CHECK(error_path(json::parse(R"({"registration": {"n_step": 4}})")) == "/registration/n_step");
    CHECK(error_path(json::parse(R"({"registration": {"n_steps": 2.5}})")) == "/registration/n_steps");
    CHECK(error_path(json::parse(R"({"registration": {"n_steps": 0}})")) == "/registration");
    CHECK(error_path(json::parse(R"({"extra": 1})")) == "/extra");
    CHECK(error_path(json::parse(R"({"loss": {"structure_weights": {"bladder": 0.5}}})")) == "/loss");
    CHECK(error_path(json::parse(R"({"loss": {"patch": [8, 8]}})")) == "/loss/patch");
    CHECK(error_path(json::parse(R"({"constraints": [{"id": "a", "structure": "ctv", "query": "D95", "op": ">="}]})")) ==
          "/constraints/0/threshold");
    CHECK(error_path(json::parse(R"({"constraints": [{"id": "a", "structure": "liver", "query": "D95", "op": "report"}]})")) ==
          "/constraints/0/structure");
    CHECK(error_path(json::parse(R"({"constraints": [{"id": "a", "structure": "ctv", "query": "D9x", "op": "report"}]})")) ==
          "/constraints/0/query");
    CHECK(error_path(json::parse(R"({"constraints": [{"id": "a", "structure": "ctv", "query": "mean", "op": "report"},
                                                    {"id": "a", "structure": "ctv", "query": "mean", "op": "report"}]})")) ==
          "/constraints/1/id");

    TempDir t;
    write(t.path / "bad.json", "{\"loss\": ");
    CHECK_THROWS_AS(load_config(t.path / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(t.path / "missing.json"), ConfigError);
}

TEST_CASE("overrides and round trip") {
    const auto c = parse_config(json::parse(R"({
        "registration": {"n_steps": 4, "seed": 12345678901234},
        "loss": {"lambda_smooth": 10, "structure_weights": {"bladder": 0.5, "rectum": 0.25, "ctv": 0.25},
                 "smooth_reduction": "sum"},
        "constraints": [{"id": "c1", "structure": "bladder", "query": "V30", "op": "<", "threshold": 25.5}]})"));
    CHECK(c.registration.n_steps == 4);
    CHECK(c.registration.seed == 12345678901234ULL);
    CHECK(c.loss.lambda_smooth == 10.0);
    CHECK(c.loss.smooth_reduction == SmoothReduction::sum);
    REQUIRE(c.constraints.size() == 1);
    CHECK(c.constraints[0].query.kind == DoseQuery::Kind::v_gy);
    CHECK(c.constraints[0].query.value == 30.0);
    CHECK(c.constraints[0].op == DoseConstraint::Op::lt);

    const json echoed = to_json(c);
    CHECK(to_json(parse_config(echoed)) == echoed);
    CHECK(to_json(parse_config(to_json(PipelineConfig{}))) == to_json(PipelineConfig{}));
}

TEST_CASE("query and op parsing") {
    CHECK(parse_query("D95").kind == DoseQuery::Kind::d_percent);
    CHECK(parse_query("D2.5").value == 2.5);
    CHECK(parse_query("mean").kind == DoseQuery::Kind::mean);
    CHECK_THROWS(parse_query("D"));
    CHECK_THROWS(parse_query("X95"));
    CHECK_THROWS(parse_query("D95Gy"));
    for (auto op : {DoseConstraint::Op::ge, DoseConstraint::Op::gt, DoseConstraint::Op::le, DoseConstraint::Op::lt,
                    DoseConstraint::Op::report})
        CHECK(parse_op(to_string(op)) == op);
    CHECK_THROWS(parse_op("=="));
}

TEST_CASE("nine significant digits") {
    CHECK(sig9(1.0 / 3.0) == 0.333333333);
    CHECK(sig9(123456789.4) == 123456789.0);
    CHECK(sig9(0.0) == 0.0);
    CHECK(sig9(2.0) == 2.0);
    // the serialized value parses back to the rounded double
    const double x = sig9(0.1 + 0.2);
    CHECK(json::parse(json(x).dump()).get<double>() == x);
    CHECK_THROWS(sig9(std::nan("")));
}

TEST_CASE("report documents") {
    const auto g = grid(6, 6, 6);
    LabelVolume a(g, 0), b(g, 0);
    for (int k = 1; k < 5; ++k)
        for (int j = 1; j < 5; ++j)
            for (int i = 1; i < 5; ++i) {
                a(i, j, k) = static_cast<int>(Structure::bladder);
                b(i, j, k) = static_cast<int>(i < 3 ? Structure::bladder : Structure::ctv);
            }
    const std::array<Structure, 2> s{Structure::bladder, Structure::rectum};
    const auto m = structure_metrics(a, b, s);
    CHECK(m[0].dsc == doctest::Approx(2.0 * 32 / (64 + 32)));
    CHECK(m[0].hd95.has_value());
    CHECK(m[1].dsc == 1.0); // both empty
    CHECK_FALSE(m[1].hd95.has_value());
    const json j = to_json(m);
    CHECK(j["rectum"]["hd95_mm"].is_null());
    CHECK(j["bladder"]["dsc"].get<double>() == sig9(m[0].dsc));

    ScalarVolume det(g, 1.0);
    det.data[0] = -0.5;
    det.data[1] = 0.0;
    const auto js = summarize_jacobian(det);
    CHECK(js.min == -0.5);
    CHECK(js.max == 1.0);
    CHECK(js.nonpositive == 2);
    CHECK(js.percent_nonpositive == doctest::Approx(200.0 / 216.0));

    const json h = report_header("metrics", to_json(PipelineConfig{}));
    CHECK(h["tool"] == tool_version);
    CHECK(h["config"]["loss"]["lambda_cons"] == 5.0);

    const auto results = std::vector<ConstraintResult>{{"x", 41.0, true}, {"y", 3.0, std::nullopt}};
    const auto constraints = std::vector<DoseConstraint>{
        {"x", Structure::ctv, DoseQuery::d(95.0), DoseConstraint::Op::ge, 40.0},
        {"y", Structure::rectum, DoseQuery::v(30.0), DoseConstraint::Op::report, 0.0}};
    const json cj = to_json(results, constraints);
    CHECK(cj[0]["passed"] == true);
    CHECK(cj[0]["query"] == "D95");
    CHECK(cj[1]["passed"].is_null());
    CHECK(cj[1]["threshold"].is_null());
}

TEST_CASE("DVH CSV and CSV columns") {
    const std::vector<DvhPoint> curve{{0.0, 100.0}, {0.1, 50.0}, {0.2, 0.0}};
    CHECK(dvh_csv(curve) == "level_gy,percent_volume\n0,100\n0.1,50\n0.2,0\n");

    TempDir t;
    write_text_atomic(t.path / "a.csv", "x,y\n1,2\n3.5, 4\n\n");
    const auto cols = read_csv_columns(t.path / "a.csv");
    CHECK(cols.at("x") == std::vector<double>{1.0, 3.5});
    CHECK(cols.at("y") == std::vector<double>{2.0, 4.0});
    write_text_atomic(t.path / "b.csv", "x,y\n1\n");
    CHECK_THROWS_AS(read_csv_columns(t.path / "b.csv"), std::invalid_argument);
    write_text_atomic(t.path / "c.csv", "x\nabc\n");
    CHECK_THROWS_AS(read_csv_columns(t.path / "c.csv"), std::invalid_argument);
    CHECK_THROWS_AS(read_csv_columns(t.path / "none.csv"), std::invalid_argument);
}
