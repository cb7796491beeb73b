#include "segreg/config.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace segreg {

using nlohmann::json;

namespace {

const char *type_name(const json &v) {
    if (v.is_number_integer()) return "integer";
    if (v.is_number()) return "number";
    return v.type_name();
}

const json &require_object(const json &v, const std::string &path) {
    if (!v.is_object()) throw ConfigError(path, std::string("expected an object, found ") + type_name(v));
    return v;
}

void reject_unknown(const json &obj, const std::string &path, std::initializer_list<const char *> known) {
    for (const auto &[key, value] : obj.items()) {
        bool ok = false;
        for (const char *k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(path + "/" + key, "unknown key");
    }
}

double get_real(const json &v, const std::string &path) {
    if (!v.is_number()) throw ConfigError(path, std::string("expected a number, found ") + type_name(v));
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
}

long long get_int(const json &v, const std::string &path) {
    if (!v.is_number_integer()) throw ConfigError(path, std::string("expected an integer, found ") + type_name(v));
    if (v.is_number_unsigned() && v.get<unsigned long long>() > static_cast<unsigned long long>(INT32_MAX))
        throw ConfigError(path, "integer out of range");
    const long long x = v.get<long long>();
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(path, "integer out of range");
    return x;
}

std::string get_string(const json &v, const std::string &path) {
    if (!v.is_string()) throw ConfigError(path, std::string("expected a string, found ") + type_name(v));
    return v.get<std::string>();
}

template <class F> void with(const json &obj, const char *key, const std::string &path, F f) {
    if (auto it = obj.find(key); it != obj.end()) f(*it, path + "/" + key);
}

template <class F> void validated(const std::string &path, F f) {
    try {
        f();
    } catch (const ConfigError &) {
        throw;
    } catch (const std::invalid_argument &e) {
        throw ConfigError(path, e.what());
    }
}

RegistrationConfig parse_registration(const json &obj, const std::string &path) {
    require_object(obj, path);
    reject_unknown(obj, path, {"n_steps", "iters_per_step", "step_size", "grad_smoothing_sigma", "pyramid_levels",
                               "converge_tol", "seed", "mask_blur_sigma", "rigid_radius"});
    RegistrationConfig c;
    with(obj, "n_steps", path, [&](const json &v, const std::string &p) { c.n_steps = static_cast<int>(get_int(v, p)); });
    with(obj, "iters_per_step", path,
         [&](const json &v, const std::string &p) { c.iters_per_step = static_cast<int>(get_int(v, p)); });
    with(obj, "step_size", path, [&](const json &v, const std::string &p) { c.step_size = get_real(v, p); });
    with(obj, "grad_smoothing_sigma", path,
         [&](const json &v, const std::string &p) { c.grad_smoothing_sigma = get_real(v, p); });
    with(obj, "pyramid_levels", path,
         [&](const json &v, const std::string &p) { c.pyramid_levels = static_cast<int>(get_int(v, p)); });
    with(obj, "converge_tol", path, [&](const json &v, const std::string &p) { c.converge_tol = get_real(v, p); });
    with(obj, "seed", path, [&](const json &v, const std::string &p) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw ConfigError(p, std::string("expected a non-negative integer, found ") + type_name(v));
        c.seed = v.get<std::uint64_t>();
    });
    with(obj, "mask_blur_sigma", path, [&](const json &v, const std::string &p) { c.mask_blur_sigma = get_real(v, p); });
    with(obj, "rigid_radius", path,
         [&](const json &v, const std::string &p) { c.rigid_radius = static_cast<int>(get_int(v, p)); });
    validated(path, [&] { c.validate(); });
    return c;
}

SmoothReduction parse_reduction(const std::string &s, const std::string &path) {
    if (s == "sum") return SmoothReduction::sum;
    if (s == "mean") return SmoothReduction::mean;
    if (s == "element_mean") return SmoothReduction::element_mean;
    throw ConfigError(path, "expected one of sum, mean, element_mean");
}

LossWeights parse_loss(const json &obj, const std::string &path) {
    require_object(obj, path);
    reject_unknown(obj, path, {"lambda_smooth", "lambda_cons", "structure_weights", "patch", "smooth_reduction"});
    LossWeights w;
    with(obj, "lambda_smooth", path, [&](const json &v, const std::string &p) {
        w.lambda_smooth = get_real(v, p);
        if (w.lambda_smooth < 0.0) throw ConfigError(p, "must be >= 0");
    });
    with(obj, "lambda_cons", path, [&](const json &v, const std::string &p) {
        w.lambda_cons = get_real(v, p);
        if (w.lambda_cons < 0.0) throw ConfigError(p, "must be >= 0");
    });
    with(obj, "structure_weights", path, [&](const json &v, const std::string &p) {
        require_object(v, p);
        reject_unknown(v, p, {"bladder", "rectum", "ctv"});
        for (const auto &[key, value] : v.items()) w.structure_weights[parse_structure(key)] = get_real(value, p + "/" + key);
    });
    with(obj, "patch", path, [&](const json &v, const std::string &p) {
        if (!v.is_array() || v.size() != 3) throw ConfigError(p, "expected an array of three integers");
        for (int a = 0; a < 3; ++a) w.patch[a] = static_cast<int>(get_int(v[a], p + "/" + std::to_string(a)));
    });
    with(obj, "smooth_reduction", path,
         [&](const json &v, const std::string &p) { w.smooth_reduction = parse_reduction(get_string(v, p), p); });
    validated(path, [&] { w.validate(); });
    return w;
}

} // namespace

std::string to_string(SmoothReduction r) {
    switch (r) {
    case SmoothReduction::sum: return "sum";
    case SmoothReduction::mean: return "mean";
    case SmoothReduction::element_mean: return "element_mean";
    }
    return "?";
}

DoseQuery parse_query(const std::string &text) {
    if (text == "mean") return DoseQuery::mean_dose();
    if (text.size() >= 2 && (text[0] == 'D' || text[0] == 'V')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(text.substr(1), &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used == text.size() - 1 && std::isfinite(v)) return text[0] == 'D' ? DoseQuery::d(v) : DoseQuery::v(v);
    }
    throw std::invalid_argument("dose query must be D<percent>, V<Gy> or mean, got '" + text + "'");
}

DoseConstraint::Op parse_op(const std::string &text) {
    using Op = DoseConstraint::Op;
    for (Op op : {Op::ge, Op::gt, Op::le, Op::lt, Op::report})
        if (text == to_string(op)) return op;
    throw std::invalid_argument("constraint op must be one of >=, >, <=, <, report; got '" + text + "'");
}

std::vector<DoseConstraint> parse_constraints(const json &list, const std::string &path) {
    if (!list.is_array()) throw ConfigError(path, std::string("expected an array, found ") + type_name(list));
    std::vector<DoseConstraint> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = path + "/" + std::to_string(i);
        const json &obj = require_object(list[i], p);
        reject_unknown(obj, p, {"id", "structure", "query", "op", "threshold"});
        for (const char *k : {"id", "structure", "query", "op"})
            if (!obj.contains(k)) throw ConfigError(p + "/" + k, "missing required key");
        DoseConstraint c;
        c.id = get_string(obj["id"], p + "/id");
        validated(p + "/structure", [&] { c.structure = parse_structure(get_string(obj["structure"], p + "/structure")); });
        validated(p + "/query", [&] { c.query = parse_query(get_string(obj["query"], p + "/query")); });
        validated(p + "/op", [&] { c.op = parse_op(get_string(obj["op"], p + "/op")); });
        if (c.op != DoseConstraint::Op::report) {
            if (!obj.contains("threshold")) throw ConfigError(p + "/threshold", "missing required key");
            c.threshold = get_real(obj["threshold"], p + "/threshold");
        } else if (obj.contains("threshold")) {
            c.threshold = get_real(obj["threshold"], p + "/threshold");
        }
        validated(p, [&] { c.validate(); });
        for (const auto &prev : out)
            if (prev.id == c.id) throw ConfigError(p + "/id", "duplicate constraint id '" + c.id + "'");
        out.push_back(c);
    }
    return out;
}

PipelineConfig parse_config(const json &doc) {
    require_object(doc, "");
    reject_unknown(doc, "", {"registration", "loss", "constraints"});
    PipelineConfig c;
    with(doc, "registration", "", [&](const json &v, const std::string &p) { c.registration = parse_registration(v, p); });
    with(doc, "loss", "", [&](const json &v, const std::string &p) { c.loss = parse_loss(v, p); });
    with(doc, "constraints", "", [&](const json &v, const std::string &p) { c.constraints = parse_constraints(v, p); });
    return c;
}

PipelineConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open configuration file");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) return PipelineConfig{};
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error &e) {
        throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

json to_json(const DoseConstraint &c) {
    return {{"id", c.id},
            {"structure", std::string(structure_name(c.structure))},
            {"query", describe(c.query)},
            {"op", to_string(c.op)},
            {"threshold", c.threshold}};
}

json to_json(const PipelineConfig &config) {
    const auto &r = config.registration;
    const auto &w = config.loss;
    json weights = json::object();
    for (const auto &[s, v] : w.structure_weights) weights[std::string(structure_name(s))] = v;
    json constraints = json::array();
    for (const auto &c : config.constraints) constraints.push_back(to_json(c));
    return {{"registration",
             {{"n_steps", r.n_steps},
              {"iters_per_step", r.iters_per_step},
              {"step_size", r.step_size},
              {"grad_smoothing_sigma", r.grad_smoothing_sigma},
              {"pyramid_levels", r.pyramid_levels},
              {"converge_tol", r.converge_tol},
              {"seed", r.seed},
              {"mask_blur_sigma", r.mask_blur_sigma},
              {"rigid_radius", r.rigid_radius}}},
            {"loss",
             {{"lambda_smooth", w.lambda_smooth},
              {"lambda_cons", w.lambda_cons},
              {"structure_weights", weights},
              {"patch", {w.patch[0], w.patch[1], w.patch[2]}},
              {"smooth_reduction", to_string(w.smooth_reduction)}}},
            {"constraints", constraints}};
}

} // namespace segreg
