#pragma once

// Just enough JSON Schema for the shipped schemas: type, enum, required, properties,
// additionalProperties, items, minItems/maxItems, minimum/maximum/exclusiveMinimum,
// pattern and local $ref. Returns the list of violations (empty when valid).

#include "json.hpp"

#include <regex>
#include <string>
#include <vector>

namespace segreg::testing {

class SchemaCheck {
public:
    explicit SchemaCheck(nlohmann::json schema) : root_(std::move(schema)) {}

    std::vector<std::string> errors(const nlohmann::json &doc) const {
        std::vector<std::string> out;
        check(root_, doc, "", out);
        return out;
    }

private:
    nlohmann::json root_;

    static bool has_type(const nlohmann::json &v, const std::string &t) {
        if (t == "object") return v.is_object();
        if (t == "array") return v.is_array();
        if (t == "string") return v.is_string();
        if (t == "boolean") return v.is_boolean();
        if (t == "null") return v.is_null();
        if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())));
        if (t == "number") return v.is_number();
        return false;
    }

    const nlohmann::json &resolve(const nlohmann::json &s) const {
        if (!s.contains("$ref")) return s;
        const auto ref = s["$ref"].get<std::string>();
        return resolve(root_.at(nlohmann::json::json_pointer(ref.substr(1))));
    }

    void check(const nlohmann::json &schema_in, const nlohmann::json &v, const std::string &path,
               std::vector<std::string> &out) const {
        const auto &s = resolve(schema_in);
        if (s.contains("type")) {
            bool ok = false;
            if (s["type"].is_array())
                for (const auto &t : s["type"]) ok = ok || has_type(v, t);
            else
                ok = has_type(v, s["type"]);
            if (!ok) {
                out.push_back(path + ": wrong type");
                return;
            }
        }
        if (s.contains("enum")) {
            bool ok = false;
            for (const auto &e : s["enum"]) ok = ok || e == v;
            if (!ok) out.push_back(path + ": not in enum");
        }
        if (v.is_number()) {
            const double x = v.get<double>();
            if (s.contains("minimum") && x < s["minimum"].get<double>()) out.push_back(path + ": below minimum");
            if (s.contains("maximum") && x > s["maximum"].get<double>()) out.push_back(path + ": above maximum");
            if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
                out.push_back(path + ": not above exclusiveMinimum");
        }
        if (v.is_string() && s.contains("pattern") &&
            !std::regex_search(v.get<std::string>(), std::regex(s["pattern"].get<std::string>())))
            out.push_back(path + ": pattern mismatch");
        if (v.is_array()) {
            if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) out.push_back(path + ": too few items");
            if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) out.push_back(path + ": too many items");
            if (s.contains("items"))
                for (std::size_t i = 0; i < v.size(); ++i) check(s["items"], v[i], path + "/" + std::to_string(i), out);
        }
        if (v.is_object()) {
            if (s.contains("required"))
                for (const auto &k : s["required"])
                    if (!v.contains(k.get<std::string>())) out.push_back(path + "/" + k.get<std::string>() + ": missing");
            for (const auto &[key, value] : v.items()) {
                const std::string p = path + "/" + key;
                if (s.contains("properties") && s["properties"].contains(key)) {
                    check(s["properties"][key], value, p, out);
                } else if (s.contains("additionalProperties")) {
                    const auto &ap = s["additionalProperties"];
                    if (ap.is_boolean()) {
                        if (!ap.get<bool>()) out.push_back(p + ": unexpected key");
                    } else {
                        check(ap, value, p, out);
                    }
                }
            }
        }
    }
};

} // namespace segreg::testing
