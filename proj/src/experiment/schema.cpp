#include "kt/experiment/schema.hpp"

#include "config_schema_text.hpp"
#include "kt/error.hpp"

namespace kt::experiment {

using nlohmann::json;

namespace {

std::string type_of(const json& v) {
    if (v.is_null()) return "null";
    if (v.is_boolean()) return "boolean";
    if (v.is_number_integer()) return "integer";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) return "array";
    return "object";
}

bool type_matches(const json& v, const std::string& t) {
    if (t == "number") return v.is_number();
    if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())));
    return type_of(v) == t;
}

std::string where(const std::string& ptr) { return ptr.empty() ? "/" : ptr; }

class Validator {
public:
    explicit Validator(const json& root) : root_(root) {}

    void check(const json& v, const json& s, const std::string& ptr, std::vector<std::string>& errs) const {
        if (s.contains("$ref")) {
            check(v, resolve(s.at("$ref").get<std::string>()), ptr, errs);
            return;
        }
        if (s.contains("type")) {
            const auto& t = s.at("type");
            bool ok = false;
            std::string expected;
            for (const auto& one : t.is_array() ? t : json::array({t})) {
                ok = ok || type_matches(v, one.get<std::string>());
                expected += (expected.empty() ? "" : " or ") + one.get<std::string>();
            }
            if (!ok) {
                errs.push_back(where(ptr) + ": expected " + expected + ", got " + type_of(v));
                return;
            }
        }
        if (s.contains("enum")) {
            bool found = false;
            for (const auto& e : s.at("enum")) found = found || e == v;
            if (!found) errs.push_back(where(ptr) + ": value " + v.dump() + " is not one of " + s.at("enum").dump());
        }
        if (s.contains("const") && s.at("const") != v)
            errs.push_back(where(ptr) + ": value must be " + s.at("const").dump());
        if (v.is_number()) numeric(v, s, ptr, errs);
        if (v.is_string() && s.contains("minLength") && v.get<std::string>().size() < s.at("minLength").get<std::size_t>())
            errs.push_back(where(ptr) + ": string shorter than " + s.at("minLength").dump());
        if (v.is_array()) array(v, s, ptr, errs);
        if (v.is_object()) object(v, s, ptr, errs);
        if (s.contains("anyOf") || s.contains("oneOf")) alternatives(v, s, ptr, errs);
    }

private:
    const json& resolve(const std::string& ref) const {
        const std::string prefix = "#/";
        if (ref.rfind(prefix, 0) != 0) fail(Errc::invalid_argument, "unsupported schema reference " + ref);
        return root_.at(json::json_pointer(ref.substr(1)));
    }

    static void numeric(const json& v, const json& s, const std::string& ptr, std::vector<std::string>& errs) {
        const double x = v.get<double>();
        auto bound = [&](const char* key, bool bad, const char* words) {
            if (s.contains(key) && bad) errs.push_back(where(ptr) + ": " + v.dump() + " " + words + " " + s.at(key).dump());
        };
        if (s.contains("minimum")) bound("minimum", x < s.at("minimum").get<double>(), "is below the minimum");
        if (s.contains("maximum")) bound("maximum", x > s.at("maximum").get<double>(), "is above the maximum");
        if (s.contains("exclusiveMinimum"))
            bound("exclusiveMinimum", x <= s.at("exclusiveMinimum").get<double>(), "must be greater than");
        if (s.contains("exclusiveMaximum"))
            bound("exclusiveMaximum", x >= s.at("exclusiveMaximum").get<double>(), "must be less than");
    }

    void array(const json& v, const json& s, const std::string& ptr, std::vector<std::string>& errs) const {
        if (s.contains("minItems") && v.size() < s.at("minItems").get<std::size_t>())
            errs.push_back(where(ptr) + ": needs at least " + s.at("minItems").dump() + " items");
        if (s.contains("maxItems") && v.size() > s.at("maxItems").get<std::size_t>())
            errs.push_back(where(ptr) + ": allows at most " + s.at("maxItems").dump() + " items");
        if (s.contains("items"))
            for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s.at("items"), ptr + "/" + std::to_string(i), errs);
    }

    void object(const json& v, const json& s, const std::string& ptr, std::vector<std::string>& errs) const {
        if (s.contains("required"))
            for (const auto& r : s.at("required"))
                if (!v.contains(r.get<std::string>()))
                    errs.push_back(where(ptr) + ": missing required field '" + r.get<std::string>() + "'");
        const json empty = json::object();
        const auto& props = s.contains("properties") ? s.at("properties") : empty;
        for (const auto& [key, value] : v.items()) {
            const auto child = ptr + "/" + key;
            if (props.contains(key))
                check(value, props.at(key), child, errs);
            else if (s.contains("additionalProperties") && s.at("additionalProperties") == false)
                errs.push_back(where(child) + ": unknown field");
        }
    }

    void alternatives(const json& v, const json& s, const std::string& ptr, std::vector<std::string>& errs) const {
        const bool one = s.contains("oneOf");
        const auto& branches = s.at(one ? "oneOf" : "anyOf");
        std::size_t matches = 0;
        std::vector<std::string> best;
        bool have_best = false;
        for (const auto& b : branches) {
            std::vector<std::string> sub;
            check(v, b, ptr, sub);
            if (sub.empty()) {
                ++matches;
            } else if (!have_best || sub.size() < best.size()) {
                best = std::move(sub);
                have_best = true;
            }
        }
        if (matches == 0) {
            errs.push_back(where(ptr) + ": matches none of the allowed forms");
            errs.insert(errs.end(), best.begin(), best.end());
        } else if (one && matches > 1) {
            errs.push_back(where(ptr) + ": matches more than one allowed form");
        }
    }

    const json& root_;
};

}  // namespace

std::vector<std::string> validate_schema(const json& instance, const json& schema) {
    std::vector<std::string> errs;
    Validator(schema).check(instance, schema, "", errs);
    return errs;
}

const json& config_schema() {
    static const json schema = json::parse(kConfigSchemaText);
    return schema;
}

}  // namespace kt::experiment
