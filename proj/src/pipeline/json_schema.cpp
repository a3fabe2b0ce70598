#include <freetalk/error.hpp>
#include <freetalk/pipeline/json_schema.hpp>

#include <cmath>

namespace freetalk::pipeline {

namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& t)
{
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "number") return v.is_number();
    if (t == "integer") {
        if (v.is_number_integer()) return true;
        if (v.is_number_float()) {
            const double d = v.get<double>();
            return std::isfinite(d) && std::floor(d) == d;
        }
        return false;
    }
    return false;
}

class Validator {
public:
    explicit Validator(const json& root) : root_(root) {}

    void check(const json& v, const json& s, const std::string& path)
    {
        if (s.is_boolean()) {
            if (!s.get<bool>()) errors.push_back(path + ": not allowed");
            return;
        }
        if (s.contains("$ref")) {
            check(v, resolve(s.at("$ref").get<std::string>()), path);
            return;
        }
        if (s.contains("type")) {
            const json& t = s.at("type");
            bool ok = false;
            if (t.is_string()) ok = has_type(v, t.get<std::string>());
            else
                for (const auto& alt : t) ok |= has_type(v, alt.get<std::string>());
            if (!ok) {
                errors.push_back(path + ": expected type " + t.dump() + ", got " + v.type_name());
                return;
            }
        }
        if (s.contains("enum")) {
            bool found = false;
            for (const auto& e : s.at("enum")) found |= e == v;
            if (!found) errors.push_back(path + ": value " + v.dump() + " not in " + s.at("enum").dump());
        }
        if (s.contains("const") && s.at("const") != v)
            errors.push_back(path + ": expected " + s.at("const").dump());
        if (v.is_number()) {
            const double d = v.get<double>();
            if (s.contains("minimum") && d < s.at("minimum").get<double>())
                errors.push_back(path + ": " + v.dump() + " < minimum " + s.at("minimum").dump());
            if (s.contains("maximum") && d > s.at("maximum").get<double>())
                errors.push_back(path + ": " + v.dump() + " > maximum " + s.at("maximum").dump());
            if (s.contains("exclusiveMinimum") && d <= s.at("exclusiveMinimum").get<double>())
                errors.push_back(path + ": " + v.dump() + " must exceed " + s.at("exclusiveMinimum").dump());
            if (s.contains("exclusiveMaximum") && d >= s.at("exclusiveMaximum").get<double>())
                errors.push_back(path + ": " + v.dump() + " must be below " + s.at("exclusiveMaximum").dump());
        }
        if (v.is_string() && s.contains("minLength") && v.get<std::string>().size() < s.at("minLength").get<std::size_t>())
            errors.push_back(path + ": string too short");
        if (v.is_array()) {
            if (s.contains("minItems") && v.size() < s.at("minItems").get<std::size_t>())
                errors.push_back(path + ": fewer than " + s.at("minItems").dump() + " items");
            if (s.contains("maxItems") && v.size() > s.at("maxItems").get<std::size_t>())
                errors.push_back(path + ": more than " + s.at("maxItems").dump() + " items");
            if (s.contains("items"))
                for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s.at("items"), path + "/" + std::to_string(i));
        }
        if (v.is_object()) {
            if (s.contains("required"))
                for (const auto& r : s.at("required"))
                    if (!v.contains(r.get<std::string>()))
                        errors.push_back(path + ": missing required property \"" + r.get<std::string>() + "\"");
            const json* props = s.contains("properties") ? &s.at("properties") : nullptr;
            for (auto it = v.begin(); it != v.end(); ++it) {
                const std::string child = path + "/" + it.key();
                if (props && props->contains(it.key())) check(it.value(), props->at(it.key()), child);
                else if (s.contains("additionalProperties")) {
                    const json& ap = s.at("additionalProperties");
                    if (ap.is_boolean() && !ap.get<bool>()) errors.push_back(child + ": unknown property");
                    else if (ap.is_object()) check(it.value(), ap, child);
                }
            }
        }
        if (s.contains("anyOf")) {
            bool any = false;
            for (const auto& alt : s.at("anyOf")) {
                Validator sub(root_);
                sub.check(v, alt, path);
                if (sub.errors.empty()) {
                    any = true;
                    break;
                }
            }
            if (!any) errors.push_back(path + ": matches none of the allowed forms");
        }
    }

    std::vector<std::string> errors;

private:
    const json& resolve(const std::string& ref)
    {
        require(ref.rfind("#/", 0) == 0, ErrorKind::Config, "unsupported schema reference " + ref);
        return root_.at(json::json_pointer(ref.substr(1)));
    }

    const json& root_;
};

} // namespace

std::vector<std::string> schema_errors(const nlohmann::json& doc, const nlohmann::json& schema)
{
    Validator v(schema);
    v.check(doc, schema, "");
    for (auto& e : v.errors)
        if (e.empty() || e[0] == ':') e = "/" + e;
    return v.errors;
}

void validate_schema(const nlohmann::json& doc, const nlohmann::json& schema, const std::string& what)
{
    const auto errors = schema_errors(doc, schema);
    if (errors.empty()) return;
    std::string msg = what + " does not match its schema:";
    for (const auto& e : errors) msg += "\n  " + e;
    fail(ErrorKind::Config, msg);
}

} // namespace freetalk::pipeline
