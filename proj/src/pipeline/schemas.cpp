#include <freetalk/error.hpp>
#include <freetalk/pipeline/schemas.hpp>

#include <map>
#include <mutex>

namespace freetalk::pipeline {

// Generated from schemas/*.json at configure time.
const std::map<std::string, const char*>& embedded_schemas();

namespace {

const std::map<std::string, nlohmann::json>& parsed()
{
    static const std::map<std::string, nlohmann::json> all = [] {
        std::map<std::string, nlohmann::json> out;
        const auto& raw = embedded_schemas();
        const nlohmann::json common = nlohmann::json::parse(raw.at("common"));
        for (const auto& [name, text] : raw) {
            if (name == "common") continue;
            nlohmann::json s = nlohmann::json::parse(text);
            s["definitions"] = common;
            out.emplace(name, std::move(s));
        }
        return out;
    }();
    return all;
}

} // namespace

const nlohmann::json& schema(const std::string& name)
{
    const auto& all = parsed();
    const auto it = all.find(name);
    if (it == all.end()) fail(ErrorKind::Config, "unknown schema \"" + name + "\"");
    return it->second;
}

std::vector<std::string> schema_names()
{
    std::vector<std::string> names;
    for (const auto& [name, s] : parsed()) names.push_back(name);
    return names;
}

} // namespace freetalk::pipeline
