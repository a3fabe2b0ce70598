#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace freetalk::pipeline {

/// Published schemas: "synth", "ats_train", "stm_train", "animate",
/// "evaluate", "export", "metric_report". Shared definitions are merged in.
const nlohmann::json& schema(const std::string& name);
std::vector<std::string> schema_names();

} // namespace freetalk::pipeline
