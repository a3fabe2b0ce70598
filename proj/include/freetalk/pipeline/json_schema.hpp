#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace freetalk::pipeline {

/// Validates `doc` against a JSON Schema subset: type, properties, required,
/// additionalProperties (boolean or schema), items, minItems, maxItems,
/// enum, const, minimum, maximum, exclusiveMinimum, exclusiveMaximum,
/// minLength, anyOf and local "#/definitions/..." references. Returns one
/// message per violation, prefixed by a JSON pointer.
std::vector<std::string> schema_errors(const nlohmann::json& doc, const nlohmann::json& schema);

/// Throws Config listing the violations.
void validate_schema(const nlohmann::json& doc, const nlohmann::json& schema, const std::string& what);

} // namespace freetalk::pipeline
