#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace kt::experiment {

/// Validator for the JSON Schema subset used by the config schema: type, enum,
/// const, properties, required, additionalProperties (boolean), items,
/// min/maxItems, minLength, minimum, maximum, exclusiveMinimum,
/// exclusiveMaximum, anyOf, oneOf and local "#/$defs/..." references.
/// Returns one message per violation, prefixed with its JSON pointer.
std::vector<std::string> validate_schema(const nlohmann::json& instance, const nlohmann::json& schema);

/// The published config schema (schema/config.schema.json).
const nlohmann::json& config_schema();

}  // namespace kt::experiment
