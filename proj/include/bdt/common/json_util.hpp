#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace bdt {

using json = nlohmann::json;

// Canonical serialization (sorted keys, no trailing whitespace) so that the
// same logical config always hashes to the same value.
std::string canonical_dump(const json& j);
std::string config_hash(const json& j);

json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const json& j);

// Minimal schema checker: `spec` maps dotted field paths to one of
// "number", "integer", "string", "boolean", "object", "array".
// Returns a list of human-readable violations (empty = valid).
struct FieldSpec {
    std::string path;
    std::string type;
    bool required = true;
};
std::vector<std::string> validate_fields(const json& j,
                                         const std::vector<FieldSpec>& spec);

} // namespace bdt
