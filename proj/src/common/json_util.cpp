#include "bdt/common/json_util.hpp"

#include "bdt/common/sha256.hpp"

#include <fstream>
#include <stdexcept>

namespace bdt {

std::string canonical_dump(const json& j) {
    // nlohmann::json objects keep keys sorted already (std::map); a plain
    // dump with no indentation is canonical for our purposes.
    return j.dump();
}

std::string config_hash(const json& j) {
    return sha256_hex(canonical_dump(j));
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_json_file: cannot open " + path);
    }
    json j;
    in >> j;
    return j;
}

void save_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("save_json_file: cannot open " + path);
    }
    out << j.dump(2) << "\n";
}

namespace {

const json* walk(const json& j, const std::string& dotted) {
    const json* cur = &j;
    std::size_t start = 0;
    while (start <= dotted.size()) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(
            start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!cur->is_object() || !cur->contains(key)) {
            return nullptr;
        }
        cur = &(*cur)[key];
        if (dot == std::string::npos) {
            break;
        }
        start = dot + 1;
    }
    return cur;
}

bool type_matches(const json& v, const std::string& type) {
    if (type == "number") return v.is_number();
    if (type == "integer") return v.is_number_integer();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    return false;
}

} // namespace

std::vector<std::string> validate_fields(const json& j,
                                         const std::vector<FieldSpec>& spec) {
    std::vector<std::string> errors;
    for (const auto& field : spec) {
        const json* v = walk(j, field.path);
        if (v == nullptr) {
            if (field.required) {
                errors.push_back("missing required field '" + field.path + "'");
            }
            continue;
        }
        if (!type_matches(*v, field.type)) {
            errors.push_back("field '" + field.path + "' must be of type " +
                             field.type + ", got " + std::string(v->type_name()));
        }
    }
    return errors;
}

} // namespace bdt
