#pragma once

#include "circlesnake/error.hpp"

#include "json.hpp"

#include <string>

namespace csnake {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// Field access that reports the JSON path of whatever is missing or mistyped.
template <typename T>
T json_require(const Json& obj, const std::string& key, const std::string& path) {
    const std::string where = path + "/" + key;
    if (!obj.is_object() || !obj.contains(key)) {
        fail(Error::Kind::Schema, "missing field " + where);
    }
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(Error::Kind::Schema, "field " + where + " has the wrong type");
    }
}

template <typename T>
T json_optional(const Json& obj, const std::string& key, const T& fallback, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
        return fallback;
    }
    return json_require<T>(obj, key, path);
}

// Deterministic text form: keys sorted, floating-point numbers with a fixed
// number of decimals, integers verbatim, no insignificant whitespace except
// a trailing newline when `final_newline` is set.
std::string canonical_dump(const Json& value, int decimals = 6, bool final_newline = true);

// Shortest round-trip text for a double.
std::string format_double(double v);

} // namespace csnake
