#pragma once

#include "foodcal/error.hpp"

#include <json.hpp>

#include <string>

namespace foodcal::detail {

template <typename T>
T get_field(const nlohmann::json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("field '") + key + "': " + e.what());
    }
}

}  // namespace foodcal::detail
