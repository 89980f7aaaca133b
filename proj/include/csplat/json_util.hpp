#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace csplat {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Silent typos in config fields would invalidate experiments, so every config
// object rejects keys it does not know.
inline void reject_unknown_fields(const nlohmann::json& j,
                                  std::initializer_list<const char*> allowed,
                                  const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(context + ": unknown field '" + key + "'");
    }
}

template <typename T>
T json_get(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace csplat
