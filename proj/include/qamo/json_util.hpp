#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "qamo/error.hpp"

namespace qamo::json_util {

// Rejects keys outside `allowed`; configs never silently ignore a typo.
inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view context) {
    if (!j.is_object()) throw Error(ErrorKind::config_error, std::string(context) + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) throw Error(ErrorKind::config_error, "unknown key '" + key + "' in " + std::string(context));
    }
}

template <typename T>
void read_if_present(const nlohmann::json& j, const char* key, T& target) {
    if (auto it = j.find(key); it != j.end()) {
        try {
            target = it->template get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::config_error, std::string("bad value for '") + key + "': " + e.what());
        }
    }
}

}  // namespace qamo::json_util
