#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "scasnet/errors.hpp"

namespace scasnet {

/// Throws ConfigError if `j` is not an object or holds a key outside `allowed`.
inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || a == key;
    if (!known) throw ConfigError("unknown config key '" + section + "." + key + "'");
  }
}

/// Reads j[key] into `out` when present, converting type errors into ConfigError.
template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& section) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + section + "." + key + "': " + e.what());
  }
}

}  // namespace scasnet
