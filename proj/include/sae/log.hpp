#pragma once

#include <json.hpp>

#include <string>

namespace sae::log {

// One JSON object per line on standard error.
void set_enabled(bool on);
bool enabled();

void event(const std::string& level, const std::string& message, const nlohmann::json& fields = nlohmann::json::object());

inline void info(const std::string& message, const nlohmann::json& fields = nlohmann::json::object()) {
    event("info", message, fields);
}
inline void warn(const std::string& message, const nlohmann::json& fields = nlohmann::json::object()) {
    event("warn", message, fields);
}
inline void error(const std::string& message, const nlohmann::json& fields = nlohmann::json::object()) {
    event("error", message, fields);
}

}  // namespace sae::log
