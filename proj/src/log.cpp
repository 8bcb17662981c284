#include "sae/log.hpp"

#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>

namespace sae::log {

namespace {
std::atomic<bool> g_enabled{true};
std::mutex g_mutex;
}  // namespace

void set_enabled(bool on) { g_enabled = on; }

bool enabled() { return g_enabled; }

void event(const std::string& level, const std::string& message, const nlohmann::json& fields) {
    if (!g_enabled) {
        return;
    }
    nlohmann::json line = fields.is_object() ? fields : nlohmann::json{{"detail", fields}};
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    line["ts_ms"] = ms;
    line["level"] = level;
    line["msg"] = message;
    const std::string text = line.dump();
    std::lock_guard lock(g_mutex);
    std::cerr << text << '\n';
}

}  // namespace sae::log
