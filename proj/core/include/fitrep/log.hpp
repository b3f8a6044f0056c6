#pragma once

#include <string>
#include <string_view>

namespace fitrep {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();

// Parses "debug"/"info"/"warn"/"error"; throws ConfigError otherwise.
LogLevel parse_log_level(std::string_view name);

void log_message(LogLevel level, std::string_view msg);

inline void log_debug(std::string_view msg) { log_message(LogLevel::debug, msg); }
inline void log_info(std::string_view msg) { log_message(LogLevel::info, msg); }
inline void log_warn(std::string_view msg) { log_message(LogLevel::warn, msg); }
inline void log_error(std::string_view msg) { log_message(LogLevel::error, msg); }

}  // namespace fitrep
