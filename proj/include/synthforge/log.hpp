#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace synthforge {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Verbosity comes from SYNTHFORGE_LOG (error|warn|info|debug); default warn.
inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("SYNTHFORGE_LOG");
        if (!env) return LogLevel::Warn;
        if (std::strcmp(env, "error") == 0) return LogLevel::Error;
        if (std::strcmp(env, "warn") == 0) return LogLevel::Warn;
        if (std::strcmp(env, "info") == 0) return LogLevel::Info;
        if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

// All diagnostics go to stderr; stdout is reserved for machine output.
inline void log_message(LogLevel level, const std::string& msg) {
    if (level > log_level()) return;
    static const char* tags[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[%s] %s\n", tags[static_cast<int>(level)], msg.c_str());
}

inline void log_error(const std::string& msg) { log_message(LogLevel::Error, msg); }
inline void log_warn(const std::string& msg) { log_message(LogLevel::Warn, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::Debug, msg); }

}  // namespace synthforge
