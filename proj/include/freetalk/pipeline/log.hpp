#pragma once

#include <iostream>
#include <mutex>
#include <string>

namespace freetalk::pipeline {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2 };

inline LogLevel& log_level()
{
    static LogLevel level = LogLevel::Info;
    return level;
}

inline void log_line(LogLevel level, const char* tag, const std::string& msg)
{
    static std::mutex m;
    if (int(level) > int(log_level())) return;
    std::lock_guard lock(m);
    std::cerr << "[" << tag << "] " << msg << '\n';
}

inline void log_info(const std::string& msg) { log_line(LogLevel::Info, "info", msg); }
inline void log_warn(const std::string& msg) { log_line(LogLevel::Warn, "warn", msg); }

} // namespace freetalk::pipeline
