#include "msihist/pipeline/log.hpp"

#include <atomic>
#include <iostream>

namespace msihist::pipeline {

namespace {
std::atomic<LogLevel> g_level{LogLevel::info};
}

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_info(const std::string &msg) {
    if (g_level != LogLevel::quiet) std::cerr << "msihist: " << msg << '\n';
}

void log_warn(const std::string &msg) { std::cerr << "msihist: warning: " << msg << '\n'; }

void log_debug(const std::string &msg) {
    if (g_level == LogLevel::debug) std::cerr << "msihist: " << msg << '\n';
}

} // namespace msihist::pipeline
