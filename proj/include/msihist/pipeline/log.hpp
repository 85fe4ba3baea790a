#pragma once

// Progress messages go to stderr; artifacts never do.

#include <string>

namespace msihist::pipeline {

enum class LogLevel { quiet, info, debug };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_info(const std::string &msg);
void log_warn(const std::string &msg);
void log_debug(const std::string &msg);

} // namespace msihist::pipeline
