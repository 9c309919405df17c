#pragma once

#include <string_view>

namespace planex {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3, kOff = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_info(std::string_view msg);
void log_warning(std::string_view msg);
void log_error(std::string_view msg);

}  // namespace planex
