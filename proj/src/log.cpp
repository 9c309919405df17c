#include "planex/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace planex {
namespace {

std::atomic<LogLevel> g_level{LogLevel::kWarning};
std::mutex g_mutex;

void emit(LogLevel level, const char* tag, std::string_view msg) {
  if (level < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  std::cerr << '[' << tag << "] " << msg << '\n';
}

}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level.load(); }

void log_info(std::string_view msg) { emit(LogLevel::kInfo, "info", msg); }
void log_warning(std::string_view msg) { emit(LogLevel::kWarning, "warn", msg); }
void log_error(std::string_view msg) { emit(LogLevel::kError, "error", msg); }

}  // namespace planex
