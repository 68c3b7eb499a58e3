#include "huign/log.hpp"

#include <iostream>
#include <mutex>

namespace huign {
namespace {

std::mutex g_log_mutex;
LogSink g_warning_sink;
bool g_info_enabled = false;

}  // namespace

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(g_log_mutex);
  std::swap(g_warning_sink, sink);
  return sink;
}

void log_warning(std::string_view message) {
  std::lock_guard lock(g_log_mutex);
  if (g_warning_sink) {
    g_warning_sink(message);
    return;
  }
  std::cerr << "warning: " << message << '\n';
}

void log_info(std::string_view message) {
  std::lock_guard lock(g_log_mutex);
  if (g_info_enabled) std::cerr << message << '\n';
}

void set_info_enabled(bool enabled) {
  std::lock_guard lock(g_log_mutex);
  g_info_enabled = enabled;
}

}  // namespace huign
