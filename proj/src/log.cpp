#include "sem/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>

namespace sem {

namespace {
thread_local WarningCapture* current = nullptr;
std::atomic<bool> quiet{false};

spdlog::logger& logger() {
  static auto l = spdlog::stderr_color_mt("sem");
  return *l;
}
}  // namespace

void set_warnings_quiet(bool q) { quiet = q; }

void log_warning(const std::string& msg) {
  for (WarningCapture* c = current; c; c = c->prev_) c->messages_.push_back(msg);
  if (!quiet) logger().warn(msg);
}

WarningCapture::WarningCapture() : prev_(current) { current = this; }
WarningCapture::~WarningCapture() { current = prev_; }

}  // namespace sem
