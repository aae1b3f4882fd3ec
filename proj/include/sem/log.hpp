#pragma once

#include <string>
#include <vector>

namespace sem {

// Warnings go to stderr (through spdlog) and to every active WarningCapture
// on the current thread.
void log_warning(const std::string& msg);
void set_warnings_quiet(bool quiet);

class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;
  const std::vector<std::string>& messages() const { return messages_; }

 private:
  friend void log_warning(const std::string& msg);
  std::vector<std::string> messages_;
  WarningCapture* prev_;
};

}  // namespace sem
