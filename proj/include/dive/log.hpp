#pragma once

#include <string>
#include <vector>

namespace dive::log {

// Progress and warnings go to stderr; stdout is reserved for command output.
void info(const std::string& msg);
void warn(const std::string& msg);

void set_verbose(bool verbose);

// Collects warnings emitted on any thread while alive (tests use this to
// assert that a documented warning fired).
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  std::vector<std::string> warnings() const;
  bool contains(const std::string& needle) const;
};

}  // namespace dive::log
