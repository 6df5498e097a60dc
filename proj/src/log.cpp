#include "dive/log.hpp"

#include <iostream>
#include <mutex>

namespace dive::log {

namespace {
std::mutex g_mutex;
bool g_verbose = true;
int g_captures = 0;
std::vector<std::string> g_captured;
}  // namespace

void info(const std::string& msg) {
  std::lock_guard lock(g_mutex);
  if (g_verbose) std::cerr << "[dive] " << msg << '\n';
}

void warn(const std::string& msg) {
  std::lock_guard lock(g_mutex);
  if (g_captures > 0) {
    g_captured.push_back(msg);
    return;
  }
  std::cerr << "[dive] warning: " << msg << '\n';
}

void set_verbose(bool verbose) {
  std::lock_guard lock(g_mutex);
  g_verbose = verbose;
}

WarningCapture::WarningCapture() {
  std::lock_guard lock(g_mutex);
  if (g_captures++ == 0) g_captured.clear();
}

WarningCapture::~WarningCapture() {
  std::lock_guard lock(g_mutex);
  --g_captures;
}

std::vector<std::string> WarningCapture::warnings() const {
  std::lock_guard lock(g_mutex);
  return g_captured;
}

bool WarningCapture::contains(const std::string& needle) const {
  for (const auto& w : warnings())
    if (w.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace dive::log
