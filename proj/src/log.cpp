#include "griduq/log.hpp"

#include <atomic>
#include <iostream>

namespace griduq {

namespace {
std::atomic<bool> g_quiet{false};
}

void warn(std::string_view msg) { std::clog << "griduq: warning: " << msg << '\n'; }

void info(std::string_view msg) {
  if (!g_quiet.load()) std::clog << "griduq: " << msg << '\n';
}

void set_quiet(bool quiet) { g_quiet.store(quiet); }

}  // namespace griduq
