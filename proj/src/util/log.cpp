#include "metagraphloc/log.hpp"

#include <atomic>
#include <iostream>

namespace mgl::log {

namespace {
std::atomic<bool> g_muted{false};
}

void warn(std::string_view message) {
    if (g_muted.load()) return;
    std::cerr << "[warn] " << message << '\n';
}

void set_muted(bool muted) { g_muted.store(muted); }

}  // namespace mgl::log
