#pragma once

#include <string_view>

namespace mgl::log {

/// Writes "[warn] msg" to stderr unless warnings are muted.
void warn(std::string_view message);
void set_muted(bool muted);

}  // namespace mgl::log
