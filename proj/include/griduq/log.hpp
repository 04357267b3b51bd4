#pragma once

#include <string_view>

namespace griduq {

/// Writes "griduq: warning: <msg>" to stderr.
void warn(std::string_view msg);
/// Informational line on stderr; silenced by set_quiet(true).
void info(std::string_view msg);
void set_quiet(bool quiet);

}  // namespace griduq
