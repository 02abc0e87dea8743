#pragma once

#include <string_view>

namespace lensforge {

/// Configure the default logger from LENSFORGE_LOG (trace, debug, info, warn, error, off).
/// Logs go to stderr; the default level is warn.
void init_logging();
void set_log_level(std::string_view level);

}  // namespace lensforge
