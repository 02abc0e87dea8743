#include "lensforge/logging.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "lensforge/error.hpp"

namespace lensforge {

void set_log_level(std::string_view level) {
  const auto lvl = spdlog::level::from_str(std::string(level));
  // from_str maps unknown names to off; only accept "off" when spelled out.
  if (lvl == spdlog::level::off && level != "off") {
    throw ValidationError("unknown log level '" + std::string(level) + "'");
  }
  spdlog::set_level(lvl);
}

void init_logging() {
  auto logger = spdlog::get("lensforge");
  if (!logger) {
    logger = spdlog::stderr_logger_mt("lensforge");
    logger->set_pattern("[%l] %v");
  }
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("LENSFORGE_LOG"); env && *env) {
    try {
      set_log_level(env);
    } catch (const ValidationError&) {
      spdlog::warn("ignoring LENSFORGE_LOG={}", env);
    }
  }
}

}  // namespace lensforge
