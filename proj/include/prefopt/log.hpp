#pragma once

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace prefopt {

// Routes logs to stderr at the level named by PREFOPT_LOG
// (trace|debug|info|warn|error|off); defaults to warn.
inline void configure_logging() {
  auto logger = spdlog::get("prefopt");
  if (!logger) logger = spdlog::stderr_color_mt("prefopt");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("PREFOPT_LOG");
  spdlog::set_level(spdlog::level::from_str(env ? env : "warn"));
}

}  // namespace prefopt
