#include "dsda/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

#include <cstdlib>
#include <string_view>

namespace dsda::log {

void init_from_env() {
  auto logger = spdlog::get("dsda");
  if (!logger) logger = spdlog::stderr_logger_mt("dsda");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);

  const char* env = std::getenv("DSDA_LOG");
  const std::string_view level = env ? env : "info";
  if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else if (level == "error") spdlog::set_level(spdlog::level::err);
  else spdlog::set_level(spdlog::level::info);
}

}  // namespace dsda::log
