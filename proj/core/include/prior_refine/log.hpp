#pragma once

#include <string>

// Thin wrapper over an spdlog stderr logger. spdlog stays out of this header:
// libtorch bundles its own fmt, which clashes with the one spdlog was built on.

namespace prior_refine::log {

enum class Level { debug, info, warn, error, off };

void set_level(Level level);
Level level_from_string(const std::string& name);

void debug(const std::string& msg);
void info(const std::string& msg);
void warn(const std::string& msg);
void error(const std::string& msg);

}  // namespace prior_refine::log
