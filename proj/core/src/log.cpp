#include "prior_refine/log.hpp"

#include <memory>
#include <stdexcept>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace prior_refine::log {

namespace {

spdlog::logger& logger() {
    static std::shared_ptr<spdlog::logger> l = [] {
        auto made = spdlog::stderr_color_mt("prior_refine");
        made->set_pattern("[%H:%M:%S] [%^%l%$] %v");
        return made;
    }();
    return *l;
}

}  // namespace

void set_level(Level level) {
    switch (level) {
        case Level::debug: logger().set_level(spdlog::level::debug); break;
        case Level::info: logger().set_level(spdlog::level::info); break;
        case Level::warn: logger().set_level(spdlog::level::warn); break;
        case Level::error: logger().set_level(spdlog::level::err); break;
        case Level::off: logger().set_level(spdlog::level::off); break;
    }
}

Level level_from_string(const std::string& name) {
    if (name == "debug") return Level::debug;
    if (name == "info") return Level::info;
    if (name == "warn") return Level::warn;
    if (name == "error") return Level::error;
    if (name == "off") return Level::off;
    throw std::invalid_argument("unknown log level: " + name);
}

void debug(const std::string& msg) { logger().debug(msg); }
void info(const std::string& msg) { logger().info(msg); }
void warn(const std::string& msg) { logger().warn(msg); }
void error(const std::string& msg) { logger().error(msg); }

}  // namespace prior_refine::log
