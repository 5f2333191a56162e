#pragma once

#include <string_view>

namespace ikdr::log {

// Thin wrappers so library headers do not pull in spdlog. Verbosity comes
// from the IKDR_LOG environment variable (trace|debug|info|warn|error|off).
void init_from_env();
void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

}  // namespace ikdr::log
