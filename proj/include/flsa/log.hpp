#pragma once

#include <string_view>

// Minimal stderr logging. Data goes to stdout or files, never through here.
namespace flsa::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

void set_level(Level level);
Level level();

void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

}  // namespace flsa::log
