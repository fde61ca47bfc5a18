#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flsa::cli {

// Exit codes: 0 success, 1 validation error (one-line diagnostic on `err`),
// 2 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

// args excludes the program name. Data goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flsa::cli
