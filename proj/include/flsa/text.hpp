#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace flsa::text {

// Collapses runs of spaces/tabs to one space, drops spaces at line
// boundaries, converts CRLF to LF and trims both ends. Newlines inside the
// text are kept.
std::string normalize_whitespace(std::string_view s);

// Like normalize_whitespace but newlines become spaces as well.
std::string single_line(std::string_view s);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Lower-cased alphanumeric tokens (ASCII letters/digits; other bytes split).
std::vector<std::string> word_tokens(std::string_view s);

// 64-bit FNV-1a. Stable across platforms; used to derive per-item seeds.
std::uint64_t fnv1a(std::string_view s, std::uint64_t basis = 1469598103934665603ULL);

std::string truncate(std::string_view s, std::size_t max_chars);

}  // namespace flsa::text
