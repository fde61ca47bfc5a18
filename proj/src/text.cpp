#include "flsa/text.hpp"

#include <cctype>

namespace flsa::text {

namespace {

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::string normalize_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (c == '\n') {
            pending_space = false;  // drop trailing spaces of the line
            out.push_back('\n');
        } else if (is_blank(c)) {
            if (!out.empty() && out.back() != '\n') pending_space = true;
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return trim(out);
}

std::string single_line(std::string_view s) {
    std::string flat(s);
    for (char& c : flat) {
        if (c == '\n') c = ' ';
    }
    return normalize_whitespace(flat);
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> word_tokens(std::string_view s) {
    std::vector<std::string> toks;
    std::string cur;
    for (char c : s) {
        auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            toks.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) toks.push_back(std::move(cur));
    return toks;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string truncate(std::string_view s, std::size_t max_chars) {
    if (s.size() <= max_chars) return std::string(s);
    if (max_chars <= 3) return std::string(s.substr(0, max_chars));
    std::size_t cut = max_chars - 3;
    // don't split a UTF-8 sequence
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    return std::string(s.substr(0, cut)) + "...";
}

}  // namespace flsa::text
