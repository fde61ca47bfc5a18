#include "flsa/prompts.hpp"

#include <cctype>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <vector>

#include "flsa/error.hpp"
#include "flsa/text.hpp"

namespace flsa {

namespace {

bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::mutex g_active_mu;
std::shared_ptr<const PromptSet> g_active;
// Replaced sets stay alive so references handed out earlier remain valid.
std::vector<std::shared_ptr<const PromptSet>> g_retired;

}  // namespace

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size() * 2);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t j = i + 1;
            while (j < tmpl.size() && ident_char(tmpl[j])) ++j;
            if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
                const std::string name(tmpl.substr(i + 1, j - i - 1));
                auto it = vars.find(name);
                if (it == vars.end()) throw ConfigError("prompt placeholder {" + name + "} has no value");
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

PromptTemplate PromptSet::parse(const std::string& name, const std::string& file_text) {
    const std::string marker = "---\n";
    std::size_t pos = std::string::npos;
    if (file_text.rfind(marker, 0) == 0) {
        pos = 0;
    } else {
        const auto found = file_text.find("\n" + marker);
        if (found != std::string::npos) pos = found + 1;
    }
    if (pos == std::string::npos) throw ConfigError("prompt template '" + name + "' lacks a '---' separator line");
    PromptTemplate t;
    t.name = name;
    t.system = text::trim(file_text.substr(0, pos));
    t.user = file_text.substr(pos + marker.size());
    if (!t.user.empty() && t.user.back() == '\n') t.user.pop_back();
    return t;
}

const PromptSet& PromptSet::builtin() {
    static const PromptSet set = [] {
        PromptSet s;
        s.version_ = detail::kEmbeddedPromptVersion;
        for (std::size_t i = 0; i < detail::kEmbeddedPromptCount; ++i) {
            const auto& e = detail::kEmbeddedPrompts[i];
            s.templates_.emplace(e.name, parse(e.name, e.text));
        }
        return s;
    }();
    return set;
}

PromptSet PromptSet::load_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("prompt directory not found: " + dir.string());
    PromptSet s;
    std::ifstream vin(dir / "VERSION");
    std::string version;
    if (vin) std::getline(vin, version);
    s.version_ = version.empty() ? dir.filename().string() : text::trim(version);
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        const std::string name = entry.path().stem().string();
        s.templates_.emplace(name, parse(name, buf.str()));
    }
    // Every builtin template must be overridden, so a partial directory fails early.
    for (const auto& [name, _] : builtin().templates()) {
        if (!s.templates_.count(name)) {
            throw ConfigError("prompt directory " + dir.string() + " is missing " + name + ".txt");
        }
    }
    return s;
}

const PromptSet& PromptSet::active() {
    std::lock_guard lock(g_active_mu);
    if (g_active) return *g_active;
    return builtin();
}

void PromptSet::set_active(PromptSet prompts) {
    std::lock_guard lock(g_active_mu);
    if (g_active) g_retired.push_back(g_active);
    g_active = std::make_shared<const PromptSet>(std::move(prompts));
}

const PromptTemplate& PromptSet::get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ConfigError("unknown prompt template '" + name + "'");
    return it->second;
}

}  // namespace flsa
