#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace flsa {

struct PromptTemplate {
    std::string name;
    std::string system;
    std::string user;
};

// Fills {name} placeholders in a single pass; substituted values are not
// rescanned. A placeholder without a value throws ConfigError. Braces that do
// not enclose an identifier are left alone.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

// A versioned set of prompt templates. Each template file holds the system
// message, a line "---", then the user message.
class PromptSet {
public:
    // Templates compiled into the binary from prompts/<version>/.
    static const PromptSet& builtin();
    static PromptSet load_dir(const std::filesystem::path& dir);
    static PromptTemplate parse(const std::string& name, const std::string& file_text);

    // The set used by the pipeline; defaults to builtin().
    static const PromptSet& active();
    static void set_active(PromptSet prompts);

    const PromptTemplate& get(const std::string& name) const;
    const std::string& version() const { return version_; }
    const std::map<std::string, PromptTemplate>& templates() const { return templates_; }

private:
    std::string version_;
    std::map<std::string, PromptTemplate> templates_;
};

namespace detail {
struct EmbeddedPrompt {
    const char* name;
    const char* text;
};
extern const char* const kEmbeddedPromptVersion;
extern const EmbeddedPrompt kEmbeddedPrompts[];
extern const std::size_t kEmbeddedPromptCount;
}  // namespace detail

}  // namespace flsa
