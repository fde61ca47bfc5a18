#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "flsa/eval.hpp"
#include "flsa/flsa.hpp"
#include "flsa/hiersample.hpp"

namespace flsa {

// Everything a CLI run needs. Loaded from one JSON file; command-line flags
// are applied on top by the caller.
struct RunConfig {
    // "http", or "scripted:<rules.jsonl>". Empty until chosen.
    std::string backend;
    std::string endpoint;
    std::string model;
    std::optional<std::filesystem::path> cache;
    std::optional<std::filesystem::path> prompts_dir;
    std::uint64_t seed = 0;
    std::uint64_t budget = 0;  // 0 = unlimited
    int parallel = 1;
    double requests_per_second = 0.0;
    std::string preset;

    FlsaConfig flsa;
    EvalConfig eval;
    SampleConfig sample;
    double bigram_smoothing = 0.1;

    // Validates every section; throws ConfigError naming the first problem.
    void validate() const;
    // Copies `seed` into every section.
    void propagate_seed();
};

// Corpus-type presets: "story" (100 tags, W = 2), "solution" or "math"
// (100 tags, unlimited window), "bbh" (50 tags, unlimited window).
RunConfig preset_config(const std::string& name);
// Applies the preset's tag count and window onto an existing config.
void apply_preset(RunConfig& config, const std::string& name);

// Unknown keys at any level are rejected. A "preset" key is applied before
// the section overrides.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

}  // namespace flsa
