#include "flsa/config.hpp"

#include <fstream>
#include <sstream>

#include "flsa/error.hpp"

namespace flsa {

using nlohmann::json;

void RunConfig::validate() const {
    if (!backend.empty() && backend != "http" && backend.rfind("scripted:", 0) != 0) {
        throw ConfigError("backend must be 'http' or 'scripted:<path>'");
    }
    if (backend == "scripted:") throw ConfigError("scripted backend needs a rule file path");
    if (parallel < 1) throw ConfigError("parallel must be >= 1");
    if (!(requests_per_second >= 0.0)) throw ConfigError("requests_per_second must be >= 0");
    if (!(bigram_smoothing >= 0.0)) throw ConfigError("bigram smoothing must be >= 0");
    flsa.validate();
    eval.validate();
    sample.validate();
}

void RunConfig::propagate_seed() {
    flsa.seed = seed;
    eval.seed = seed;
    sample.seed = seed;
}

void apply_preset(RunConfig& config, const std::string& name) {
    if (name == "story") {
        config.flsa.num_tags = 100;
        config.flsa.window = Window::of(2);
    } else if (name == "solution" || name == "math") {
        config.flsa.num_tags = 100;
        config.flsa.window = Window::unlimited();
    } else if (name == "bbh") {
        config.flsa.num_tags = 50;
        config.flsa.window = Window::unlimited();
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected story, solution, math or bbh)");
    }
    config.preset = name;
}

RunConfig preset_config(const std::string& name) {
    RunConfig c;
    apply_preset(c, name);
    return c;
}

namespace {

template <class T>
T get_as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    if (j.contains("preset")) apply_preset(c, get_as<std::string>(j.at("preset"), "preset"));
    bool seed_given = false;
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "preset") continue;
            if (key == "backend") c.backend = get_as<std::string>(v, key);
            else if (key == "endpoint") c.endpoint = get_as<std::string>(v, key);
            else if (key == "model") c.model = get_as<std::string>(v, key);
            else if (key == "cache") c.cache = get_as<std::string>(v, key);
            else if (key == "prompts_dir") c.prompts_dir = get_as<std::string>(v, key);
            else if (key == "seed") {
                c.seed = get_as<std::uint64_t>(v, key);
                seed_given = true;
            } else if (key == "budget") c.budget = get_as<std::uint64_t>(v, key);
            else if (key == "parallel") c.parallel = get_as<int>(v, key);
            else if (key == "requests_per_second") c.requests_per_second = get_as<double>(v, key);
            else if (key == "flsa") {
                // Section keys override the preset; absent keys keep it.
                json merged = to_json(c.flsa);
                for (const auto& [k2, v2] : v.items()) merged[k2] = v2;
                c.flsa = flsa_config_from_json(merged);
            } else if (key == "eval") c.eval = eval_config_from_json(v);
            else if (key == "sample") c.sample = sample_config_from_json(v);
            else if (key == "bigram") {
                for (const auto& [k2, v2] : v.items()) {
                    if (k2 != "smoothing") throw ConfigError("unknown bigram config key '" + k2 + "'");
                    c.bigram_smoothing = get_as<double>(v2, "bigram.smoothing");
                }
            } else {
                throw ConfigError("unknown config key '" + key + "'");
            }
        } catch (const json::exception& e) {
            throw ConfigError("config section '" + key + "': " + e.what());
        }
    }
    if (seed_given) c.propagate_seed();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
    return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
    json j;
    j["backend"] = c.backend;
    j["endpoint"] = c.endpoint;
    j["model"] = c.model;
    if (c.cache) j["cache"] = c.cache->string();
    if (c.prompts_dir) j["prompts_dir"] = c.prompts_dir->string();
    j["seed"] = c.seed;
    j["budget"] = c.budget;
    j["parallel"] = c.parallel;
    j["requests_per_second"] = c.requests_per_second;
    if (!c.preset.empty()) j["preset"] = c.preset;
    j["flsa"] = to_json(c.flsa);
    j["eval"] = to_json(c.eval);
    j["sample"] = to_json(c.sample);
    j["bigram"] = {{"smoothing", c.bigram_smoothing}};
    return j;
}

}  // namespace flsa
