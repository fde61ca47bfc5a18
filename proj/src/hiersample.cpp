#include "flsa/hiersample.hpp"

#include "flsa/error.hpp"
#include "flsa/parallel.hpp"
#include "flsa/prompts.hpp"
#include "flsa/random.hpp"
#include "flsa/text.hpp"

namespace flsa {

using nlohmann::json;

void SampleConfig::validate() const {
    if (K < 1) throw ConfigError("K must be >= 1");
    if (max_outline_len < 1) throw ConfigError("max_outline_len must be >= 1");
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
    if (max_tokens < 1 || outline_max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
}

json to_json(const SampleConfig& c) {
    return {{"K", c.K},
            {"max_outline_len", c.max_outline_len},
            {"temperature", c.temperature},
            {"seed", c.seed},
            {"max_tokens", c.max_tokens},
            {"outline_max_tokens", c.outline_max_tokens}};
}

SampleConfig sample_config_from_json(const json& j) {
    SampleConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "K") c.K = v.get<int>();
        else if (key == "max_outline_len") c.max_outline_len = v.get<int>();
        else if (key == "temperature") c.temperature = v.get<double>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "max_tokens") c.max_tokens = v.get<int>();
        else if (key == "outline_max_tokens") c.outline_max_tokens = v.get<int>();
        else throw ConfigError("unknown sample config key '" + key + "'");
    }
    return c;
}

std::string to_string(SampleMethod m) {
    switch (m) {
        case SampleMethod::Direct: return "direct";
        case SampleMethod::GenOutline: return "gen_outline";
        case SampleMethod::Hier: return "hier";
    }
    return "?";
}

SampleMethod parse_sample_method(const std::string& name) {
    if (name == "direct") return SampleMethod::Direct;
    if (name == "gen_outline" || name == "outline") return SampleMethod::GenOutline;
    if (name == "hier") return SampleMethod::Hier;
    throw ConfigError("unknown sampling method '" + name + "' (expected direct, outline or hier)");
}

json to_json(const Candidate& c) {
    json j;
    j["problem_id"] = c.problem_id;
    j["method"] = to_string(c.method);
    if (const auto* tags = std::get_if<std::vector<int>>(&c.outline)) {
        j["outline"] = *tags;
    } else if (const auto* txt = std::get_if<std::string>(&c.outline)) {
        j["outline"] = *txt;
    } else {
        j["outline"] = nullptr;
    }
    j["solution_text"] = c.solution_text;
    j["sample_index"] = c.sample_index;
    return j;
}

Candidate candidate_from_json(const json& j) {
    Candidate c;
    c.problem_id = j.at("problem_id").get<std::string>();
    c.method = parse_sample_method(j.at("method").get<std::string>());
    const json& o = j.at("outline");
    if (o.is_array()) c.outline = o.get<std::vector<int>>();
    else if (o.is_string()) c.outline = o.get<std::string>();
    c.solution_text = j.at("solution_text").get<std::string>();
    c.sample_index = j.at("sample_index").get<int>();
    return c;
}

namespace {

// Index drawn from unnormalized weights; returns weights.size() if all are zero.
std::size_t draw(const std::vector<double>& weights, std::mt19937_64& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) return weights.size();
    const double u = unit_uniform(rng) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    // Rounding left u just above the last cumulative sum.
    for (std::size_t i = weights.size(); i-- > 0;) {
        if (weights[i] > 0.0) return i;
    }
    return weights.size();
}

std::string complete_nonempty(Gateway& gateway, const ChatRequest& request, const char* what) {
    for (int attempt = 1;; ++attempt) {
        try {
            return gateway.complete(request).text;
        } catch (const ResponseError& e) {
            if (attempt >= 2) throw ResponseError(std::string("empty ") + what + " after retry", e.raw_response());
        }
    }
}

ChatRequest from_template(const std::string& name, const std::map<std::string, std::string>& vars,
                          const SampleConfig& config, int max_tokens, int sample_index) {
    const auto& tmpl = PromptSet::active().get(name);
    ChatRequest r;
    r.system = tmpl.system;
    r.user = render_template(tmpl.user, vars);
    r.temperature = config.temperature;
    r.max_tokens = max_tokens;
    r.seed_hint = sample_index;
    return r;
}

}  // namespace

std::vector<int> sample_tag_sequence(const BigramModel& model, int max_len, std::mt19937_64& rng) {
    if (max_len < 1) throw ConfigError("max_outline_len must be >= 1");
    const int n = model.num_tags();
    std::vector<double> weights(static_cast<std::size_t>(n));
    for (int t = 1; t <= n; ++t) weights[static_cast<std::size_t>(t - 1)] = model.start_prob(t);
    const std::size_t first = draw(weights, rng);
    if (first == weights.size()) throw ConfigError("bigram model has no start distribution (no data and λ = 0)");
    std::vector<int> seq{static_cast<int>(first) + 1};

    weights.resize(static_cast<std::size_t>(n) + 1);
    while (static_cast<int>(seq.size()) < max_len) {
        const int prev = seq.back();
        for (int t = 1; t <= n; ++t) weights[static_cast<std::size_t>(t - 1)] = model.transition_prob(prev, t);
        weights[static_cast<std::size_t>(n)] = model.transition_prob(prev, kEndTag);
        const std::size_t next = draw(weights, rng);
        if (next >= static_cast<std::size_t>(n)) break;  // END, or a row with no support
        seq.push_back(static_cast<int>(next) + 1);
    }
    return seq;
}

std::mt19937_64 candidate_rng(std::uint64_t seed, const std::string& problem_id, int sample_index) {
    return seeded_rng({seed, text::fnv1a(problem_id), static_cast<std::uint64_t>(sample_index)});
}

std::string render_plan(const std::vector<int>& tags, const std::map<int, std::string>& descriptions) {
    std::string plan;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        auto it = descriptions.find(tags[i]);
        if (it == descriptions.end() || text::trim(it->second).empty()) {
            throw ConfigError("tag " + std::to_string(tags[i]) + " has no description");
        }
        if (i > 0) plan.push_back('\n');
        plan += std::to_string(i + 1) + ". " + text::single_line(it->second);
    }
    return plan;
}

ChatRequest build_direct_request(const std::string& problem, const SampleConfig& config, int sample_index) {
    return from_template("solve_direct", {{"problem", problem}}, config, config.max_tokens, sample_index);
}

ChatRequest build_hier_request(const std::string& problem, const std::vector<int>& tags,
                               const std::map<int, std::string>& descriptions, const SampleConfig& config,
                               int sample_index) {
    if (tags.empty()) throw ConfigError("hierarchical sampling needs a non-empty tag sequence");
    return from_template("solve_hier", {{"problem", problem}, {"plan", render_plan(tags, descriptions)}}, config,
                         config.max_tokens, sample_index);
}

ChatRequest build_outline_request(const std::string& problem, const SampleConfig& config, int sample_index) {
    return from_template("outline", {{"problem", problem}}, config, config.outline_max_tokens, sample_index);
}

ChatRequest build_outline_solve_request(const std::string& problem, const std::string& outline,
                                        const SampleConfig& config, int sample_index) {
    return from_template("solve_outline", {{"problem", problem}, {"outline", text::trim(outline)}}, config,
                         config.max_tokens, sample_index);
}

Candidate generate_direct(const std::string& problem_id, const std::string& problem, int sample_index,
                          Gateway& gateway, const SampleConfig& config) {
    Candidate c;
    c.problem_id = problem_id;
    c.method = SampleMethod::Direct;
    c.sample_index = sample_index;
    c.solution_text = complete_nonempty(gateway, build_direct_request(problem, config, sample_index), "solution");
    return c;
}

Candidate generate_hier(const std::string& problem_id, const std::string& problem, const std::vector<int>& tags,
                        const std::map<int, std::string>& descriptions, int sample_index, Gateway& gateway,
                        const SampleConfig& config) {
    Candidate c;
    c.problem_id = problem_id;
    c.method = SampleMethod::Hier;
    c.sample_index = sample_index;
    c.outline = tags;
    c.solution_text = complete_nonempty(
        gateway, build_hier_request(problem, tags, descriptions, config, sample_index), "solution");
    return c;
}

Candidate generate_outline_then_solve(const std::string& problem_id, const std::string& problem, int sample_index,
                                      Gateway& gateway, const SampleConfig& config) {
    Candidate c;
    c.problem_id = problem_id;
    c.method = SampleMethod::GenOutline;
    c.sample_index = sample_index;
    std::string outline = complete_nonempty(gateway, build_outline_request(problem, config, sample_index), "outline");
    c.solution_text = complete_nonempty(
        gateway, build_outline_solve_request(problem, outline, config, sample_index), "solution");
    c.outline = text::trim(outline);
    return c;
}

SolutionSampler SolutionSampler::direct(SampleConfig config) {
    config.validate();
    SolutionSampler s;
    s.method_ = SampleMethod::Direct;
    s.config_ = config;
    return s;
}

SolutionSampler SolutionSampler::gen_outline(SampleConfig config) {
    config.validate();
    SolutionSampler s;
    s.method_ = SampleMethod::GenOutline;
    s.config_ = config;
    return s;
}

SolutionSampler SolutionSampler::hier(SampleConfig config, BigramModel bigram, std::map<int, std::string> descriptions) {
    config.validate();
    for (int t = 1; t <= bigram.num_tags(); ++t) {
        if (!descriptions.count(t)) throw ConfigError("tag " + std::to_string(t) + " has no description");
    }
    SolutionSampler s;
    s.method_ = SampleMethod::Hier;
    s.config_ = config;
    s.bigram_ = std::move(bigram);
    s.descriptions_ = std::move(descriptions);
    return s;
}

std::vector<int> SolutionSampler::outline_tags(const std::string& problem_id, int sample_index) const {
    auto rng = candidate_rng(config_.seed, problem_id, sample_index);
    return sample_tag_sequence(bigram_, config_.max_outline_len, rng);
}

Candidate SolutionSampler::sample(const std::string& problem_id, const std::string& problem, int sample_index,
                                  Gateway& gateway) const {
    switch (method_) {
        case SampleMethod::Direct: return generate_direct(problem_id, problem, sample_index, gateway, config_);
        case SampleMethod::GenOutline:
            return generate_outline_then_solve(problem_id, problem, sample_index, gateway, config_);
        case SampleMethod::Hier:
            return generate_hier(problem_id, problem, outline_tags(problem_id, sample_index), descriptions_,
                                 sample_index, gateway, config_);
    }
    throw ConfigError("unknown sampling method");
}

ChatRequest SolutionSampler::first_request(const std::string& problem_id, const std::string& problem,
                                           int sample_index) const {
    switch (method_) {
        case SampleMethod::Direct: return build_direct_request(problem, config_, sample_index);
        case SampleMethod::GenOutline: return build_outline_request(problem, config_, sample_index);
        case SampleMethod::Hier:
            return build_hier_request(problem, outline_tags(problem_id, sample_index), descriptions_, config_,
                                      sample_index);
    }
    throw ConfigError("unknown sampling method");
}

std::vector<Candidate> sample_candidates(const SolutionSampler& sampler, const std::string& problem_id,
                                         const std::string& problem, Gateway& gateway) {
    std::vector<Candidate> out(static_cast<std::size_t>(sampler.config().K));
    parallel_for(out.size(), gateway.parallelism(), [&](std::size_t i) {
        out[i] = sampler.sample(problem_id, problem, static_cast<int>(i), gateway);
    });
    return out;
}

}  // namespace flsa
