#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "flsa/dynamics.hpp"
#include "flsa/gateway.hpp"

namespace flsa {

struct SampleConfig {
    int K = 50;
    int max_outline_len = 12;
    double temperature = kSamplingTemperature;
    std::uint64_t seed = 0;
    int max_tokens = 1024;
    int outline_max_tokens = 400;

    void validate() const;
    bool operator==(const SampleConfig&) const = default;
};

nlohmann::json to_json(const SampleConfig& c);
SampleConfig sample_config_from_json(const nlohmann::json& j);

enum class SampleMethod { Direct, GenOutline, Hier };
std::string to_string(SampleMethod m);
SampleMethod parse_sample_method(const std::string& name);

// No outline (direct), a sampled tag sequence (hier), or generated outline text.
using Outline = std::variant<std::monostate, std::vector<int>, std::string>;

struct Candidate {
    std::string problem_id;
    SampleMethod method = SampleMethod::Direct;
    Outline outline;
    std::string solution_text;
    int sample_index = 0;

    bool operator==(const Candidate&) const = default;
};

nlohmann::json to_json(const Candidate& c);
Candidate candidate_from_json(const nlohmann::json& j);

// Ancestral sampling: t_1 ~ p(t_1), then t_k ~ p(· | t_{k-1}) until END is
// drawn or max_len tags were produced. END is never returned.
std::vector<int> sample_tag_sequence(const BigramModel& model, int max_len, std::mt19937_64& rng);

// Generator for (problem, sample index): one RNG stream per pair so results do
// not depend on the order candidates are produced in.
std::mt19937_64 candidate_rng(std::uint64_t seed, const std::string& problem_id, int sample_index);

ChatRequest build_direct_request(const std::string& problem, const SampleConfig& config, int sample_index);
ChatRequest build_hier_request(const std::string& problem, const std::vector<int>& tags,
                               const std::map<int, std::string>& descriptions, const SampleConfig& config,
                               int sample_index);
ChatRequest build_outline_request(const std::string& problem, const SampleConfig& config, int sample_index);
ChatRequest build_outline_solve_request(const std::string& problem, const std::string& outline,
                                        const SampleConfig& config, int sample_index);

// Renders descriptions as the numbered "High-level plan" list.
std::string render_plan(const std::vector<int>& tags, const std::map<int, std::string>& descriptions);

Candidate generate_direct(const std::string& problem_id, const std::string& problem, int sample_index,
                          Gateway& gateway, const SampleConfig& config);
Candidate generate_hier(const std::string& problem_id, const std::string& problem, const std::vector<int>& tags,
                        const std::map<int, std::string>& descriptions, int sample_index, Gateway& gateway,
                        const SampleConfig& config);
Candidate generate_outline_then_solve(const std::string& problem_id, const std::string& problem, int sample_index,
                                      Gateway& gateway, const SampleConfig& config);

// Bundles a method with what it needs so callers can ask for "candidate i of
// problem p" uniformly.
class SolutionSampler {
public:
    static SolutionSampler direct(SampleConfig config);
    static SolutionSampler gen_outline(SampleConfig config);
    static SolutionSampler hier(SampleConfig config, BigramModel bigram, std::map<int, std::string> descriptions);

    SampleMethod method() const { return method_; }
    const SampleConfig& config() const { return config_; }

    // The tag sequence the hier method uses for this candidate.
    std::vector<int> outline_tags(const std::string& problem_id, int sample_index) const;
    Candidate sample(const std::string& problem_id, const std::string& problem, int sample_index,
                     Gateway& gateway) const;
    // Requests this candidate would send first (for dry runs).
    ChatRequest first_request(const std::string& problem_id, const std::string& problem, int sample_index) const;

private:
    SampleMethod method_ = SampleMethod::Direct;
    SampleConfig config_;
    BigramModel bigram_;
    std::map<int, std::string> descriptions_;
};

// K candidates per problem, ordered by sample index.
std::vector<Candidate> sample_candidates(const SolutionSampler& sampler, const std::string& problem_id,
                                         const std::string& problem, Gateway& gateway);

}  // namespace flsa
