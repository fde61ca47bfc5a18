#pragma once

// Tag induction by an LLM-driven EM loop.
//
// Each iteration i:
//   E-step  every segment is greedily assigned the tag the model picks given
//           all tag descriptions from iteration i-1, the segment, and its
//           context window. Iteration 1 uses uniform random assignments
//           because no descriptions exist yet.
//   M-step  every tag's description is regenerated by asking the model what
//           a random sample of its assigned segments has in common.
//
// The tag descriptions plus the assignments are the model parameters.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flsa/corpus.hpp"
#include "flsa/error.hpp"
#include "flsa/gateway.hpp"

namespace flsa {

// Placeholder description for tags that ended an iteration with no segments.
inline constexpr const char* kUnusedDescription = "UNUSED";

struct FlsaConfig {
    int num_tags = 100;
    int max_iters = 30;
    Window window = Window::of(2);
    int m_step_sample = 10;
    double convergence_frac = 0.02;
    std::uint64_t seed = 0;
    int description_max_tokens = 120;
    int assign_max_tokens = 16;
    // When set, the model is written here after every completed iteration.
    std::optional<std::filesystem::path> checkpoint_dir;

    // Throws ConfigError on the first invalid field.
    void validate() const;

    bool operator==(const FlsaConfig&) const = default;
};

nlohmann::json to_json(const FlsaConfig& config);
FlsaConfig flsa_config_from_json(const nlohmann::json& j);

using SegmentKey = std::pair<std::string, int>;  // (doc id, 1-based index)

struct TagModel {
    int num_tags = 0;
    // descriptions[t-1] is the text of tag t; empty before the first M-step.
    std::vector<std::string> descriptions;
    std::map<SegmentKey, int> assignments;
    int iteration = 0;
    // Fraction of segments whose tag changed at each iteration. Iteration 1
    // assigns everything from scratch and records 1.0.
    std::vector<double> change_history;
    FlsaConfig config;
    std::string prompt_version;

    bool has_descriptions() const { return !descriptions.empty(); }
    const std::string& description(int tag) const;
    int assignment(const std::string& doc_id, int index) const;

    // Segments currently assigned to `tag`, in corpus order.
    std::vector<Segment> members(int tag, const Corpus& corpus) const;
    // Tag sequences per document (documents in corpus order).
    std::vector<std::vector<int>> sequences(const Corpus& corpus) const;

    bool operator==(const TagModel&) const = default;
};

nlohmann::json to_json(const TagModel& model);
TagModel tag_model_from_json(const nlohmann::json& j);
void save_tag_model(const TagModel& model, const std::filesystem::path& path);
TagModel load_tag_model(const std::filesystem::path& path);

struct TaggedDocument {
    std::string doc_id;
    std::vector<int> tags;
};

struct TaggedCorpus {
    const Corpus* corpus = nullptr;
    std::vector<TaggedDocument> documents;  // same order as corpus
};

std::string serialize_tagged(const TaggedCorpus& tagged);
std::vector<TaggedDocument> parse_tagged(const std::string& jsonl);

// Reads the chosen tag out of a free-form reply. Accepts "Tag: N", "Tag N",
// a bare "N", and otherwise the first integer in 1..num_tags.
std::optional<int> parse_tag_choice(const std::string& reply, int num_tags);

TagModel flsa_init(const Corpus& corpus, const FlsaConfig& config);

ChatRequest build_assign_request(const TagModel& model, const Segment& segment,
                                 const std::vector<Segment>& context);
ChatRequest build_describe_request(int tag, const std::vector<Segment>& sampled, int max_tokens);

// Greedy E-step for one segment (temperature 0). On an unreadable or
// out-of-range reply the request is retried once with a stricter
// instruction; a second failure throws ResponseError.
int e_step_assign(const TagModel& model, const Segment& segment, const std::vector<Segment>& context,
                  Gateway& gateway);

// M-step for one tag (temperature 1). Returns the reply as one trimmed paragraph.
std::string m_step_describe(int tag, const std::vector<Segment>& sampled, Gateway& gateway,
                            int max_tokens = 120);

// Segments chosen for tag's description at an iteration: up to m_step_sample
// members drawn without replacement, seeded by (seed, iteration, tag), kept
// in corpus order.
std::vector<Segment> sample_members(const TagModel& model, const Corpus& corpus, int tag, int iteration);

// Failure inside flsa_fit with the position where it happened.
class FitError : public Error {
public:
    FitError(const std::string& what, int iteration, std::optional<SegmentKey> segment)
        : Error(what), iteration_(iteration), segment_(std::move(segment)) {}
    int iteration() const { return iteration_; }
    const std::optional<SegmentKey>& segment() const { return segment_; }

private:
    int iteration_;
    std::optional<SegmentKey> segment_;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int iteration);

TagModel flsa_fit(const Corpus& corpus, const FlsaConfig& config, Gateway& gateway);

// Runs the E-step with a fitted model over any corpus.
TaggedCorpus tag_corpus(const TagModel& model, const Corpus& corpus, Gateway& gateway);

}  // namespace flsa
