#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flsa/corpus.hpp"
#include "flsa/flsa.hpp"
#include "flsa/gateway.hpp"
#include "flsa/hiersample.hpp"

namespace flsa {

// ---------------------------------------------------------------------------
// Reconstruction log-likelihood
//
// For a held-out segment x_k the model picks the true continuation out of
// C+1 options (the truth plus C of S sampled alternatives) T_trials times.
// With c correct picks the estimate is log((c + α) / (T_trials + α S)).

struct EvalConfig {
    int S = 10;
    int T_trials = 20;
    int C = 3;
    double alpha = 0.1;
    std::uint64_t seed = 0;
    int continuation_max_tokens = 256;
    int choice_max_tokens = 8;

    void validate() const;
    bool operator==(const EvalConfig&) const = default;
};

nlohmann::json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j);

// Requires 0 <= c <= T_trials.
double smoothed_log_prob(int c, int T_trials, int S, double alpha);

// Prefix segments one per line, or a marker when k = 1.
std::string render_prefix(const std::vector<Segment>& prefix);

ChatRequest build_continue_request(const std::vector<Segment>& prefix, int alternative, int max_tokens);
// S independent continuations at temperature 1; alternative i carries seed hint i.
std::vector<std::string> sample_alternatives(const std::vector<Segment>& prefix, int S, Gateway& gateway,
                                             int max_tokens = 256);

// Options are shown in the given order, labeled A, B, C, ... A tag switches
// to the tagged template; without one the prompt holds no tag text.
ChatRequest build_choice_request(const std::vector<Segment>& prefix, const std::vector<std::string>& options,
                                 const std::optional<std::string>& tag, int max_tokens = 8);

// Letter chosen in a reply ("Answer: B", "B", "(B)", "Option B"), as a
// 0-based option index.
std::optional<int> parse_choice_letter(const std::string& reply, int num_options);

// Uniform random permutation of 0..n-1 (Fisher-Yates).
std::vector<int> random_permutation(std::mt19937_64& rng, int n);

struct ChoiceOutcome {
    bool correct = false;
    bool flagged = false;  // no readable letter even after the retry
    std::optional<int> chosen;
};

// Asks once, retries once with a stricter instruction, otherwise counts the
// trial as incorrect and flags it. order[p] is the option shown at position
// p, where option 0 is the true segment.
ChoiceOutcome run_choice(const std::vector<Segment>& prefix, const std::vector<std::string>& options_by_id,
                         const std::vector<int>& order, const std::optional<std::string>& tag, Gateway& gateway,
                         int max_tokens = 8);

struct TrialResult {
    ChoiceOutcome outcome;
    std::vector<int> order;
    int true_position = 0;
};

// One trial: shuffles the true segment with the distractors using rng.
TrialResult choice_trial(const std::vector<Segment>& prefix, const std::string& true_segment,
                         const std::vector<std::string>& distractors, const std::optional<std::string>& tag,
                         Gateway& gateway, std::mt19937_64& rng);

struct TestCase {
    std::string doc_id;
    int k = 1;
    bool operator==(const TestCase&) const = default;
};

// Up to n distinct (document, position) pairs drawn uniformly from all
// segments, returned in corpus order.
std::vector<TestCase> draw_test_cases(const Corpus& corpus, std::size_t n, std::uint64_t seed);

// What one variant of a trial presented and how the model answered.
struct VariantAudit {
    std::vector<int> distractors;  // indices into the case's alternatives
    std::vector<int> order;        // order[p] = option id at position p; 0 is the truth
    std::optional<int> chosen;     // position picked
    bool correct = false;
    bool flagged = false;
};

struct TrialAudit {
    VariantAudit with_tag;
    VariantAudit no_tag;
};

struct ReconTrialRecord {
    std::string doc_id;
    int k = 0;
    int tag = 0;
    std::vector<std::string> alternatives;
    std::vector<TrialAudit> trials;
    int c_with_tag = 0;
    int c_no_tag = 0;
    int flagged = 0;
    double log_prob_with_tag = 0.0;
    double log_prob_no_tag = 0.0;
};

struct ExcludedCase {
    std::string doc_id;
    int k = 0;
    std::string error;
};

struct ReconReport {
    EvalConfig config;
    std::vector<ReconTrialRecord> cases;  // in test-case order
    std::vector<ExcludedCase> excluded;
    double mean_with_tag = 0.0;
    double mean_no_tag = 0.0;
    // Standard error of each mean over cases (0 with fewer than two cases).
    double stderr_with_tag = 0.0;
    double stderr_no_tag = 0.0;
};

// Per case: predicts the tag, samples S alternatives, then runs T_trials
// paired trials that present the same distractors in the same order with
// and without the tag line. Randomness is seeded per case, so results do
// not depend on parallelism. Failed cases are excluded and reported;
// BudgetExceeded aborts the run.
ReconReport eval_reconstruction(const std::vector<TestCase>& cases, const Corpus& corpus, const TagModel& model,
                                Gateway& gateway, const EvalConfig& config);

// First requests of a case (E-step and alternatives) for dry runs.
std::vector<ChatRequest> reconstruction_first_requests(const TestCase& tc, const Corpus& corpus,
                                                       const TagModel& model, const EvalConfig& config);

nlohmann::json to_json(const ReconReport& report);
std::string recon_csv(const ReconReport& report);

// ---------------------------------------------------------------------------
// Answer grading and Hits@K

struct GradedProblem {
    std::string id;
    std::string problem;
    std::string answer;
};

// JSONL of {"id", "problem", "answer"}; extra keys are ignored. Without
// require_answer the answer may be absent (sampling only).
std::vector<GradedProblem> parse_problems(const std::string& jsonl, bool require_answer = true);
std::vector<GradedProblem> load_problems(const std::filesystem::path& path, bool require_answer = true);

// Final answer of a solution: the text after the last "Answer:", else the
// last \boxed{...}, else the last standalone number or "(X)" option letter.
std::optional<std::string> extract_answer(const std::string& solution);

// Trims, lowercases, strips enclosing $...$, a leading "x =", a wrapping
// \boxed{} or parentheses, and trailing punctuation. Numbers (integers,
// decimals, fractions, \frac{a}{b}, thousands separators) become a reduced
// fraction "p/q" or integer "p".
std::string normalize_answer(const std::string& answer);

struct GradeResult {
    bool correct = false;
    bool extractable = false;
    std::string extracted;
};

GradeResult grade_answer(const std::string& solution, const std::string& gold);

struct CandidateGrade {
    int sample_index = 0;
    bool correct = false;
    bool extractable = false;
    bool failed = false;  // generation error; counted incorrect
    std::string extracted;
    std::string error;
};

struct ProblemHits {
    std::string id;
    bool hit = false;
    int num_correct = 0;
    std::vector<CandidateGrade> candidates;
};

struct HitsReport {
    SampleMethod method = SampleMethod::Direct;
    SampleConfig config;
    std::vector<ProblemHits> problems;
    double accuracy = 0.0;
    int failed_candidates = 0;
    int unextractable_candidates = 0;
};

// K = sampler.config().K candidates per problem. Candidate i of a problem is
// the same regardless of K, so accuracy is monotone in K.
HitsReport hits_at_k(const std::vector<GradedProblem>& problems, const SolutionSampler& sampler, Gateway& gateway);

nlohmann::json to_json(const HitsReport& report);
std::string hits_csv(const HitsReport& report);

}  // namespace flsa
