#pragma once

// Shared fixtures for the test binaries: temp directories, scripted
// gateways, and the planted-keyword corpus with its oracle rules.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flsa/cli.hpp"
#include "flsa/corpus.hpp"
#include "flsa/flsa.hpp"
#include "flsa/gateway.hpp"

namespace flsa::testing {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = fs::temp_directory_path() /
                ("flsa-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << content;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct RuleSpec {
    std::string pattern;
    std::vector<std::string> responses;
    int priority = 0;
};

inline std::string rules_jsonl(const std::vector<RuleSpec>& rules) {
    std::string out;
    for (const auto& r : rules) {
        nlohmann::json j;
        j["pattern"] = r.pattern;
        if (r.responses.size() == 1) j["response"] = r.responses[0];
        else j["response"] = r.responses;
        j["priority"] = r.priority;
        out += j.dump() + "\n";
    }
    return out;
}

inline std::unique_ptr<Gateway> scripted_gateway(const std::vector<RuleSpec>& rules, GatewayOptions options = {}) {
    return std::make_unique<Gateway>(
        std::make_unique<ScriptedBackend>(ScriptedBackend::from_jsonl(rules_jsonl(rules))), std::move(options));
}

// Backend wrapper that records every prompt it answers.
class RecordingBackend : public Backend {
public:
    explicit RecordingBackend(std::unique_ptr<Backend> inner) : inner_(std::move(inner)) {}
    std::string generate(const ChatRequest& request) override {
        {
            std::lock_guard lock(mu_);
            requests_.push_back(request);
        }
        return inner_->generate(request);
    }
    BackendKind kind() const override { return inner_->kind(); }
    std::vector<ChatRequest> requests() const {
        std::lock_guard lock(mu_);
        return requests_;
    }

private:
    std::unique_ptr<Backend> inner_;
    mutable std::mutex mu_;
    std::vector<ChatRequest> requests_;
};

// ---------------------------------------------------------------------------
// Planted-keyword corpus: every segment mentions exactly one cluster keyword
// surrounded by neutral filler words.

inline const std::vector<std::string>& planted_keywords() {
    static const std::vector<std::string> k{"harbor", "violin", "glacier", "orchard", "comet"};
    return k;
}

struct PlantedCorpus {
    Corpus corpus;
    std::map<SegmentKey, int> truth;  // cluster index per segment
};

inline PlantedCorpus planted_corpus(int clusters, int per_cluster, int segments_per_doc, std::uint64_t seed) {
    static const std::vector<std::string> filler{"quiet", "morning", "people", "walked", "slowly", "toward",
                                                 "old",   "town",    "square", "while",  "talking", "plans",
                                                 "later", "every",   "small",  "bright", "window",  "stone"};
    std::mt19937_64 rng(seed);
    std::vector<std::pair<int, std::string>> segs;
    for (int c = 0; c < clusters; ++c) {
        for (int i = 0; i < per_cluster; ++i) {
            std::vector<std::string> words;
            for (int w = 0; w < 6; ++w) words.push_back(filler[rng() % filler.size()]);
            words.insert(words.begin() + static_cast<long>(rng() % 7), planted_keywords()[static_cast<std::size_t>(c)]);
            std::string text;
            for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
            segs.push_back({c, text + "."});
        }
    }
    std::shuffle(segs.begin(), segs.end(), rng);
    PlantedCorpus out;
    std::vector<Document> docs;
    for (std::size_t start = 0, d = 0; start < segs.size(); start += static_cast<std::size_t>(segments_per_doc), ++d) {
        Document doc;
        doc.id = "doc" + std::to_string(d);
        for (std::size_t k = start; k < std::min(segs.size(), start + static_cast<std::size_t>(segments_per_doc)); ++k) {
            const int index = static_cast<int>(doc.segments.size()) + 1;
            doc.segments.push_back({doc.id, index, segs[k].second});
            out.truth[{doc.id, index}] = segs[k].first;
        }
        docs.push_back(std::move(doc));
    }
    out.corpus = Corpus(std::move(docs));
    return out;
}

// Oracle: a description names the keyword of the first listed segment. An
// assignment picks the lowest tag whose description names the segment's
// keyword; when none does it takes the lowest UNUSED tag, else the second of
// two tags sharing a description, else tag 1.
inline std::vector<RuleSpec> planted_rules() {
    std::string alt;
    for (const auto& k : planted_keywords()) alt += (alt.empty() ? "" : "|") + k;
    return {
        {"Tag description\\n.*?Segment 1: [^\\n]*?\\b(" + alt + ")\\b", {"Segments about $1"}, 10},
        {"Tag (\\d+): Segments about (\\w+)\\n.*Segment to tag:\\n[^\\n]*\\b\\2\\b", {"Tag: $1"}, 10},
        {"Tag (\\d+): UNUSED\\n.*Segment to tag:", {"Tag: $1"}, 5},
        {"Tag \\d+: Segments about (\\w+)\\n.*?Tag (\\d+): Segments about \\1\\n.*Segment to tag:", {"Tag: $2"}, 4},
        {"Tag assignment", {"Tag: 1"}, 1},
        {"", {"ok"}, 0},
    };
}

// Reconstruction oracle: tags every segment 1, continues with "alternative
// <seed hint>", and answers choice prompts with a uniformly random letter
// among the first `options` labels. Deterministic given the call order.
class RandomChoiceBackend : public Backend {
public:
    RandomChoiceBackend(int options, std::uint64_t seed) : options_(options), rng_(seed) {}
    std::string generate(const ChatRequest& r) override {
        if (r.user.starts_with("Tag assignment")) return "Tag: 1";
        if (r.user.starts_with("Continuation choice")) {
            std::lock_guard lock(mu_);
            return std::string("Answer: ") + static_cast<char>('A' + rng_() % static_cast<std::uint64_t>(options_));
        }
        return "alternative " + std::to_string(r.seed_hint.value_or(-1));
    }
    BackendKind kind() const override { return BackendKind::Scripted; }

private:
    int options_;
    std::mutex mu_;
    std::mt19937_64 rng_;
};

// E[log((c + a) / (T + a S))] and its standard deviation for c ~ Binomial(T, p).
inline std::pair<double, double> binomial_log_moments(int T, double p, int S, double alpha) {
    double mean = 0, second = 0;
    for (int c = 0; c <= T; ++c) {
        const double logpmf = std::lgamma(T + 1.0) - std::lgamma(c + 1.0) - std::lgamma(T - c + 1.0) +
                              c * std::log(p) + (T - c) * std::log1p(-p);
        const double v = std::log((c + alpha) / (T + alpha * S));
        mean += std::exp(logpmf) * v;
        second += std::exp(logpmf) * v * v;
    }
    return {mean, std::sqrt(second - mean * mean)};
}

// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1;
        ra[a[i]] += 1;
        rb[b[i]] += 1;
    }
    auto c2 = [](double n) { return n * (n - 1) / 2; };
    double idx = 0, sa = 0, sb = 0;
    for (const auto& [k, n] : joint) idx += c2(n);
    for (const auto& [k, n] : ra) sa += c2(n);
    for (const auto& [k, n] : rb) sb += c2(n);
    const double expected = sa * sb / c2(static_cast<double>(a.size()));
    const double max_index = (sa + sb) / 2;
    if (max_index == expected) return 1.0;
    return (idx - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// CLI harness

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

inline CliResult run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Inputs for the full ingest -> fit-flsa -> dynamics fit -> sample hier ->
// eval hitsk pipeline: a raw blank-line-separated planted corpus, the planted
// oracle rules plus solve rules, and graded problems whose answer is only
// produced when the sampled plan mentions the matching keyword.
inline void write_pipeline_inputs(const fs::path& dir) {
    const auto planted = planted_corpus(3, 12, 4, 21);
    std::string raw;
    for (const auto& d : planted.corpus.documents()) {
        std::string text;
        for (const auto& s : d.segments) text += (text.empty() ? "" : "\n\n") + s.text;
        raw += nlohmann::json{{"id", d.id}, {"text", text}}.dump() + "\n";
    }
    write_file(dir / "raw.jsonl", raw);
    auto rules = planted_rules();
    rules.push_back({"Problem:\\n[^\\n]*(harbor|violin|glacier) count.*High-level plan:\\n.*Segments about \\1",
                     {"Follow the plan.\nAnswer: 12", "Work it out.\nAnswer: 12"}, 20});
    rules.push_back({"Problem:", {"Guess.\nAnswer: 0", "Unsure.\nAnswer: 5"}, 15});
    write_file(dir / "rules.jsonl", rules_jsonl(rules));
    write_file(dir / "problems.jsonl",
               "{\"id\":\"p1\",\"problem\":\"Find the harbor count.\",\"answer\":\"12\"}\n"
               "{\"id\":\"p2\",\"problem\":\"Find the violin count.\",\"answer\":\"12\"}\n"
               "{\"id\":\"p3\",\"problem\":\"Find the glacier count.\",\"answer\":\"12\"}\n"
               "{\"id\":\"p4\",\"problem\":\"Find the comet count.\",\"answer\":\"12\"}\n");
}

// Runs the pipeline inside `dir`; returns the artifact names in order, or
// the failing step's diagnostics.
inline std::vector<std::string> run_pipeline(const fs::path& dir, std::string& failure) {
    const std::string d = dir.string() + "/";
    const std::vector<std::string> common{"--backend", "scripted:" + d + "rules.jsonl", "--seed", "7",
                                          "--cache", d + "cache.jsonl", "-q"};
    auto with = [&](std::vector<std::string> args) {
        std::vector<std::string> all = common;
        all.insert(all.end(), args.begin(), args.end());
        return all;
    };
    const std::vector<std::vector<std::string>> steps{
        with({"ingest", "--input", d + "raw.jsonl", "--segmentation", "blank", "--out", d + "corpus.jsonl"}),
        with({"fit-flsa", "--corpus", d + "corpus.jsonl", "--tags", "6", "--max-iters", "6", "--out", d + "tags.json"}),
        with({"dynamics", "fit", "--model", d + "tags.json", "--corpus", d + "corpus.jsonl", "--out", d + "bigram.json"}),
        with({"dynamics", "dot", "--model", d + "bigram.json", "--out", d + "bigram.dot"}),
        with({"sample", "hier", "--problems", d + "problems.jsonl", "--k", "4", "--dynamics", d + "bigram.json",
              "--out", d + "candidates.jsonl"}),
        with({"eval", "hitsk", "--problems", d + "problems.jsonl", "--method", "hier", "--k", "4", "--dynamics",
              d + "bigram.json", "--out", d + "hits.json", "--csv", d + "hits.csv"}),
    };
    for (const auto& s : steps) {
        const auto r = run_cli(s);
        if (r.code != 0) {
            failure = s[common.size()] + " exited " + std::to_string(r.code) + ": " + r.err;
            return {};
        }
    }
    return {"corpus.jsonl", "tags.json", "tags.json.checkpoints/checkpoint-iter-001.json", "bigram.json",
            "bigram.dot", "candidates.jsonl", "hits.json", "hits.csv", "cache.jsonl"};
}

}  // namespace flsa::testing
