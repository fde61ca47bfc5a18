#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace flsa {

// END is an absorbing successor column, never a source.
inline constexpr int kEndTag = 0;

// First-order Markov chain over tags with a virtual START and an absorbing
// END:  p(t_1..t_l) = p(t_1) * prod_k p(t_k | t_{k-1}) * p(END | t_l).
// Probabilities use additive smoothing λ:
//   p(t' | t) = (n(t, t') + λ) / (n(t, ·) + λ (num_tags + 1))   t' ∈ tags ∪ {END}
//   p(t_1)    = (n(START, t_1) + λ) / (n(START, ·) + λ num_tags)
class BigramModel {
public:
    BigramModel() = default;
    BigramModel(int num_tags, double smoothing);
    // start[t-1] counts START -> t; trans[f-1][t-1] counts f -> t and
    // trans[f-1][num_tags] counts f -> END.
    static BigramModel from_counts(int num_tags, double smoothing, const std::vector<double>& start,
                                   const std::vector<std::vector<double>>& trans);

    int num_tags() const { return num_tags_; }
    double smoothing() const { return smoothing_; }

    // Count accessors; `to` may be kEndTag.
    double start_count(int tag) const;
    double transition_count(int from, int to) const;
    double start_total() const;
    double row_total(int from) const;

    double start_prob(int tag) const;
    // p(to | from); `to` may be kEndTag. A row with no data and λ = 0 is all zeros.
    double transition_prob(int from, int to) const;

    void add_sequence(const std::vector<int>& tags);

    bool operator==(const BigramModel&) const = default;

private:
    std::size_t col(int to) const;  // END maps to the last column
    void check_tag(int tag) const;

    int num_tags_ = 0;
    double smoothing_ = 0.0;
    std::vector<double> start_;  // index tag-1
    std::vector<double> trans_;  // num_tags x (num_tags + 1), row-major
};

// Throws ConfigError for an out-of-range tag, naming the sequence index.
BigramModel fit_bigram(const std::vector<std::vector<int>>& sequences, int num_tags, double smoothing);

// log p(t_1) + sum log p(t_k | t_{k-1}) + log p(END | t_l). A zero-probability
// step throws DegenerateError rather than returning -inf.
double sequence_log_prob(const BigramModel& model, const std::vector<int>& sequence);

struct Successor {
    int tag = kEndTag;
    double prob = 0.0;
    bool is_end() const { return tag == kEndTag; }
};

// Most probable successors of `tag`, by descending probability; ties go to
// the lower tag id and END sorts after every tag.
std::vector<Successor> top_k_next(const BigramModel& model, int tag, int k);

struct DotOptions {
    double edge_threshold = 0.0;
    int top_k = 3;
    std::size_t label_chars = 60;
};

// Graphviz digraph of each tag's top-k successors with probability at least
// the threshold. Tags without a retained edge are omitted.
std::string export_dot(const BigramModel& model, const std::map<int, std::string>& descriptions,
                       const DotOptions& options = {});

nlohmann::json to_json(const BigramModel& model);
BigramModel bigram_from_json(const nlohmann::json& j);

}  // namespace flsa
