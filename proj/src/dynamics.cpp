#include "flsa/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "flsa/error.hpp"
#include "flsa/text.hpp"

namespace flsa {

using nlohmann::json;

BigramModel::BigramModel(int num_tags, double smoothing) : num_tags_(num_tags), smoothing_(smoothing) {
    if (num_tags < 1) throw ConfigError("num_tags must be >= 1");
    if (!(smoothing >= 0.0)) throw ConfigError("smoothing must be >= 0");
    start_.assign(static_cast<std::size_t>(num_tags), 0.0);
    trans_.assign(static_cast<std::size_t>(num_tags) * static_cast<std::size_t>(num_tags + 1), 0.0);
}

BigramModel BigramModel::from_counts(int num_tags, double smoothing, const std::vector<double>& start,
                                     const std::vector<std::vector<double>>& trans) {
    BigramModel m(num_tags, smoothing);
    const auto n = static_cast<std::size_t>(num_tags);
    if (start.size() != n || trans.size() != n) throw ParseError("bigram count arrays do not match num_tags");
    for (std::size_t t = 0; t < n; ++t) {
        if (!(start[t] >= 0.0)) throw ParseError("negative start count");
        m.start_[t] = start[t];
        if (trans[t].size() != n + 1) throw ParseError("transition row " + std::to_string(t + 1) + " has wrong width");
        for (std::size_t c = 0; c <= n; ++c) {
            if (!(trans[t][c] >= 0.0)) throw ParseError("negative transition count");
            m.trans_[t * (n + 1) + c] = trans[t][c];
        }
    }
    return m;
}

void BigramModel::check_tag(int tag) const {
    if (tag < 1 || tag > num_tags_) {
        throw ConfigError("tag " + std::to_string(tag) + " outside 1.." + std::to_string(num_tags_));
    }
}

std::size_t BigramModel::col(int to) const {
    if (to == kEndTag) return static_cast<std::size_t>(num_tags_);
    check_tag(to);
    return static_cast<std::size_t>(to - 1);
}

double BigramModel::start_count(int tag) const {
    check_tag(tag);
    return start_[static_cast<std::size_t>(tag - 1)];
}

double BigramModel::transition_count(int from, int to) const {
    check_tag(from);
    return trans_[static_cast<std::size_t>(from - 1) * static_cast<std::size_t>(num_tags_ + 1) + col(to)];
}

double BigramModel::start_total() const {
    double s = 0.0;
    for (double c : start_) s += c;
    return s;
}

double BigramModel::row_total(int from) const {
    check_tag(from);
    double s = 0.0;
    const auto base = static_cast<std::size_t>(from - 1) * static_cast<std::size_t>(num_tags_ + 1);
    for (std::size_t c = 0; c <= static_cast<std::size_t>(num_tags_); ++c) s += trans_[base + c];
    return s;
}

double BigramModel::start_prob(int tag) const {
    const double denom = start_total() + smoothing_ * num_tags_;
    if (denom <= 0.0) return 0.0;
    return (start_count(tag) + smoothing_) / denom;
}

double BigramModel::transition_prob(int from, int to) const {
    const double denom = row_total(from) + smoothing_ * (num_tags_ + 1);
    if (denom <= 0.0) return 0.0;
    return (transition_count(from, to) + smoothing_) / denom;
}

void BigramModel::add_sequence(const std::vector<int>& tags) {
    if (tags.empty()) throw ConfigError("empty tag sequence");
    for (int t : tags) check_tag(t);
    start_[static_cast<std::size_t>(tags.front() - 1)] += 1.0;
    const auto width = static_cast<std::size_t>(num_tags_ + 1);
    for (std::size_t k = 1; k < tags.size(); ++k) {
        trans_[static_cast<std::size_t>(tags[k - 1] - 1) * width + col(tags[k])] += 1.0;
    }
    trans_[static_cast<std::size_t>(tags.back() - 1) * width + col(kEndTag)] += 1.0;
}

BigramModel fit_bigram(const std::vector<std::vector<int>>& sequences, int num_tags, double smoothing) {
    if (sequences.empty()) throw ConfigError("no tag sequences to fit");
    BigramModel model(num_tags, smoothing);
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        try {
            model.add_sequence(sequences[i]);
        } catch (const ConfigError& e) {
            throw ConfigError("sequence " + std::to_string(i) + ": " + e.what());
        }
    }
    return model;
}

double sequence_log_prob(const BigramModel& model, const std::vector<int>& sequence) {
    if (sequence.empty()) throw ConfigError("empty tag sequence");
    auto step = [](double p, const std::string& what) {
        if (!(p > 0.0)) throw DegenerateError("zero probability for " + what + " (log probability is -infinity)");
        return std::log(p);
    };
    double lp = step(model.start_prob(sequence.front()), "start tag " + std::to_string(sequence.front()));
    for (std::size_t k = 1; k < sequence.size(); ++k) {
        lp += step(model.transition_prob(sequence[k - 1], sequence[k]),
                   "transition " + std::to_string(sequence[k - 1]) + "->" + std::to_string(sequence[k]));
    }
    lp += step(model.transition_prob(sequence.back(), kEndTag), "END after " + std::to_string(sequence.back()));
    return lp;
}

std::vector<Successor> top_k_next(const BigramModel& model, int tag, int k) {
    if (k <= 0) return {};
    std::vector<Successor> all;
    for (int t = 1; t <= model.num_tags(); ++t) all.push_back({t, model.transition_prob(tag, t)});
    all.push_back({kEndTag, model.transition_prob(tag, kEndTag)});
    auto order_key = [&](const Successor& s) { return s.is_end() ? model.num_tags() + 1 : s.tag; };
    std::stable_sort(all.begin(), all.end(), [&](const Successor& a, const Successor& b) {
        if (a.prob != b.prob) return a.prob > b.prob;
        return order_key(a) < order_key(b);
    });
    all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
    return all;
}

namespace {

std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

std::string node_id(int tag) { return tag == kEndTag ? std::string("END") : "t" + std::to_string(tag); }

}  // namespace

std::string export_dot(const BigramModel& model, const std::map<int, std::string>& descriptions,
                       const DotOptions& options) {
    struct Edge {
        int from;
        int to;
        double prob;
    };
    std::vector<Edge> edges;
    for (int t = 1; t <= model.num_tags(); ++t) {
        for (const auto& s : top_k_next(model, t, options.top_k)) {
            if (s.prob > 0.0 && s.prob >= options.edge_threshold) edges.push_back({t, s.tag, s.prob});
        }
    }
    std::set<int> nodes;
    for (const auto& e : edges) {
        nodes.insert(e.from);
        nodes.insert(e.to);
    }

    std::string out = "digraph tag_dynamics {\n  rankdir=LR;\n  node [shape=box, fontsize=10];\n";
    for (int n : nodes) {
        if (n == kEndTag) continue;
        std::string label = "Tag " + std::to_string(n);
        if (auto it = descriptions.find(n); it != descriptions.end() && !it->second.empty()) {
            label += "\\n" + dot_escape(text::truncate(text::single_line(it->second), options.label_chars));
        }
        out += "  " + node_id(n) + " [label=\"" + label + "\"];\n";
    }
    if (nodes.count(kEndTag)) out += "  END [label=\"<END>\", shape=doublecircle];\n";
    for (const auto& e : edges) {
        char prob[32];
        std::snprintf(prob, sizeof(prob), "%.2f", e.prob);
        out += "  " + node_id(e.from) + " -> " + node_id(e.to) + " [label=\"" + prob + "\"];\n";
    }
    out += "}\n";
    return out;
}

json to_json(const BigramModel& model) {
    json j;
    j["format"] = "bigram-model/1";
    j["num_tags"] = model.num_tags();
    j["smoothing"] = model.smoothing();
    json start = json::array();
    for (int t = 1; t <= model.num_tags(); ++t) start.push_back(model.start_count(t));
    j["start_counts"] = start;
    json rows = json::array();
    for (int f = 1; f <= model.num_tags(); ++f) {
        json row = json::array();
        for (int t = 1; t <= model.num_tags(); ++t) row.push_back(model.transition_count(f, t));
        row.push_back(model.transition_count(f, kEndTag));
        rows.push_back(std::move(row));
    }
    // Row f, column t-1 counts f -> t; the last column counts f -> END.
    j["trans_counts"] = rows;
    return j;
}

BigramModel bigram_from_json(const json& j) {
    try {
        return BigramModel::from_counts(j.at("num_tags").get<int>(), j.at("smoothing").get<double>(),
                                        j.at("start_counts").get<std::vector<double>>(),
                                        j.at("trans_counts").get<std::vector<std::vector<double>>>());
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid bigram model JSON: ") + e.what());
    }
}

}  // namespace flsa
