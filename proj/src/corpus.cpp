#include "flsa/corpus.hpp"

#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "flsa/error.hpp"
#include "flsa/text.hpp"

namespace flsa {

using nlohmann::json;

const Segment& Document::segment(int k) const {
    if (k < 1 || static_cast<std::size_t>(k) > segments.size()) {
        throw IndexError("segment index " + std::to_string(k) + " out of range 1.." +
                         std::to_string(segments.size()) + " in document " + id);
    }
    return segments[static_cast<std::size_t>(k - 1)];
}

SegmentationMode parse_segmentation_mode(const std::string& name) {
    if (name == "pre-segmented") return SegmentationMode::PreSegmented;
    if (name == "blank-line") return SegmentationMode::BlankLine;
    if (name == "numbered-step") return SegmentationMode::NumberedStep;
    throw ConfigError("unknown segmentation mode '" + name +
                      "' (expected pre-segmented, blank-line or numbered-step)");
}

std::string to_string(SegmentationMode mode) {
    switch (mode) {
        case SegmentationMode::PreSegmented: return "pre-segmented";
        case SegmentationMode::BlankLine: return "blank-line";
        case SegmentationMode::NumberedStep: return "numbered-step";
    }
    return "?";
}

namespace {

std::vector<std::string> split_blank_lines(const std::string& text) {
    std::vector<std::string> parts;
    std::istringstream in(text);
    std::string line;
    std::string cur;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) {
            if (!cur.empty()) parts.push_back(std::move(cur));
            cur.clear();
        } else {
            if (!cur.empty()) cur.push_back('\n');
            cur += line;
        }
    }
    if (!cur.empty()) parts.push_back(std::move(cur));
    return parts;
}

std::vector<std::string> split_numbered_steps(const std::string& text) {
    static const std::regex step_start(R"(^\s*(\d+[.)](\s|$)|step\s*\d+\s*[:.)]))",
                                       std::regex::icase);
    std::vector<std::string> parts;
    std::istringstream in(text);
    std::string line;
    std::string cur;
    while (std::getline(in, line)) {
        if (std::regex_search(line, step_start) && !text::trim(cur).empty()) {
            parts.push_back(std::move(cur));
            cur.clear();
        }
        if (!cur.empty()) cur.push_back('\n');
        cur += line;
    }
    if (!text::trim(cur).empty()) parts.push_back(std::move(cur));
    return parts;
}

}  // namespace

std::vector<std::string> split_text(const std::string& raw, const SegmentationStrategy& strategy) {
    if (strategy.min_chars < 1) throw ConfigError("min_chars must be >= 1");
    std::vector<std::string> pieces;
    switch (strategy.mode) {
        case SegmentationMode::PreSegmented: pieces = {raw}; break;
        case SegmentationMode::BlankLine: pieces = split_blank_lines(raw); break;
        case SegmentationMode::NumberedStep: pieces = split_numbered_steps(raw); break;
    }
    std::vector<std::string> out;
    for (auto& p : pieces) {
        std::string norm = text::normalize_whitespace(p);
        if (norm.empty()) continue;
        out.push_back(std::move(norm));
    }
    const auto min_len = static_cast<std::size_t>(strategy.min_chars);
    std::vector<std::string> merged;
    for (auto& frag : out) {
        if (!merged.empty() && frag.size() < min_len) {
            merged.back() += "\n" + frag;
        } else {
            merged.push_back(std::move(frag));
        }
    }
    // A short leading fragment has no predecessor; fold it into the next one.
    if (merged.size() >= 2 && merged.front().size() < min_len) {
        merged[1] = merged.front() + "\n" + merged[1];
        merged.erase(merged.begin());
    }
    return merged;
}

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        const Document& d = docs_[i];
        if (d.id.empty()) throw ParseError("document with empty id");
        if (d.segments.empty()) throw ParseError("empty document " + d.id);
        for (std::size_t k = 0; k < d.segments.size(); ++k) {
            const Segment& s = d.segments[k];
            if (s.doc_id != d.id || s.index != static_cast<int>(k + 1)) {
                throw ParseError("document " + d.id + ": segment indices must be 1..L");
            }
            if (text::trim(s.text).empty()) {
                throw ParseError("document " + d.id + ": segment " + std::to_string(k + 1) + " is empty");
            }
        }
        if (!by_id_.emplace(d.id, i).second) throw ParseError("duplicate document id " + d.id);
    }
}

std::size_t Corpus::segment_count() const {
    std::size_t n = 0;
    for (const auto& d : docs_) n += d.segments.size();
    return n;
}

const Document& Corpus::document(const std::string& id) const {
    const Document* d = find(id);
    if (!d) throw IndexError("unknown document " + id);
    return *d;
}

const Document* Corpus::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

namespace {

Document parse_record(const json& rec, const SegmentationStrategy& strategy) {
    if (!rec.is_object()) throw ParseError("record is not a JSON object");
    for (const auto& [key, _] : rec.items()) {
        if (key != "id" && key != "meta" && key != "segments" && key != "text") {
            throw ParseError("unknown field '" + key + "'");
        }
    }
    if (!rec.contains("id") || !rec["id"].is_string()) throw ParseError("missing string field 'id'");
    Document doc;
    doc.id = rec["id"].get<std::string>();
    if (doc.id.empty()) throw ParseError("empty id");
    if (rec.contains("meta")) {
        if (!rec["meta"].is_object()) throw ParseError("'meta' must be an object");
        for (const auto& [k, v] : rec["meta"].items()) {
            if (!v.is_string()) throw ParseError("meta value '" + k + "' must be a string");
            doc.meta[k] = v.get<std::string>();
        }
    }
    const bool has_segments = rec.contains("segments");
    const bool has_text = rec.contains("text");
    if (has_segments == has_text) {
        throw ParseError("document " + doc.id + ": exactly one of 'segments' or 'text' is required");
    }
    std::vector<std::string> pieces;
    if (has_segments) {
        if (!rec["segments"].is_array()) throw ParseError("'segments' must be an array");
        for (const auto& s : rec["segments"]) {
            if (!s.is_string()) throw ParseError("document " + doc.id + ": segments must be strings");
            std::string norm = text::normalize_whitespace(s.get<std::string>());
            if (norm.empty()) {
                throw ParseError("document " + doc.id + ": segment " + std::to_string(pieces.size() + 1) +
                                 " is empty");
            }
            pieces.push_back(std::move(norm));
        }
    } else {
        if (!rec["text"].is_string()) throw ParseError("'text' must be a string");
        if (strategy.mode == SegmentationMode::PreSegmented) {
            throw ParseError("document " + doc.id +
                             " has raw text; choose the blank-line or numbered-step mode");
        }
        pieces = split_text(rec["text"].get<std::string>(), strategy);
    }
    if (pieces.empty()) throw ParseError("empty document " + doc.id);
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        doc.segments.push_back(Segment{doc.id, static_cast<int>(k + 1), std::move(pieces[k])});
    }
    return doc;
}

}  // namespace

Corpus parse_corpus(const std::string& jsonl, const SegmentationStrategy& strategy) {
    std::istringstream in(jsonl);
    std::string line;
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;
        try {
            json rec = json::parse(line);
            Document doc = parse_record(rec, strategy);
            if (!seen.insert(doc.id).second) throw ParseError("duplicate document id " + doc.id);
            docs.push_back(std::move(doc));
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        } catch (const Error& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (docs.empty()) throw ParseError("empty corpus");
    return Corpus(std::move(docs));
}

Corpus load_corpus(const std::filesystem::path& path, const SegmentationStrategy& strategy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open corpus file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_corpus(buf.str(), strategy);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const auto& d : corpus.documents()) {
        json rec;
        rec["id"] = d.id;
        rec["meta"] = json::object();
        for (const auto& [k, v] : d.meta) rec["meta"][k] = v;
        rec["segments"] = json::array();
        for (const auto& s : d.segments) rec["segments"].push_back(s.text);
        out += rec.dump();
        out.push_back('\n');
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << serialize_corpus(corpus);
}

Window Window::of(int size) {
    if (size < 0) throw ConfigError("context window must be >= 0");
    if (size % 2 != 0) throw ConfigError("context window must be even (got " + std::to_string(size) + ")");
    Window w;
    w.size_ = size;
    return w;
}

Window Window::parse(const std::string& text) {
    if (text == "unlimited" || text == "all") return unlimited();
    try {
        std::size_t used = 0;
        int v = std::stoi(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return of(v);
    } catch (const std::logic_error&) {
        throw ConfigError("invalid context window '" + text + "' (expected an even integer or 'unlimited')");
    }
}

std::string Window::to_string() const {
    return size_ ? std::to_string(*size_) : std::string("unlimited");
}

std::vector<Segment> context_window(const Document& doc, int k, const Window& window) {
    const int len = static_cast<int>(doc.length());
    if (k < 1 || k > len) {
        throw IndexError("segment index " + std::to_string(k) + " out of range 1.." + std::to_string(len));
    }
    int lo = 1;
    int hi = len;
    if (!window.is_unlimited()) {
        const int half = window.size() / 2;
        lo = std::max(1, k - half);
        hi = std::min(len, k + half);
    }
    std::vector<Segment> out;
    for (int j = lo; j <= hi; ++j) {
        if (j != k) out.push_back(doc.segment(j));
    }
    return out;
}

}  // namespace flsa
