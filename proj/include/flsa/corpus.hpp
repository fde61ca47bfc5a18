#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace flsa {

struct Segment {
    std::string doc_id;
    int index = 0;  // 1-based position in the document
    std::string text;

    bool operator==(const Segment&) const = default;
};

struct Document {
    std::string id;
    std::map<std::string, std::string> meta;
    std::vector<Segment> segments;

    std::size_t length() const { return segments.size(); }
    // 1-based access; throws IndexError when out of range.
    const Segment& segment(int k) const;

    bool operator==(const Document&) const = default;
};

enum class SegmentationMode { PreSegmented, BlankLine, NumberedStep };

struct SegmentationStrategy {
    SegmentationMode mode = SegmentationMode::PreSegmented;
    int min_chars = 1;
};

SegmentationMode parse_segmentation_mode(const std::string& name);
std::string to_string(SegmentationMode mode);

// Splits raw text into normalized, non-empty fragments according to the
// strategy. Fragments shorter than min_chars are merged into the previous
// fragment (the first one merges forward).
std::vector<std::string> split_text(const std::string& text, const SegmentationStrategy& strategy);

// An immutable, validated collection of documents.
class Corpus {
public:
    Corpus() = default;
    // Validates ids, segment numbering and non-empty segment text.
    explicit Corpus(std::vector<Document> docs);

    const std::vector<Document>& documents() const { return docs_; }
    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }
    std::size_t segment_count() const;

    const Document& document(const std::string& id) const;
    const Document* find(const std::string& id) const;

    bool operator==(const Corpus& other) const { return docs_ == other.docs_; }

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// Reads a JSONL corpus. Errors name the offending line number.
Corpus load_corpus(const std::filesystem::path& path, const SegmentationStrategy& strategy = {});
Corpus parse_corpus(const std::string& jsonl, const SegmentationStrategy& strategy = {});

// Writes the pre-segmented form: {"id", "meta", "segments"} per line.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);

// Context width around a segment: an even number of neighbours, or all of them.
class Window {
public:
    static Window unlimited() { return Window(); }
    // Throws ConfigError for negative or odd sizes.
    static Window of(int size);
    static Window parse(const std::string& text);  // "unlimited" or an even integer

    bool is_unlimited() const { return !size_; }
    int size() const { return size_.value_or(-1); }
    std::string to_string() const;

    bool operator==(const Window&) const = default;

private:
    Window() = default;
    std::optional<int> size_;
};

// Neighbours of segment k (1-based): up to W/2 before and W/2 after, cut at
// the document boundary, never including k itself.
std::vector<Segment> context_window(const Document& doc, int k, const Window& window);

}  // namespace flsa
