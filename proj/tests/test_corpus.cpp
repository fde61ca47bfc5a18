#include <doctest.h>

#include "flsa/corpus.hpp"
#include "flsa/error.hpp"
#include "flsa/text.hpp"
#include "support.hpp"

using namespace flsa;

namespace {

std::vector<int> indices(const std::vector<Segment>& segs) {
    std::vector<int> out;
    for (const auto& s : segs) out.push_back(s.index);
    return out;
}

Document doc_of_length(int n) {
    Document d;
    d.id = "d";
    for (int k = 1; k <= n; ++k) d.segments.push_back({"d", k, "segment " + std::to_string(k)});
    return d;
}

}  // namespace

TEST_CASE("whitespace normalization keeps newlines and collapses runs") {
    CHECK(text::normalize_whitespace("  a \t b  \r\n  c  ") == "a b\nc");
    CHECK(text::normalize_whitespace("x\n\n\ny") == "x\n\n\ny");
    CHECK(text::single_line(" a\n b ") == "a b");
    CHECK(text::word_tokens("Hello, World-42!") == std::vector<std::string>{"hello", "world", "42"});
}

TEST_CASE("truncate never splits a UTF-8 sequence") {
    const std::string s = "\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9";  // four 2-byte characters
    const std::string t = text::truncate(s, 5);
    CHECK(t.size() <= 8);
    CHECK(t.find("...") != std::string::npos);
    CHECK(text::truncate("short", 60) == "short");
}

TEST_CASE("pre-segmented record passes through") {
    const Corpus c = parse_corpus(R"({"id":"d1","segments":["a","b"]})");
    REQUIRE(c.size() == 1);
    const Document& d = c.document("d1");
    CHECK(d.length() == 2);
    CHECK(d.segment(1).index == 1);
    CHECK(d.segment(2).index == 2);
    CHECK(d.segment(2).text == "b");
    CHECK(d.segment(1).doc_id == "d1");
}

TEST_CASE("blank-line segmentation") {
    const Corpus c = parse_corpus(R"({"id":"d1","text":"p1\n\np2\n\np3"})", {SegmentationMode::BlankLine, 1});
    CHECK(c.document("d1").length() == 3);
    CHECK(c.document("d1").segment(3).text == "p3");
}

TEST_CASE("numbered-step segmentation") {
    const auto parts = split_text("Intro line\n1. first step\n2) second step\nStep 3: third", {SegmentationMode::NumberedStep, 1});
    REQUIRE(parts.size() == 4);
    CHECK(parts[0] == "Intro line");
    CHECK(parts[1] == "1. first step");
    CHECK(parts[3] == "Step 3: third");
}

TEST_CASE("short fragments merge into the previous one") {
    const auto parts = split_text("long paragraph here\n\nok\n\nanother long one", {SegmentationMode::BlankLine, 5});
    REQUIRE(parts.size() == 2);
    CHECK(parts[0] == "long paragraph here\nok");
}

TEST_CASE("corpus errors name the line") {
    CHECK_THROWS_WITH_AS(parse_corpus(R"({"id":"d1","segments":[]})"), "line 1: empty document d1", ParseError);
    CHECK_THROWS_WITH_AS(parse_corpus(""), "empty corpus", ParseError);
    CHECK_THROWS_AS(parse_corpus("{\"id\":\"a\",\"segments\":[\"x\"]}\n{not json"), ParseError);
    try {
        parse_corpus("{\"id\":\"a\",\"segments\":[\"x\"]}\n{\"id\":\"a\",\"segments\":[\"y\"]}");
        FAIL("duplicate id accepted");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_corpus(R"({"id":"d","segments":["x"],"extra":1})"), ParseError);
    CHECK_THROWS_AS(parse_corpus(R"({"id":"d","segments":["x"],"text":"y"})"), ParseError);
    CHECK_THROWS_AS(parse_corpus(R"({"id":"d","segments":["  "]})"), ParseError);
    CHECK_THROWS_AS(parse_corpus(R"({"id":"d","text":"a"})"), ParseError);  // raw text needs a split mode
}

TEST_CASE("save then load round-trips") {
    testing::TempDir dir;
    const Corpus c = parse_corpus(
        "{\"id\":\"x\",\"meta\":{\"source\":\"s\",\"answer\":\"4\"},\"segments\":[\"one\",\"two\\nlines\"]}\n"
        "{\"id\":\"y\",\"segments\":[\"three\"]}\n");
    save_corpus(c, dir / "c.jsonl");
    const Corpus back = load_corpus(dir / "c.jsonl");
    CHECK(back == c);
    CHECK(back.document("x").meta.at("answer") == "4");
    CHECK(back.document("x").segment(2).text == "two\nlines");
}

TEST_CASE("segmentation is deterministic") {
    const std::string raw = "{\"id\":\"a\",\"text\":\"p one\\n\\n p two \\n\\np three\"}";
    CHECK(parse_corpus(raw, {SegmentationMode::BlankLine, 1}) == parse_corpus(raw, {SegmentationMode::BlankLine, 1}));
}

TEST_CASE("context window examples") {
    CHECK(indices(context_window(doc_of_length(5), 3, Window::of(2))) == std::vector<int>{2, 4});
    CHECK(indices(context_window(doc_of_length(5), 1, Window::of(2))) == std::vector<int>{2});
    CHECK(indices(context_window(doc_of_length(3), 2, Window::unlimited())) == std::vector<int>{1, 3});
    CHECK(indices(context_window(doc_of_length(5), 3, Window::of(0))).empty());
    CHECK_THROWS_AS(context_window(doc_of_length(3), 4, Window::of(2)), IndexError);
    CHECK_THROWS_AS(context_window(doc_of_length(3), 0, Window::of(2)), IndexError);
}

TEST_CASE("odd or negative windows are rejected") {
    CHECK_THROWS_AS(Window::of(3), ConfigError);
    CHECK_THROWS_AS(Window::of(-2), ConfigError);
    CHECK(Window::parse("unlimited").is_unlimited());
    CHECK(Window::parse("4").size() == 4);
    CHECK_THROWS_AS(Window::parse("four"), ConfigError);
}

TEST_CASE("window never contains k and never leaves the document") {
    for (int L = 1; L <= 9; ++L) {
        const Document d = doc_of_length(L);
        for (int k = 1; k <= L; ++k) {
            for (int W : {0, 2, 4, 6, 20}) {
                const auto w = context_window(d, k, Window::of(W));
                for (const auto& s : w) {
                    CHECK(s.index != k);
                    CHECK(s.index >= 1);
                    CHECK(s.index <= L);
                    CHECK(std::abs(s.index - k) <= W / 2);
                }
                CHECK(std::is_sorted(w.begin(), w.end(), [](auto& a, auto& b) { return a.index < b.index; }));
            }
            CHECK(context_window(d, k, Window::unlimited()).size() == static_cast<std::size_t>(L - 1));
        }
    }
}
