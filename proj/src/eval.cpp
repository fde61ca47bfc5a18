#include "flsa/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include "flsa/error.hpp"
#include "flsa/log.hpp"
#include "flsa/parallel.hpp"
#include "flsa/prompts.hpp"
#include "flsa/random.hpp"
#include "flsa/text.hpp"

namespace flsa {

using nlohmann::json;

namespace {

constexpr std::uint64_t kCaseStream = 0x7265636e;  // "recn"
constexpr std::uint64_t kDrawStream = 0x64726177;  // "draw"

std::string option_label(int position) { return std::string(1, static_cast<char>('A' + position)); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

void EvalConfig::validate() const {
    if (S < 1) throw ConfigError("S must be >= 1");
    if (C < 1 || C > S) throw ConfigError("C must satisfy 1 <= C <= S");
    if (C + 1 > 26) throw ConfigError("C must be at most 25 (options are labeled A-Z)");
    if (T_trials < 1) throw ConfigError("T_trials must be >= 1");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (continuation_max_tokens < 1 || choice_max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
}

json to_json(const EvalConfig& c) {
    return {{"S", c.S},
            {"T_trials", c.T_trials},
            {"C", c.C},
            {"alpha", c.alpha},
            {"seed", c.seed},
            {"continuation_max_tokens", c.continuation_max_tokens},
            {"choice_max_tokens", c.choice_max_tokens}};
}

EvalConfig eval_config_from_json(const json& j) {
    EvalConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "S") c.S = v.get<int>();
        else if (key == "T_trials") c.T_trials = v.get<int>();
        else if (key == "C") c.C = v.get<int>();
        else if (key == "alpha") c.alpha = v.get<double>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "continuation_max_tokens") c.continuation_max_tokens = v.get<int>();
        else if (key == "choice_max_tokens") c.choice_max_tokens = v.get<int>();
        else throw ConfigError("unknown eval config key '" + key + "'");
    }
    return c;
}

double smoothed_log_prob(int c, int T_trials, int S, double alpha) {
    if (c < 0 || c > T_trials) throw ConfigError("count outside 0..T_trials");
    return std::log((c + alpha) / (T_trials + alpha * S));
}

std::string render_prefix(const std::vector<Segment>& prefix) {
    if (prefix.empty()) return "(beginning of document)";
    std::string out;
    for (const auto& s : prefix) {
        if (!out.empty()) out.push_back('\n');
        out += text::trim(s.text);
    }
    return out;
}

ChatRequest build_continue_request(const std::vector<Segment>& prefix, int alternative, int max_tokens) {
    const auto& tmpl = PromptSet::active().get("continue");
    ChatRequest r;
    r.system = tmpl.system;
    r.user = render_template(tmpl.user, {{"prefix", render_prefix(prefix)}});
    r.temperature = kSamplingTemperature;
    r.max_tokens = max_tokens;
    r.seed_hint = alternative;
    return r;
}

std::vector<std::string> sample_alternatives(const std::vector<Segment>& prefix, int S, Gateway& gateway,
                                             int max_tokens) {
    if (S < 1) throw ConfigError("S must be >= 1");
    std::vector<std::string> out(static_cast<std::size_t>(S));
    for (int i = 0; i < S; ++i) {
        out[static_cast<std::size_t>(i)] = text::trim(gateway.complete(build_continue_request(prefix, i, max_tokens)).text);
    }
    return out;
}

ChatRequest build_choice_request(const std::vector<Segment>& prefix, const std::vector<std::string>& options,
                                 const std::optional<std::string>& tag, int max_tokens) {
    if (options.size() < 2 || options.size() > 26) throw ConfigError("a choice needs 2 to 26 options");
    std::string listing;
    for (std::size_t p = 0; p < options.size(); ++p) {
        if (p > 0) listing.push_back('\n');
        listing += "(" + option_label(static_cast<int>(p)) + ") " + text::single_line(options[p]);
    }
    const auto& tmpl = PromptSet::active().get(tag ? "choose_tagged" : "choose_plain");
    std::map<std::string, std::string> vars{{"prefix", render_prefix(prefix)}, {"options", listing}};
    if (tag) vars["tag"] = text::single_line(*tag);
    ChatRequest r;
    r.system = tmpl.system;
    r.user = render_template(tmpl.user, vars);
    r.temperature = kChoiceTemperature;
    r.max_tokens = max_tokens;
    return r;
}

std::optional<int> parse_choice_letter(const std::string& reply, int num_options) {
    const std::string s = text::trim(reply.substr(0, std::min<std::size_t>(reply.size(), 2000)));
    auto to_index = [&](char c) -> std::optional<int> {
        const int i = std::toupper(static_cast<unsigned char>(c)) - 'A';
        if (i >= 0 && i < num_options) return i;
        return std::nullopt;
    };
    static const std::regex kAnswer(R"((?:answer|option|choice)\s*(?:is|:)?\s*\(?([A-Za-z])\b)", std::regex::icase);
    static const std::regex kParen(R"(\(([A-Za-z])\))");
    static const std::regex kBare(R"(^\(?([A-Za-z])\)?[.:)]?$)");
    std::smatch m;
    if (std::regex_search(s, m, kAnswer)) {
        if (auto i = to_index(m[1].str()[0])) return i;
    }
    if (std::regex_search(s, m, kParen)) {
        if (auto i = to_index(m[1].str()[0])) return i;
    }
    if (std::regex_match(s, m, kBare)) return to_index(m[1].str()[0]);
    return std::nullopt;
}

std::vector<int> random_permutation(std::mt19937_64& rng, int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
    return p;
}

ChoiceOutcome run_choice(const std::vector<Segment>& prefix, const std::vector<std::string>& options_by_id,
                         const std::vector<int>& order, const std::optional<std::string>& tag, Gateway& gateway,
                         int max_tokens) {
    if (order.size() != options_by_id.size()) throw ConfigError("option order does not match the options");
    std::vector<std::string> shown;
    int true_position = -1;
    for (std::size_t p = 0; p < order.size(); ++p) {
        shown.push_back(options_by_id.at(static_cast<std::size_t>(order[p])));
        if (order[p] == 0) true_position = static_cast<int>(p);
    }
    ChatRequest request = build_choice_request(prefix, shown, tag, max_tokens);
    const int n = static_cast<int>(shown.size());

    ChoiceOutcome out;
    try {
        out.chosen = parse_choice_letter(gateway.complete(request).text, n);
    } catch (const ResponseError&) {
        // empty reply; retried below
    }
    if (!out.chosen) {
        std::string labels;
        for (int p = 0; p < n; ++p) labels += (p ? ", " : "") + option_label(p);
        request.user += render_template(PromptSet::active().get("choose_retry").user, {{"labels", labels}});
        try {
            out.chosen = parse_choice_letter(gateway.complete(request).text, n);
        } catch (const ResponseError&) {
        }
    }
    out.flagged = !out.chosen.has_value();
    out.correct = out.chosen && *out.chosen == true_position;
    return out;
}

TrialResult choice_trial(const std::vector<Segment>& prefix, const std::string& true_segment,
                         const std::vector<std::string>& distractors, const std::optional<std::string>& tag,
                         Gateway& gateway, std::mt19937_64& rng) {
    if (distractors.empty()) throw ConfigError("a trial needs at least one distractor");
    std::vector<std::string> options{true_segment};
    options.insert(options.end(), distractors.begin(), distractors.end());
    TrialResult r;
    r.order = random_permutation(rng, static_cast<int>(options.size()));
    r.true_position = static_cast<int>(std::find(r.order.begin(), r.order.end(), 0) - r.order.begin());
    r.outcome = run_choice(prefix, options, r.order, tag, gateway);
    return r;
}

std::vector<TestCase> draw_test_cases(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
    std::vector<TestCase> all;
    for (const auto& d : corpus.documents()) {
        for (const auto& s : d.segments) all.push_back({d.id, s.index});
    }
    if (n >= all.size()) return all;
    auto rng = seeded_rng({seed, kDrawStream});
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::vector<TestCase> out;
    out.reserve(n);
    for (auto i : idx) out.push_back(all[i]);
    return out;
}

namespace {

std::vector<Segment> prefix_of(const Document& doc, int k) {
    return {doc.segments.begin(), doc.segments.begin() + (k - 1)};
}

ReconTrialRecord run_case(std::size_t case_index, const TestCase& tc, const Corpus& corpus, const TagModel& model,
                          Gateway& gateway, const EvalConfig& config) {
    const Document& doc = corpus.document(tc.doc_id);
    const Segment& seg = doc.segment(tc.k);
    auto rng = seeded_rng({config.seed, kCaseStream, static_cast<std::uint64_t>(case_index)});

    ReconTrialRecord rec;
    rec.doc_id = tc.doc_id;
    rec.k = tc.k;
    rec.tag = e_step_assign(model, seg, context_window(doc, tc.k, model.config.window), gateway);
    const std::string& description = model.description(rec.tag);

    const auto prefix = prefix_of(doc, tc.k);
    rec.alternatives = sample_alternatives(prefix, config.S, gateway, config.continuation_max_tokens);

    const auto S = static_cast<std::size_t>(config.S);
    std::vector<std::size_t> pool(S);
    for (int t = 0; t < config.T_trials; ++t) {
        // C distinct alternatives (partial Fisher-Yates), then one shuffle
        // shared by both variants.
        std::iota(pool.begin(), pool.end(), 0);
        std::vector<int> distractors;
        std::vector<std::string> options{seg.text};
        for (std::size_t i = 0; i < static_cast<std::size_t>(config.C); ++i) {
            std::swap(pool[i], pool[i + uniform_index(rng, S - i)]);
            distractors.push_back(static_cast<int>(pool[i]));
            options.push_back(rec.alternatives[pool[i]]);
        }
        const auto order = random_permutation(rng, config.C + 1);

        TrialAudit audit;
        auto run = [&](VariantAudit& v, const std::optional<std::string>& tag) {
            const auto outcome = run_choice(prefix, options, order, tag, gateway, config.choice_max_tokens);
            v.distractors = distractors;
            v.order = order;
            v.chosen = outcome.chosen;
            v.correct = outcome.correct;
            v.flagged = outcome.flagged;
        };
        run(audit.with_tag, description);
        run(audit.no_tag, std::nullopt);
        rec.c_with_tag += audit.with_tag.correct ? 1 : 0;
        rec.c_no_tag += audit.no_tag.correct ? 1 : 0;
        rec.flagged += (audit.with_tag.flagged ? 1 : 0) + (audit.no_tag.flagged ? 1 : 0);
        rec.trials.push_back(std::move(audit));
    }
    rec.log_prob_with_tag = smoothed_log_prob(rec.c_with_tag, config.T_trials, config.S, config.alpha);
    rec.log_prob_no_tag = smoothed_log_prob(rec.c_no_tag, config.T_trials, config.S, config.alpha);
    return rec;
}

std::pair<double, double> mean_and_stderr(const std::vector<double>& xs) {
    if (xs.empty()) return {std::nan(""), std::nan("")};
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

ReconReport eval_reconstruction(const std::vector<TestCase>& cases, const Corpus& corpus, const TagModel& model,
                                Gateway& gateway, const EvalConfig& config) {
    config.validate();
    if (!model.has_descriptions()) throw ConfigError("the tag model has no descriptions");

    std::vector<std::optional<ReconTrialRecord>> records(cases.size());
    std::vector<std::string> errors(cases.size());
    parallel_for(cases.size(), gateway.parallelism(), [&](std::size_t i) {
        try {
            records[i] = run_case(i, cases[i], corpus, model, gateway, config);
        } catch (const BudgetExceeded&) {
            throw;
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });

    ReconReport report;
    report.config = config;
    std::vector<double> with, without;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (records[i]) {
            with.push_back(records[i]->log_prob_with_tag);
            without.push_back(records[i]->log_prob_no_tag);
            report.cases.push_back(std::move(*records[i]));
        } else {
            log::warn("excluding case " + cases[i].doc_id + "#" + std::to_string(cases[i].k) + ": " + errors[i]);
            report.excluded.push_back({cases[i].doc_id, cases[i].k, errors[i]});
        }
    }
    std::tie(report.mean_with_tag, report.stderr_with_tag) = mean_and_stderr(with);
    std::tie(report.mean_no_tag, report.stderr_no_tag) = mean_and_stderr(without);
    return report;
}

std::vector<ChatRequest> reconstruction_first_requests(const TestCase& tc, const Corpus& corpus,
                                                       const TagModel& model, const EvalConfig& config) {
    const Document& doc = corpus.document(tc.doc_id);
    std::vector<ChatRequest> out{
        build_assign_request(model, doc.segment(tc.k), context_window(doc, tc.k, model.config.window))};
    const auto prefix = prefix_of(doc, tc.k);
    for (int i = 0; i < config.S; ++i) out.push_back(build_continue_request(prefix, i, config.continuation_max_tokens));
    return out;
}

namespace {

json to_json(const VariantAudit& v) {
    return {{"distractors", v.distractors},
            {"order", v.order},
            {"chosen", v.chosen ? json(*v.chosen) : json(nullptr)},
            {"correct", v.correct},
            {"flagged", v.flagged}};
}

}  // namespace

json to_json(const ReconReport& report) {
    json cases = json::array();
    for (const auto& c : report.cases) {
        json trials = json::array();
        for (const auto& t : c.trials) trials.push_back({{"with_tag", to_json(t.with_tag)}, {"no_tag", to_json(t.no_tag)}});
        cases.push_back({{"doc_id", c.doc_id},
                         {"k", c.k},
                         {"tag", c.tag},
                         {"c_with_tag", c.c_with_tag},
                         {"c_no_tag", c.c_no_tag},
                         {"flagged", c.flagged},
                         {"log_prob_with_tag", c.log_prob_with_tag},
                         {"log_prob_no_tag", c.log_prob_no_tag},
                         {"alternatives", c.alternatives},
                         {"trials", trials}});
    }
    json excluded = json::array();
    for (const auto& e : report.excluded) excluded.push_back({{"doc_id", e.doc_id}, {"k", e.k}, {"error", e.error}});
    return {{"format", "recon-report/1"},
            {"config", to_json(report.config)},
            {"num_cases", report.cases.size()},
            {"num_excluded", report.excluded.size()},
            {"mean_with_tag", report.mean_with_tag},
            {"mean_no_tag", report.mean_no_tag},
            {"stderr_with_tag", report.stderr_with_tag},
            {"stderr_no_tag", report.stderr_no_tag},
            {"cases", cases},
            {"excluded", excluded}};
}

std::string recon_csv(const ReconReport& report) {
    std::string out = "doc_id,k,tag,c_with_tag,c_no_tag,flagged,log_prob_with_tag,log_prob_no_tag\n";
    for (const auto& c : report.cases) {
        out += csv_field(c.doc_id) + "," + std::to_string(c.k) + "," + std::to_string(c.tag) + "," +
               std::to_string(c.c_with_tag) + "," + std::to_string(c.c_no_tag) + "," + std::to_string(c.flagged) +
               "," + fmt_double(c.log_prob_with_tag) + "," + fmt_double(c.log_prob_no_tag) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<GradedProblem> parse_problems(const std::string& jsonl, bool require_answer) {
    std::vector<GradedProblem> out;
    std::set<std::string> seen;
    std::istringstream in(jsonl);
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (text::trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(where + "invalid JSON (" + e.what() + ")");
        }
        if (!j.is_object()) throw ParseError(where + "expected an object");
        auto field = [&](const char* key) {
            if (!j.contains(key)) throw ParseError(where + "missing \"" + key + "\"");
            const json& v = j.at(key);
            if (v.is_string()) return v.get<std::string>();
            if (v.is_number()) return v.dump();
            throw ParseError(where + "\"" + key + "\" must be a string");
        };
        GradedProblem p{field("id"), field("problem"), ""};
        if (require_answer || j.contains("answer")) p.answer = field("answer");
        if (require_answer && text::trim(p.answer).empty()) throw ParseError(where + "empty gold answer for " + p.id);
        if (!seen.insert(p.id).second) throw ParseError(where + "duplicate problem id " + p.id);
        out.push_back(std::move(p));
    }
    if (out.empty()) throw ParseError("no problems");
    return out;
}

std::vector<GradedProblem> load_problems(const std::filesystem::path& path, bool require_answer) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_problems(ss.str(), require_answer);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

namespace {

// Content of the brace group opening at s[open] == '{'.
std::optional<std::string> brace_group(const std::string& s, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        else if (s[i] == '}' && --depth == 0) return s.substr(open + 1, i - open - 1);
    }
    return std::nullopt;
}

std::optional<std::size_t> rfind_icase(const std::string& hay, const std::string& needle) {
    const std::string lower = text::to_lower(hay);
    const auto pos = lower.rfind(needle);
    if (pos == std::string::npos) return std::nullopt;
    return pos;
}

bool is_trailing_punct(char c) { return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?'; }

std::string strip_trailing_punct(std::string s) {
    while (!s.empty() && (is_trailing_punct(s.back()) || std::isspace(static_cast<unsigned char>(s.back())))) {
        s.pop_back();
    }
    return text::trim(s);
}

bool parse_int(const std::string& s, long long& out) {
    if (s.empty() || s.size() > 18) return false;
    for (char c : s) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    out = std::stoll(s);
    return true;
}

// Unsigned decimal "123", "1,234", "0.75" or ".5" as p/q.
bool parse_decimal(std::string s, long long& num, long long& den) {
    static const std::regex kThousands(R"(\d{1,3}(,\d{3})+(\.\d+)?)");
    if (std::regex_match(s, kThousands)) s.erase(std::remove(s.begin(), s.end(), ','), s.end());
    const auto dot = s.find('.');
    std::string whole = s.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
    if (whole.empty() && frac.empty()) return false;
    if (dot != std::string::npos && frac.empty()) return false;
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    if (whole.empty()) whole = "0";
    long long w = 0, f = 0;
    if (!parse_int(whole, w)) return false;
    if (!frac.empty() && !parse_int(frac, f)) return false;
    if (whole.size() + frac.size() > 18) return false;
    den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    num = w * den + f;
    return true;
}

std::optional<std::string> canonical_number(std::string s) {
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
    bool negative = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        negative = s[0] == '-';
        s.erase(0, 1);
    }
    long long num = 0, den = 1;
    static const std::regex kFrac(R"(\\d?frac\{([^{}]+)\}\{([^{}]+)\})");
    std::smatch m;
    std::string top = s, bottom;
    if (std::regex_match(s, m, kFrac)) {
        top = m[1].str();
        bottom = m[2].str();
    } else if (const auto slash = s.find('/'); slash != std::string::npos) {
        top = s.substr(0, slash);
        bottom = s.substr(slash + 1);
    }
    if (!parse_decimal(top, num, den)) return std::nullopt;
    if (!bottom.empty()) {
        long long bn = 0, bd = 1;
        if (!parse_decimal(bottom, bn, bd) || bn == 0) return std::nullopt;
        // (num/den) / (bn/bd); operands are below 1e18 so reduce first.
        const long long g1 = std::gcd(num, bn), g2 = std::gcd(bd, den);
        const __int128 n128 = static_cast<__int128>(num / g1) * (bd / g2);
        const __int128 d128 = static_cast<__int128>(den / g2) * (bn / g1);
        const __int128 limit = static_cast<__int128>(1) << 62;
        if (n128 >= limit || d128 >= limit) return std::nullopt;
        num = static_cast<long long>(n128);
        den = static_cast<long long>(d128);
    }
    const long long g = std::gcd(num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    std::string out = (negative && num != 0 ? "-" : "") + std::to_string(num);
    if (den != 1) out += "/" + std::to_string(den);
    return out;
}

}  // namespace

std::optional<std::string> extract_answer(const std::string& solution) {
    if (auto pos = rfind_icase(solution, "answer:")) {
        const std::size_t start = *pos + 7;
        const std::size_t eol = solution.find('\n', start);
        std::string rest = text::trim(solution.substr(start, eol == std::string::npos ? std::string::npos : eol - start));
        if (!rest.empty()) return rest;
    }
    if (const auto pos = solution.rfind("\\boxed{"); pos != std::string::npos) {
        if (auto inner = brace_group(solution, pos + 6)) {
            if (!text::trim(*inner).empty()) return text::trim(*inner);
        }
    }
    static const std::regex kToken(R"((-?)\b(\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?(/\d+)?\b|\(([A-Za-z])\))");
    std::optional<std::string> last;
    for (std::sregex_iterator it(solution.begin(), solution.end(), kToken), end; it != end; ++it) {
        last = it->str();
    }
    return last;
}

std::string normalize_answer(const std::string& answer) {
    std::string s = strip_trailing_punct(text::to_lower(text::trim(answer)));
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') s = text::trim(s.substr(1, s.size() - 2));
    for (const char* wrapper : {"\\boxed{", "\\text{", "\\mathrm{"}) {
        const std::string w = wrapper;
        if (s.rfind(w, 0) == 0) {
            if (auto inner = brace_group(s, w.size() - 1); inner && w.size() + inner->size() + 1 == s.size()) {
                s = text::trim(*inner);
            }
        }
    }
    if (const auto eq = s.rfind('='); eq != std::string::npos && eq + 1 < s.size()) s = text::trim(s.substr(eq + 1));
    s = strip_trailing_punct(s);
    if (s.size() == 3 && s.front() == '(' && s.back() == ')' && std::isalpha(static_cast<unsigned char>(s[1]))) {
        s = s.substr(1, 1);
    }
    if (auto n = canonical_number(s)) return *n;
    return s;
}

GradeResult grade_answer(const std::string& solution, const std::string& gold) {
    GradeResult r;
    const auto extracted = extract_answer(solution);
    if (!extracted) return r;
    r.extractable = true;
    r.extracted = *extracted;
    r.correct = normalize_answer(*extracted) == normalize_answer(gold);
    return r;
}

HitsReport hits_at_k(const std::vector<GradedProblem>& problems, const SolutionSampler& sampler, Gateway& gateway) {
    const auto K = static_cast<std::size_t>(sampler.config().K);
    if (K < 1) throw ConfigError("K must be >= 1");
    std::vector<CandidateGrade> grades(problems.size() * K);
    parallel_for(grades.size(), gateway.parallelism(), [&](std::size_t flat) {
        const auto& p = problems[flat / K];
        CandidateGrade& g = grades[flat];
        g.sample_index = static_cast<int>(flat % K);
        try {
            const Candidate c = sampler.sample(p.id, p.problem, g.sample_index, gateway);
            const GradeResult r = grade_answer(c.solution_text, p.answer);
            g.correct = r.correct;
            g.extractable = r.extractable;
            g.extracted = r.extracted;
        } catch (const BudgetExceeded&) {
            throw;
        } catch (const Error& e) {
            g.failed = true;
            g.error = e.what();
        }
    });

    HitsReport report;
    report.method = sampler.method();
    report.config = sampler.config();
    int hits = 0;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        ProblemHits row;
        row.id = problems[i].id;
        for (std::size_t s = 0; s < K; ++s) {
            CandidateGrade& g = grades[i * K + s];
            if (g.failed) {
                ++report.failed_candidates;
                log::warn("problem " + row.id + " sample " + std::to_string(g.sample_index) + " failed: " + g.error);
            } else if (!g.extractable) {
                ++report.unextractable_candidates;
            }
            row.num_correct += g.correct ? 1 : 0;
            row.candidates.push_back(std::move(g));
        }
        row.hit = row.num_correct > 0;
        hits += row.hit ? 1 : 0;
        report.problems.push_back(std::move(row));
    }
    report.accuracy = problems.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(problems.size());
    return report;
}

json to_json(const HitsReport& report) {
    json rows = json::array();
    for (const auto& p : report.problems) {
        json cands = json::array();
        for (const auto& c : p.candidates) {
            json jc = {{"sample_index", c.sample_index},
                       {"correct", c.correct},
                       {"extractable", c.extractable},
                       {"extracted", c.extracted}};
            if (c.failed) {
                jc["failed"] = true;
                jc["error"] = c.error;
            }
            cands.push_back(std::move(jc));
        }
        rows.push_back({{"id", p.id}, {"hit", p.hit}, {"num_correct", p.num_correct}, {"candidates", cands}});
    }
    return {{"format", "hits-report/1"},
            {"method", to_string(report.method)},
            {"config", to_json(report.config)},
            {"K", report.config.K},
            {"num_problems", report.problems.size()},
            {"accuracy", report.accuracy},
            {"failed_candidates", report.failed_candidates},
            {"unextractable_candidates", report.unextractable_candidates},
            {"problems", rows}};
}

std::string hits_csv(const HitsReport& report) {
    std::string out = "id,hit,num_correct,K,failed,unextractable\n";
    for (const auto& p : report.problems) {
        int failed = 0, unextractable = 0;
        for (const auto& c : p.candidates) {
            failed += c.failed ? 1 : 0;
            unextractable += (!c.failed && !c.extractable) ? 1 : 0;
        }
        out += csv_field(p.id) + "," + (p.hit ? "1" : "0") + "," + std::to_string(p.num_correct) + "," +
               std::to_string(p.candidates.size()) + "," + std::to_string(failed) + "," +
               std::to_string(unextractable) + "\n";
    }
    return out;
}

}  // namespace flsa
