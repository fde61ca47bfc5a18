#include "flsa/flsa.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>

#include "flsa/error.hpp"
#include "flsa/log.hpp"
#include "flsa/parallel.hpp"
#include "flsa/prompts.hpp"
#include "flsa/random.hpp"
#include "flsa/text.hpp"

namespace flsa {

using nlohmann::json;

void FlsaConfig::validate() const {
    if (num_tags < 2) throw ConfigError("num_tags must be ≥ 2");
    if (max_iters < 1) throw ConfigError("max_iters must be ≥ 1");
    if (m_step_sample < 1) throw ConfigError("m_step_sample must be ≥ 1");
    if (!(convergence_frac >= 0.0 && convergence_frac <= 1.0)) {
        throw ConfigError("convergence_frac must be in [0, 1]");
    }
    if (description_max_tokens < 1) throw ConfigError("description_max_tokens must be ≥ 1");
    if (assign_max_tokens < 1) throw ConfigError("assign_max_tokens must be ≥ 1");
}

json to_json(const FlsaConfig& c) {
    json j;
    j["num_tags"] = c.num_tags;
    j["max_iters"] = c.max_iters;
    j["window"] = c.window.is_unlimited() ? json("unlimited") : json(c.window.size());
    j["m_step_sample"] = c.m_step_sample;
    j["convergence_frac"] = c.convergence_frac;
    j["seed"] = c.seed;
    j["description_max_tokens"] = c.description_max_tokens;
    j["assign_max_tokens"] = c.assign_max_tokens;
    return j;
}

FlsaConfig flsa_config_from_json(const json& j) {
    FlsaConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "num_tags") c.num_tags = v.get<int>();
        else if (key == "max_iters") c.max_iters = v.get<int>();
        else if (key == "window") c.window = v.is_string() ? Window::parse(v.get<std::string>()) : Window::of(v.get<int>());
        else if (key == "m_step_sample") c.m_step_sample = v.get<int>();
        else if (key == "convergence_frac") c.convergence_frac = v.get<double>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "description_max_tokens") c.description_max_tokens = v.get<int>();
        else if (key == "assign_max_tokens") c.assign_max_tokens = v.get<int>();
        else throw ConfigError("unknown flsa config key '" + key + "'");
    }
    return c;
}

const std::string& TagModel::description(int tag) const {
    if (tag < 1 || tag > static_cast<int>(descriptions.size())) {
        throw IndexError("tag " + std::to_string(tag) + " has no description");
    }
    return descriptions[static_cast<std::size_t>(tag - 1)];
}

int TagModel::assignment(const std::string& doc_id, int index) const {
    auto it = assignments.find({doc_id, index});
    if (it == assignments.end()) throw IndexError("segment " + doc_id + "#" + std::to_string(index) + " is untagged");
    return it->second;
}

std::vector<Segment> TagModel::members(int tag, const Corpus& corpus) const {
    std::vector<Segment> out;
    for (const auto& d : corpus.documents()) {
        for (const auto& s : d.segments) {
            if (assignment(d.id, s.index) == tag) out.push_back(s);
        }
    }
    return out;
}

std::vector<std::vector<int>> TagModel::sequences(const Corpus& corpus) const {
    std::vector<std::vector<int>> out;
    for (const auto& d : corpus.documents()) {
        std::vector<int> seq;
        for (const auto& s : d.segments) seq.push_back(assignment(d.id, s.index));
        out.push_back(std::move(seq));
    }
    return out;
}

json to_json(const TagModel& m) {
    json j;
    j["format"] = "flsa-tag-model/1";
    j["num_tags"] = m.num_tags;
    j["iteration"] = m.iteration;
    j["prompt_version"] = m.prompt_version;
    j["config"] = to_json(m.config);
    j["descriptions"] = m.descriptions;
    j["assignments"] = json::array();
    for (const auto& [key, tag] : m.assignments) {
        j["assignments"].push_back({{"doc", key.first}, {"index", key.second}, {"tag", tag}});
    }
    j["change_history"] = m.change_history;
    return j;
}

TagModel tag_model_from_json(const json& j) {
    try {
        TagModel m;
        m.num_tags = j.at("num_tags").get<int>();
        m.iteration = j.at("iteration").get<int>();
        m.prompt_version = j.value("prompt_version", "");
        m.config = flsa_config_from_json(j.at("config"));
        m.descriptions = j.at("descriptions").get<std::vector<std::string>>();
        for (const auto& a : j.at("assignments")) {
            const int tag = a.at("tag").get<int>();
            if (tag < 1 || tag > m.num_tags) throw ParseError("assignment tag out of range");
            m.assignments[{a.at("doc").get<std::string>(), a.at("index").get<int>()}] = tag;
        }
        m.change_history = j.at("change_history").get<std::vector<double>>();
        if (!m.descriptions.empty() && static_cast<int>(m.descriptions.size()) != m.num_tags) {
            throw ParseError("descriptions do not cover every tag");
        }
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid tag model JSON: ") + e.what());
    }
}

void save_tag_model(const TagModel& model, const std::filesystem::path& path) {
    // Write-then-rename so an interrupted run never leaves a torn file.
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << to_json(model).dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

TagModel load_tag_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open tag model " + path.string());
    try {
        return tag_model_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string serialize_tagged(const TaggedCorpus& tagged) {
    std::string out;
    for (const auto& d : tagged.documents) {
        out += json{{"id", d.doc_id}, {"tags", d.tags}}.dump();
        out.push_back('\n');
    }
    return out;
}

std::vector<TaggedDocument> parse_tagged(const std::string& jsonl) {
    std::vector<TaggedDocument> out;
    std::istringstream in(jsonl);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            json j = json::parse(line);
            out.push_back({j.at("id").get<std::string>(), j.at("tags").get<std::vector<int>>()});
        } catch (const json::exception& e) {
            throw ParseError("tagged corpus line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::optional<int> parse_tag_choice(const std::string& reply, int num_tags) {
    auto in_range = [num_tags](long long v) { return v >= 1 && v <= num_tags; };
    static const std::regex tag_form(R"(\btag\s*[:#]?\s*(\d{1,9}))", std::regex::icase);
    std::smatch m;
    if (std::regex_search(reply, m, tag_form)) {
        const long long v = std::stoll(m[1].str());
        if (in_range(v)) return static_cast<int>(v);
    }
    static const std::regex bare(R"(^\s*(\d{1,9})\s*[.]?\s*$)");
    if (std::regex_match(reply, m, bare)) {
        const long long v = std::stoll(m[1].str());
        if (in_range(v)) return static_cast<int>(v);
        return std::nullopt;
    }
    static const std::regex any_int(R"(\d{1,9})");
    for (auto it = std::sregex_iterator(reply.begin(), reply.end(), any_int); it != std::sregex_iterator(); ++it) {
        const long long v = std::stoll(it->str());
        if (in_range(v)) return static_cast<int>(v);
    }
    return std::nullopt;
}

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;      // "init"
constexpr std::uint64_t kSampleStream = 0x73616d70;    // "samp"

std::string render_context(const std::vector<Segment>& context) {
    if (context.empty()) return "(none)";
    std::string out;
    for (const auto& s : context) {
        if (!out.empty()) out.push_back('\n');
        out += "[" + std::to_string(s.index) + "] " + text::single_line(s.text);
    }
    return out;
}

}  // namespace

TagModel flsa_init(const Corpus& corpus, const FlsaConfig& config) {
    config.validate();
    if (corpus.empty()) throw ConfigError("cannot fit tags on an empty corpus");
    TagModel m;
    m.num_tags = config.num_tags;
    m.config = config;
    m.prompt_version = PromptSet::active().version();
    auto rng = seeded_rng({config.seed, kInitStream});
    const auto n = static_cast<std::size_t>(config.num_tags);
    for (const auto& d : corpus.documents()) {
        for (const auto& s : d.segments) m.assignments[{d.id, s.index}] = static_cast<int>(uniform_index(rng, n)) + 1;
    }
    return m;
}

ChatRequest build_assign_request(const TagModel& model, const Segment& segment, const std::vector<Segment>& context) {
    if (!model.has_descriptions()) throw ConfigError("tag assignment needs tag descriptions (run an M-step first)");
    std::string tag_list;
    for (int t = 1; t <= model.num_tags; ++t) {
        if (t > 1) tag_list.push_back('\n');
        tag_list += "Tag " + std::to_string(t) + ": " + text::single_line(model.description(t));
    }
    const auto& tmpl = PromptSet::active().get("assign");
    ChatRequest r;
    r.system = tmpl.system;
    r.user = render_template(tmpl.user, {{"tag_list", tag_list},
                                         {"context", render_context(context)},
                                         {"segment", segment.text},
                                         {"num_tags", std::to_string(model.num_tags)}});
    r.temperature = kChoiceTemperature;
    r.max_tokens = model.config.assign_max_tokens;
    return r;
}

ChatRequest build_describe_request(int tag, const std::vector<Segment>& sampled, int max_tokens) {
    if (sampled.empty()) throw ConfigError("describing a tag needs at least one segment");
    std::string listing;
    for (std::size_t i = 0; i < sampled.size(); ++i) {
        if (i > 0) listing.push_back('\n');
        listing += "Segment " + std::to_string(i + 1) + ": " + text::single_line(sampled[i].text);
    }
    const auto& tmpl = PromptSet::active().get("describe");
    ChatRequest r;
    r.system = tmpl.system;
    r.user = render_template(tmpl.user, {{"tag", std::to_string(tag)}, {"segments", listing}});
    r.temperature = kSamplingTemperature;
    r.max_tokens = max_tokens;
    return r;
}

int e_step_assign(const TagModel& model, const Segment& segment, const std::vector<Segment>& context,
                  Gateway& gateway) {
    ChatRequest request = build_assign_request(model, segment, context);
    std::string reply;
    try {
        reply = gateway.complete(request).text;
        if (auto tag = parse_tag_choice(reply, model.num_tags)) return *tag;
    } catch (const ResponseError&) {
        // empty completion; fall through to the stricter retry
    }

    request.user += render_template(PromptSet::active().get("assign_retry").user,
                                    {{"num_tags", std::to_string(model.num_tags)}});
    reply = gateway.complete(request).text;
    if (auto tag = parse_tag_choice(reply, model.num_tags)) return *tag;
    throw ResponseError("no tag in 1.." + std::to_string(model.num_tags) + " found in reply for segment " +
                            segment.doc_id + "#" + std::to_string(segment.index) + ": \"" +
                            text::truncate(text::single_line(reply), 120) + "\"",
                        reply);
}

std::string m_step_describe(int tag, const std::vector<Segment>& sampled, Gateway& gateway, int max_tokens) {
    const ChatRequest request = build_describe_request(tag, sampled, max_tokens);
    for (int attempt = 1;; ++attempt) {
        try {
            std::string desc = text::single_line(gateway.complete(request).text);
            if (!desc.empty()) return desc;
        } catch (const ResponseError&) {
            if (attempt >= 2) throw;
            continue;
        }
        if (attempt >= 2) throw ResponseError("empty description for tag " + std::to_string(tag), "");
    }
}

std::vector<Segment> sample_members(const TagModel& model, const Corpus& corpus, int tag, int iteration) {
    std::vector<Segment> members = model.members(tag, corpus);
    const auto want = static_cast<std::size_t>(model.config.m_step_sample);
    if (members.size() <= want) return members;
    auto rng = seeded_rng({model.config.seed, kSampleStream, static_cast<std::uint64_t>(iteration),
                           static_cast<std::uint64_t>(tag)});
    // Partial Fisher-Yates over indices, then back to corpus order.
    std::vector<std::size_t> idx(members.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < want; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
    idx.resize(want);
    std::sort(idx.begin(), idx.end());
    std::vector<Segment> picked;
    picked.reserve(want);
    for (auto i : idx) picked.push_back(members[i]);
    return picked;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int iteration) {
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint-iter-%03d.json", iteration);
    return dir / name;
}

namespace {

struct SegmentRef {
    const Document* doc;
    const Segment* seg;
};

std::vector<SegmentRef> all_segments(const Corpus& corpus) {
    std::vector<SegmentRef> refs;
    for (const auto& d : corpus.documents()) {
        for (const auto& s : d.segments) refs.push_back({&d, &s});
    }
    return refs;
}

std::string where(const SegmentRef& r) { return r.doc->id + "#" + std::to_string(r.seg->index); }

}  // namespace

TagModel flsa_fit(const Corpus& corpus, const FlsaConfig& config, Gateway& gateway) {
    TagModel model = flsa_init(corpus, config);
    const auto refs = all_segments(corpus);
    if (config.checkpoint_dir) std::filesystem::create_directories(*config.checkpoint_dir);

    for (int iter = 1; iter <= config.max_iters; ++iter) {
        // E-step
        double changed_frac = 1.0;
        if (iter > 1) {
            std::vector<int> chosen(refs.size(), 0);
            parallel_for(refs.size(), gateway.parallelism(), [&](std::size_t i) {
                const auto& r = refs[i];
                try {
                    chosen[i] = e_step_assign(model, *r.seg, context_window(*r.doc, r.seg->index, config.window),
                                              gateway);
                } catch (const Error& e) {
                    throw FitError("iteration " + std::to_string(iter) + ", segment " + where(r) + ": " + e.what(),
                                   iter, SegmentKey{r.doc->id, r.seg->index});
                }
            });
            std::size_t changed = 0;
            for (std::size_t i = 0; i < refs.size(); ++i) {
                int& slot = model.assignments.at({refs[i].doc->id, refs[i].seg->index});
                if (slot != chosen[i]) ++changed;
                slot = chosen[i];
            }
            changed_frac = static_cast<double>(changed) / static_cast<double>(refs.size());
        }

        // M-step
        std::vector<std::string> descriptions(static_cast<std::size_t>(config.num_tags));
        parallel_for(descriptions.size(), gateway.parallelism(), [&](std::size_t i) {
            const int tag = static_cast<int>(i) + 1;
            auto sampled = sample_members(model, corpus, tag, iter);
            if (sampled.empty()) {
                descriptions[i] = kUnusedDescription;
                return;
            }
            try {
                descriptions[i] = m_step_describe(tag, sampled, gateway, config.description_max_tokens);
            } catch (const Error& e) {
                throw FitError("iteration " + std::to_string(iter) + ", describing tag " + std::to_string(tag) +
                                   ": " + e.what(),
                               iter, std::nullopt);
            }
        });
        model.descriptions = std::move(descriptions);
        model.iteration = iter;
        model.change_history.push_back(changed_frac);
        if (config.checkpoint_dir) save_tag_model(model, checkpoint_path(*config.checkpoint_dir, iter));
        log::info("iteration " + std::to_string(iter) + ": changed fraction " + std::to_string(changed_frac));

        if (iter > 1 && changed_frac < config.convergence_frac) break;
    }
    return model;
}

TaggedCorpus tag_corpus(const TagModel& model, const Corpus& corpus, Gateway& gateway) {
    const auto refs = all_segments(corpus);
    std::vector<int> chosen(refs.size(), 0);
    parallel_for(refs.size(), gateway.parallelism(), [&](std::size_t i) {
        const auto& r = refs[i];
        try {
            chosen[i] = e_step_assign(model, *r.seg, context_window(*r.doc, r.seg->index, model.config.window),
                                      gateway);
        } catch (const ResponseError& e) {
            throw ResponseError("segment " + where(r) + ": " + e.what(), e.raw_response());
        }
    });
    TaggedCorpus out;
    out.corpus = &corpus;
    std::size_t i = 0;
    for (const auto& d : corpus.documents()) {
        TaggedDocument td{d.id, {}};
        for (std::size_t k = 0; k < d.segments.size(); ++k) td.tags.push_back(chosen[i++]);
        out.documents.push_back(std::move(td));
    }
    return out;
}

}  // namespace flsa
