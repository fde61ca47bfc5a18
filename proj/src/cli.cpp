#include "flsa/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "flsa/config.hpp"
#include "flsa/corpus.hpp"
#include "flsa/dynamics.hpp"
#include "flsa/error.hpp"
#include "flsa/eval.hpp"
#include "flsa/flsa.hpp"
#include "flsa/gateway.hpp"
#include "flsa/hiersample.hpp"
#include "flsa/log.hpp"
#include "flsa/plsa.hpp"
#include "flsa/prompts.hpp"
#include "flsa/text.hpp"

namespace flsa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::string config_path;
    std::string backend;
    std::string endpoint;
    std::string llm_model;
    std::string cache;
    bool no_cache = false;
    std::uint64_t seed = 0;
    std::uint64_t budget = 0;
    int parallel = 1;
    double rps = 0.0;
    std::string preset;
    std::string prompts_dir;
    bool dry_run = false;
    bool verbose = false;
    bool quiet = false;
};

struct Options {
    // shared file arguments
    std::string corpus, model, out, csv, tagged, problems, dynamics, tag_model, input;
    // ingest
    std::string segmentation = "pre";
    int min_chars = 1;
    // fit-plsa
    int topics = 10;
    std::string unit = "document";
    int plsa_max_iters = 200;
    double tol = 1e-6;
    // fit-flsa
    int tags = 0;
    int max_iters = 0;
    std::string window;
    int m_sample = 0;
    std::string checkpoint_dir;
    // dynamics
    double smoothing = -1.0;
    int top_k = 3;
    double threshold = 0.0;
    // sample / eval
    std::string method;
    int k = 0;
    int max_outline_len = 0;
    std::size_t cases = 1000;
    int S = 0, T = 0, C = 0;
    double alpha = 0.0;
};

// Everything resolved from config file plus flags.
struct Context {
    RunConfig rc;
    Globals g;
    bool no_cache = false;
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
}

// Writes to the path atomically, or to stdout when the path is empty.
void emit(Context& ctx, const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        *ctx.out << content;
        ctx.out->flush();
        return;
    }
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + tmp.string());
        f << content;
        if (!f.flush()) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

std::unique_ptr<Gateway> make_gateway(const Context& ctx) {
    const RunConfig& rc = ctx.rc;
    if (rc.backend.empty()) {
        throw ConfigError("no backend configured (use --backend scripted:<rules.jsonl> or --backend http)");
    }
    std::unique_ptr<Backend> backend;
    if (rc.backend == "http") {
        if (rc.endpoint.empty()) throw ConfigError("--endpoint is required for the http backend");
        if (rc.model.empty()) throw ConfigError("--model is required for the http backend");
        HttpBackendOptions o;
        o.endpoint = rc.endpoint;
        o.model = rc.model;
        if (const char* key = std::getenv("FLSA_API_KEY")) o.api_key = key;
        backend = std::make_unique<HttpBackend>(o);
    } else {
        backend = std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(rc.backend.substr(9)));
    }
    GatewayOptions go;
    go.use_cache = !ctx.no_cache;
    go.cache_path = rc.cache;
    go.budget = rc.budget;
    go.parallelism = rc.parallel;
    go.rate_limiter = std::make_shared<RateLimiter>(rc.requests_per_second);
    return std::make_unique<Gateway>(std::move(backend), go);
}

void report_calls(Context& ctx, const Gateway& gw) {
    *ctx.err << "gateway: " << gw.backend_calls() << " backend calls, " << gw.cache_hits() << " cache hits\n";
}

void print_requests(Context& ctx, const std::vector<ChatRequest>& requests) {
    std::ostream& out = *ctx.out;
    for (std::size_t i = 0; i < requests.size(); ++i) {
        const auto& r = requests[i];
        char head[160];
        std::snprintf(head, sizeof(head), "=== prompt %zu of %zu (temperature %g, top_p %g, max_tokens %d", i + 1,
                      requests.size(), r.temperature, r.top_p, r.max_tokens);
        out << head;
        if (r.seed_hint) out << ", seed_hint " << *r.seed_hint;
        out << ") ===\n[system]\n" << r.system << "\n[user]\n" << r.user << "\n\n";
    }
    *ctx.err << "dry run: " << requests.size() << " prompts rendered, 0 gateway calls\n";
}

std::map<int, std::string> descriptions_of(const TagModel& m) {
    std::map<int, std::string> d;
    if (!m.has_descriptions()) return d;
    for (int t = 1; t <= m.num_tags; ++t) d[t] = m.description(t);
    return d;
}

std::map<int, std::string> descriptions_from_json(const json& j) {
    std::map<int, std::string> d;
    if (!j.contains("descriptions")) return d;
    for (const auto& [k, v] : j.at("descriptions").items()) d[std::stoi(k)] = v.get<std::string>();
    return d;
}

SegmentationMode parse_segmentation(const std::string& s) {
    if (s == "pre") return SegmentationMode::PreSegmented;
    if (s == "blank") return SegmentationMode::BlankLine;
    if (s == "numbered") return SegmentationMode::NumberedStep;
    return parse_segmentation_mode(s);
}

// ---------------------------------------------------------------------------

int cmd_ingest(Context& ctx, const Options& o) {
    require(o.input, "--input");
    SegmentationStrategy strategy{parse_segmentation(o.segmentation), o.min_chars};
    if (strategy.min_chars < 1) throw ConfigError("--min-chars must be >= 1");
    const Corpus corpus = load_corpus(o.input, strategy);
    emit(ctx, o.out, serialize_corpus(corpus));
    *ctx.err << "ingested " << corpus.size() << " documents, " << corpus.segment_count() << " segments\n";
    return kExitOk;
}

int cmd_fit_plsa(Context& ctx, const Options& o) {
    require(o.corpus, "--corpus");
    plsa::FitOptions fo;
    fo.num_topics = o.topics;
    fo.max_iters = o.plsa_max_iters;
    fo.tol = o.tol;
    fo.seed = ctx.rc.seed;
    if (fo.num_topics < 1) throw ConfigError("--topics must be >= 1");
    if (fo.max_iters < 1) throw ConfigError("--max-iters must be >= 1");
    plsa::BowUnit unit;
    if (o.unit == "document") unit = plsa::BowUnit::Document;
    else if (o.unit == "segment") unit = plsa::BowUnit::Segment;
    else throw ConfigError("--unit must be document or segment");
    const Corpus corpus = load_corpus(o.corpus);
    const auto bow = plsa::build_bow(corpus, unit);
    const auto fit = plsa::plsa_fit(bow, fo);
    emit(ctx, o.out, plsa::to_json(fit, bow, fo.seed).dump(2) + "\n");
    *ctx.err << "plsa: " << fit.iterations << " iterations, log-likelihood " << fit.trace.back()
             << (fit.converged ? " (converged)" : " (max iterations reached)") << "\n";
    return kExitOk;
}

int cmd_fit_flsa(Context& ctx, const Options& o) {
    require(o.corpus, "--corpus");
    FlsaConfig cfg = ctx.rc.flsa;
    if (!o.checkpoint_dir.empty()) cfg.checkpoint_dir = o.checkpoint_dir;
    else if (!o.out.empty() && o.out != "-") cfg.checkpoint_dir = o.out + ".checkpoints";
    const Corpus corpus = load_corpus(o.corpus);

    if (ctx.g.dry_run) {
        // Iteration 1 starts from random assignments, so its describe
        // prompts are the first ones the model sees.
        const TagModel init = flsa_init(corpus, cfg);
        std::vector<ChatRequest> requests;
        for (int t = 1; t <= cfg.num_tags; ++t) {
            const auto sampled = sample_members(init, corpus, t, 1);
            if (!sampled.empty()) requests.push_back(build_describe_request(t, sampled, cfg.description_max_tokens));
        }
        print_requests(ctx, requests);
        return kExitOk;
    }
    auto gw = make_gateway(ctx);
    TagModel model;
    try {
        model = flsa_fit(corpus, cfg, *gw);
    } catch (const FitError& e) {
        report_calls(ctx, *gw);
        std::string msg = "error: iteration " + std::to_string(e.iteration());
        if (e.segment()) msg += ", segment " + e.segment()->first + "#" + std::to_string(e.segment()->second);
        msg += ": " + text::single_line(e.what());
        if (cfg.checkpoint_dir) msg += " (last completed iteration kept in " + cfg.checkpoint_dir->string() + ")";
        *ctx.err << msg << "\n";
        return kExitRuntime;
    }
    report_calls(ctx, *gw);
    emit(ctx, o.out, to_json(model).dump(2) + "\n");
    *ctx.err << "fit-flsa: " << model.iteration << " iterations, final change "
             << (model.change_history.empty() ? 0.0 : model.change_history.back()) << "\n";
    return kExitOk;
}

int cmd_tag(Context& ctx, const Options& o) {
    require(o.model, "--model");
    require(o.corpus, "--corpus");
    const TagModel model = load_tag_model(o.model);
    const Corpus corpus = load_corpus(o.corpus);
    if (ctx.g.dry_run) {
        std::vector<ChatRequest> requests;
        for (const auto& d : corpus.documents()) {
            for (const auto& s : d.segments) {
                requests.push_back(build_assign_request(model, s, context_window(d, s.index, model.config.window)));
            }
        }
        print_requests(ctx, requests);
        return kExitOk;
    }
    auto gw = make_gateway(ctx);
    const TaggedCorpus tagged = tag_corpus(model, corpus, *gw);
    report_calls(ctx, *gw);
    emit(ctx, o.out, serialize_tagged(tagged));
    return kExitOk;
}

int cmd_dynamics_fit(Context& ctx, const Options& o) {
    require(o.model, "--model");
    const TagModel model = load_tag_model(o.model);
    std::vector<std::vector<int>> sequences;
    if (!o.tagged.empty()) {
        for (auto& d : parse_tagged(read_file(o.tagged))) sequences.push_back(std::move(d.tags));
    } else {
        require(o.corpus, "--corpus or --tagged");
        sequences = model.sequences(load_corpus(o.corpus));
    }
    const BigramModel bigram = fit_bigram(sequences, model.num_tags, ctx.rc.bigram_smoothing);
    json j = to_json(bigram);
    json desc = json::object();
    for (const auto& [t, text] : descriptions_of(model)) desc[std::to_string(t)] = text;
    j["descriptions"] = desc;
    emit(ctx, o.out, j.dump(2) + "\n");
    return kExitOk;
}

int cmd_dynamics_dot(Context& ctx, const Options& o) {
    require(o.model, "--model");
    if (o.top_k < 1) throw ConfigError("--top-k must be >= 1");
    if (!(o.threshold >= 0.0 && o.threshold <= 1.0)) throw ConfigError("--threshold must be in [0, 1]");
    const json j = read_json(o.model);
    const BigramModel bigram = bigram_from_json(j);
    DotOptions dot;
    dot.top_k = o.top_k;
    dot.edge_threshold = o.threshold;
    emit(ctx, o.out, export_dot(bigram, descriptions_from_json(j), dot));
    return kExitOk;
}

SolutionSampler make_sampler(const Context& ctx, const Options& o, SampleMethod method) {
    if (method != SampleMethod::Hier) {
        return method == SampleMethod::Direct ? SolutionSampler::direct(ctx.rc.sample)
                                              : SolutionSampler::gen_outline(ctx.rc.sample);
    }
    require(o.dynamics, "--dynamics");
    const json j = read_json(o.dynamics);
    BigramModel bigram = bigram_from_json(j);
    auto descriptions = descriptions_from_json(j);
    if (!o.tag_model.empty()) descriptions = descriptions_of(load_tag_model(o.tag_model));
    return SolutionSampler::hier(ctx.rc.sample, std::move(bigram), std::move(descriptions));
}

int cmd_sample(Context& ctx, const Options& o) {
    require(o.problems, "--problems");
    const auto sampler = make_sampler(ctx, o, parse_sample_method(o.method));
    const auto problems = load_problems(o.problems, false);
    if (ctx.g.dry_run) {
        std::vector<ChatRequest> requests;
        for (const auto& p : problems) {
            for (int i = 0; i < sampler.config().K; ++i) requests.push_back(sampler.first_request(p.id, p.problem, i));
        }
        print_requests(ctx, requests);
        return kExitOk;
    }
    auto gw = make_gateway(ctx);
    std::string lines;
    for (const auto& p : problems) {
        for (const auto& c : sample_candidates(sampler, p.id, p.problem, *gw)) lines += to_json(c).dump() + "\n";
    }
    report_calls(ctx, *gw);
    emit(ctx, o.out, lines);
    return kExitOk;
}

int cmd_eval_hitsk(Context& ctx, const Options& o) {
    require(o.problems, "--problems");
    require(o.method, "--method");
    const auto sampler = make_sampler(ctx, o, parse_sample_method(o.method));
    const auto problems = load_problems(o.problems, true);
    if (ctx.g.dry_run) {
        std::vector<ChatRequest> requests;
        for (const auto& p : problems) {
            for (int i = 0; i < sampler.config().K; ++i) requests.push_back(sampler.first_request(p.id, p.problem, i));
        }
        print_requests(ctx, requests);
        return kExitOk;
    }
    auto gw = make_gateway(ctx);
    const HitsReport report = hits_at_k(problems, sampler, *gw);
    report_calls(ctx, *gw);
    emit(ctx, o.out, to_json(report).dump(2) + "\n");
    if (!o.csv.empty()) emit(ctx, o.csv, hits_csv(report));
    *ctx.err << "hits@" << report.config.K << ": " << report.accuracy << " over " << report.problems.size()
             << " problems (" << report.failed_candidates << " failed candidates)\n";
    return kExitOk;
}

int cmd_eval_recon(Context& ctx, const Options& o) {
    require(o.model, "--model");
    require(o.corpus, "--corpus");
    if (o.cases < 1) throw ConfigError("--cases must be >= 1");
    const TagModel model = load_tag_model(o.model);
    const Corpus corpus = load_corpus(o.corpus);
    const auto cases = draw_test_cases(corpus, o.cases, ctx.rc.eval.seed);
    if (ctx.g.dry_run) {
        std::vector<ChatRequest> requests;
        for (const auto& tc : cases) {
            for (auto& r : reconstruction_first_requests(tc, corpus, model, ctx.rc.eval)) requests.push_back(std::move(r));
        }
        print_requests(ctx, requests);
        return kExitOk;
    }
    auto gw = make_gateway(ctx);
    const ReconReport report = eval_reconstruction(cases, corpus, model, *gw, ctx.rc.eval);
    report_calls(ctx, *gw);
    emit(ctx, o.out, to_json(report).dump(2) + "\n");
    if (!o.csv.empty()) emit(ctx, o.csv, recon_csv(report));
    *ctx.err << "recon: with tag " << report.mean_with_tag << ", no tag " << report.mean_no_tag << " over "
             << report.cases.size() << " cases (" << report.excluded.size() << " excluded)\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Latent tag induction with language models", "flsa"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    Options o;

    auto* opt_config = app.add_option("--config", g.config_path, "JSON run configuration");
    auto* opt_backend = app.add_option("--backend", g.backend, "http or scripted:<rules.jsonl>");
    auto* opt_endpoint = app.add_option("--endpoint", g.endpoint, "chat-completions URL (http backend)");
    auto* opt_llm = app.add_option("--model", g.llm_model, "model name (http backend)");
    auto* opt_cache = app.add_option("--cache", g.cache, "response cache file (JSONL)");
    app.add_flag("--no-cache", g.no_cache, "do not read or write the response cache");
    auto* opt_seed = app.add_option("--seed", g.seed, "seed for every random choice");
    auto* opt_budget = app.add_option("--budget", g.budget, "maximum backend calls (0 = unlimited)");
    auto* opt_parallel = app.add_option("--parallel", g.parallel, "concurrent gateway calls");
    auto* opt_rps = app.add_option("--rps", g.rps, "requests per second limit (0 = unlimited)");
    auto* opt_preset = app.add_option("--preset", g.preset, "story, solution, math or bbh");
    auto* opt_prompts = app.add_option("--prompts-dir", g.prompts_dir, "prompt template directory");
    app.add_flag("--dry-run", g.dry_run, "print the prompts that would be sent and exit");
    app.add_flag("-v,--verbose", g.verbose, "debug logging");
    app.add_flag("-q,--quiet", g.quiet, "warnings and errors only");

    auto sub = [&](CLI::App* parent, const char* name, const char* desc) {
        auto* s = parent->add_subcommand(name, desc);
        s->fallthrough();
        return s;
    };

    auto* ingest = sub(&app, "ingest", "normalize and segment a raw corpus");
    ingest->add_option("--input", o.input, "input JSONL");
    ingest->add_option("--out", o.out, "output corpus JSONL (default stdout)");
    ingest->add_option("--segmentation", o.segmentation, "pre, blank or numbered");
    ingest->add_option("--min-chars", o.min_chars, "merge shorter fragments into their neighbour");

    auto* fit_plsa = sub(&app, "fit-plsa", "fit the PLSA baseline");
    fit_plsa->add_option("--corpus", o.corpus, "corpus JSONL");
    fit_plsa->add_option("--topics", o.topics, "number of topics");
    fit_plsa->add_option("--unit", o.unit, "document or segment");
    fit_plsa->add_option("--max-iters", o.plsa_max_iters, "EM iteration cap");
    fit_plsa->add_option("--tol", o.tol, "stop when the likelihood gain is below this");
    fit_plsa->add_option("--out", o.out, "model JSON (default stdout)");

    auto* fit_flsa = sub(&app, "fit-flsa", "induce latent tags");
    fit_flsa->add_option("--corpus", o.corpus, "corpus JSONL");
    auto* opt_tags = fit_flsa->add_option("--tags", o.tags, "number of tags");
    auto* opt_iters = fit_flsa->add_option("--max-iters", o.max_iters, "EM iteration cap");
    auto* opt_window = fit_flsa->add_option("--window", o.window, "context window: even integer or unlimited");
    auto* opt_msample = fit_flsa->add_option("--m-sample", o.m_sample, "segments shown per description");
    fit_flsa->add_option("--checkpoint-dir", o.checkpoint_dir, "per-iteration checkpoints (default <out>.checkpoints)");
    fit_flsa->add_option("--out", o.out, "tag model JSON (default stdout)");

    auto* tag = sub(&app, "tag", "assign tags to a corpus with a fitted model");
    tag->add_option("--model", o.model, "tag model JSON");
    tag->add_option("--corpus", o.corpus, "corpus JSONL");
    tag->add_option("--out", o.out, "tagged JSONL (default stdout)");

    auto* dynamics = sub(&app, "dynamics", "tag transition model");
    dynamics->require_subcommand(1);
    auto* dyn_fit = sub(dynamics, "fit", "fit the bigram model over tag sequences");
    dyn_fit->add_option("--model", o.model, "tag model JSON");
    dyn_fit->add_option("--corpus", o.corpus, "corpus the model was fitted on");
    dyn_fit->add_option("--tagged", o.tagged, "tagged JSONL (instead of --corpus)");
    auto* opt_smoothing = dyn_fit->add_option("--smoothing", o.smoothing, "additive smoothing λ");
    dyn_fit->add_option("--out", o.out, "bigram model JSON (default stdout)");
    auto* dyn_dot = sub(dynamics, "dot", "export the transition graph as Graphviz DOT");
    dyn_dot->add_option("--model", o.model, "bigram model JSON");
    dyn_dot->add_option("--top-k", o.top_k, "successors kept per tag");
    dyn_dot->add_option("--threshold", o.threshold, "minimum edge probability");
    dyn_dot->add_option("--out", o.out, "DOT file (default stdout)");

    auto* sample = sub(&app, "sample", "sample candidate solutions");
    sample->add_option("method", o.method, "direct, outline or hier")->required();
    sample->add_option("--problems", o.problems, "problems JSONL");
    auto* opt_k = sample->add_option("--k", o.k, "candidates per problem");
    auto* opt_outline_len = sample->add_option("--max-outline-len", o.max_outline_len, "tag outline cap (hier)");
    sample->add_option("--dynamics", o.dynamics, "bigram model JSON (hier)");
    sample->add_option("--tag-model", o.tag_model, "tag model for descriptions (hier)");
    sample->add_option("--out", o.out, "candidates JSONL (default stdout)");

    auto* eval = sub(&app, "eval", "evaluation");
    eval->require_subcommand(1);
    auto* recon = sub(eval, "recon", "reconstruction log-likelihood with and without tags");
    recon->add_option("--model", o.model, "tag model JSON");
    recon->add_option("--corpus", o.corpus, "held-out corpus JSONL");
    recon->add_option("--cases", o.cases, "number of test segments");
    auto* opt_S = recon->add_option("--S", o.S, "alternatives per case");
    auto* opt_T = recon->add_option("--T", o.T, "trials per case");
    auto* opt_C = recon->add_option("--C", o.C, "distractors per trial");
    auto* opt_alpha = recon->add_option("--alpha", o.alpha, "smoothing α");
    recon->add_option("--out", o.out, "report JSON (default stdout)");
    recon->add_option("--csv", o.csv, "per-case CSV");
    auto* hitsk = sub(eval, "hitsk", "Hits@K accuracy");
    hitsk->add_option("--problems", o.problems, "graded problems JSONL");
    hitsk->add_option("--method", o.method, "direct, outline or hier");
    auto* opt_k2 = hitsk->add_option("--k", o.k, "candidates per problem");
    auto* opt_outline_len2 = hitsk->add_option("--max-outline-len", o.max_outline_len, "tag outline cap (hier)");
    hitsk->add_option("--dynamics", o.dynamics, "bigram model JSON (hier)");
    hitsk->add_option("--tag-model", o.tag_model, "tag model for descriptions (hier)");
    hitsk->add_option("--out", o.out, "report JSON (default stdout)");
    hitsk->add_option("--csv", o.csv, "per-problem CSV");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        err << "error: " << text::single_line(e.what()) << "\n";
        return kExitInvalid;
    }

    log::set_level(g.verbose ? log::Level::Debug : g.quiet ? log::Level::Warn : log::Level::Info);

    Context ctx;
    ctx.g = g;
    ctx.out = &out;
    ctx.err = &err;
    ctx.no_cache = g.no_cache;
    try {
        RunConfig& rc = ctx.rc;
        if (opt_config->count()) rc = load_run_config(g.config_path);
        if (opt_backend->count()) rc.backend = g.backend;
        if (opt_endpoint->count()) rc.endpoint = g.endpoint;
        if (opt_llm->count()) rc.model = g.llm_model;
        if (opt_cache->count()) rc.cache = g.cache;
        if (opt_budget->count()) rc.budget = g.budget;
        if (opt_parallel->count()) rc.parallel = g.parallel;
        if (opt_rps->count()) rc.requests_per_second = g.rps;
        if (opt_prompts->count()) rc.prompts_dir = g.prompts_dir;
        if (opt_preset->count()) apply_preset(rc, g.preset);
        if (opt_seed->count()) {
            rc.seed = g.seed;
            rc.propagate_seed();
        }
        if (opt_tags->count()) rc.flsa.num_tags = o.tags;
        if (opt_iters->count()) rc.flsa.max_iters = o.max_iters;
        if (opt_window->count()) rc.flsa.window = Window::parse(o.window);
        if (opt_msample->count()) rc.flsa.m_step_sample = o.m_sample;
        if (opt_smoothing->count()) rc.bigram_smoothing = o.smoothing;
        if (opt_k->count() || opt_k2->count()) rc.sample.K = o.k;
        if (opt_outline_len->count() || opt_outline_len2->count()) rc.sample.max_outline_len = o.max_outline_len;
        if (opt_S->count()) rc.eval.S = o.S;
        if (opt_T->count()) rc.eval.T_trials = o.T;
        if (opt_C->count()) rc.eval.C = o.C;
        if (opt_alpha->count()) rc.eval.alpha = o.alpha;
        rc.validate();
        if (rc.prompts_dir) PromptSet::set_active(PromptSet::load_dir(*rc.prompts_dir));

        if (*ingest) return cmd_ingest(ctx, o);
        if (*fit_plsa) return cmd_fit_plsa(ctx, o);
        if (*fit_flsa) return cmd_fit_flsa(ctx, o);
        if (*tag) return cmd_tag(ctx, o);
        if (*dyn_fit) return cmd_dynamics_fit(ctx, o);
        if (*dyn_dot) return cmd_dynamics_dot(ctx, o);
        if (*sample) return cmd_sample(ctx, o);
        if (*recon) return cmd_eval_recon(ctx, o);
        if (*hitsk) return cmd_eval_hitsk(ctx, o);
        err << "error: no command\n";
        return kExitInvalid;
    } catch (const ConfigError& e) {
        err << "error: " << text::single_line(e.what()) << "\n";
        return kExitInvalid;
    } catch (const ParseError& e) {
        err << "error: " << text::single_line(e.what()) << "\n";
        return kExitInvalid;
    } catch (const IndexError& e) {
        err << "error: " << text::single_line(e.what()) << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: " << text::single_line(e.what()) << "\n";
        return kExitRuntime;
    }
}

}  // namespace flsa::cli
