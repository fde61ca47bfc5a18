// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include "flsa/config.hpp"
#include "flsa/dynamics.hpp"
#include "flsa/eval.hpp"
#include "flsa/flsa.hpp"
#include "flsa/hiersample.hpp"
#include "flsa/log.hpp"
#include "flsa/plsa.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace flsa;
namespace t = flsa::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Collects failed expectations for one criterion.
struct Check {
    std::vector<std::string> failures;
    std::string detail;
    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

Check plsa_monotonicity() {
    Check c;
    const auto start = Clock::now();
    std::mt19937_64 rng(1);
    int traces = 0;
    for (int i = 0; i < 50; ++i) {
        const auto bow = t::random_bow(rng, 20, 30);
        plsa::FitOptions o;
        o.num_topics = i % 2 == 0 ? 2 : 5;
        o.seed = static_cast<std::uint64_t>(i);
        const auto fit = plsa::plsa_fit(bow, o);
        for (std::size_t k = 1; k < fit.trace.size(); ++k) {
            c.expect(fit.trace[k] >= fit.trace[k - 1] - 1e-9,
                     "corpus " + std::to_string(i) + " decreased at iteration " + std::to_string(k));
        }
        ++traces;
    }
    const double elapsed = seconds_since(start);
    c.expect(elapsed < 10.0, "took " + std::to_string(elapsed) + " s");
    c.detail = std::to_string(traces) + " traces, " + std::to_string(elapsed) + " s";
    return c;
}

Check plsa_brute_force() {
    Check c;
    const plsa::BowCorpus bow({"w0", "w1", "w2", "w3"},
                              {{{0, 2}, {1, 1}, {3, 4}}, {{1, 3}, {2, 1}}, {{0, 1}, {2, 2}, {3, 1}}});
    const auto init = plsa::plsa_init(bow, 2, 123);
    const auto lib = plsa::plsa_m_step(bow, plsa::plsa_e_step(init, bow), 2);
    const auto ref =
        t::brute_force_em_step(t::dense_counts(bow), {t::to_dense(init.p_t_given_d), t::to_dense(init.p_w_given_t)});
    const double d1 = t::max_abs_diff(t::to_dense(lib.p_t_given_d), ref.p_t_given_d);
    const double d2 = t::max_abs_diff(t::to_dense(lib.p_w_given_t), ref.p_w_given_t);
    c.expect(d1 <= 1e-12, "p(t|d) differs by " + std::to_string(d1));
    c.expect(d2 <= 1e-12, "p(w|t) differs by " + std::to_string(d2));
    std::ostringstream s;
    s << "max |diff| " << std::max(d1, d2);
    c.detail = s.str();
    return c;
}

Check planted_recovery() {
    Check c;
    const auto start = Clock::now();
    const auto planted = t::planted_corpus(3, 20, 4, 3);
    auto gw = t::scripted_gateway(t::planted_rules());
    FlsaConfig cfg;
    cfg.num_tags = 6;
    cfg.seed = 1;
    const TagModel m = flsa_fit(planted.corpus, cfg, *gw);
    std::vector<int> got, want;
    for (const auto& [key, cluster] : planted.truth) {
        want.push_back(cluster);
        got.push_back(m.assignments.at(key));
    }
    const double ari = t::adjusted_rand_index(got, want);
    const double elapsed = seconds_since(start);
    c.expect(m.iteration <= 3, "stopped at iteration " + std::to_string(m.iteration));
    c.expect(ari == 1.0, "ARI " + std::to_string(ari));
    c.expect(!m.change_history.empty() && m.change_history.back() == 0.0, "change history does not end at 0");
    c.expect(elapsed < 30.0, "took " + std::to_string(elapsed) + " s");
    c.expect(gw->backend_kind() == BackendKind::Scripted, "non-scripted backend");
    std::ostringstream s;
    s << "converged at iteration " << m.iteration << ", ARI " << ari << ", " << gw->backend_calls()
      << " scripted calls, 0 network calls, " << elapsed << " s";
    c.detail = s.str();
    return c;
}

Check bigram_correctness() {
    Check c;
    const auto mle = fit_bigram({{1, 2}, {1, 3}, {2, 2, 3}}, 3, 0.0);
    // Hand counts: START->1 x2, START->2 x1; 1->2, 1->3; 2->END, 2->2, 2->3; 3->END x2.
    c.expect(mle.start_prob(1) == 2.0 / 3.0 && mle.start_prob(2) == 1.0 / 3.0 && mle.start_prob(3) == 0.0,
             "MLE start");
    c.expect(mle.transition_prob(1, 2) == 0.5 && mle.transition_prob(1, 3) == 0.5 &&
                 mle.transition_prob(1, kEndTag) == 0.0,
             "MLE row 1");
    c.expect(mle.transition_prob(2, 2) == 1.0 / 3.0 && mle.transition_prob(2, 3) == 1.0 / 3.0 &&
                 mle.transition_prob(2, kEndTag) == 1.0 / 3.0,
             "MLE row 2");
    c.expect(mle.transition_prob(3, kEndTag) == 1.0, "MLE row 3");

    const auto lap = fit_bigram({{1, 2}, {1, 3}, {2, 2, 3}}, 3, 1.0);
    // (count + 1) / (row + 4) with END as the fourth column; start uses + 3.
    c.expect(std::abs(lap.start_prob(1) - 3.0 / 6.0) < 1e-15 && std::abs(lap.start_prob(3) - 1.0 / 6.0) < 1e-15,
             "Laplace start");
    c.expect(std::abs(lap.transition_prob(1, 2) - 2.0 / 6.0) < 1e-15 &&
                 std::abs(lap.transition_prob(1, 1) - 1.0 / 6.0) < 1e-15,
             "Laplace row 1");
    c.expect(std::abs(lap.transition_prob(3, kEndTag) - 3.0 / 6.0) < 1e-15, "Laplace row 3");
    c.expect(std::abs(lap.transition_prob(2, kEndTag) - 2.0 / 7.0) < 1e-15, "Laplace row 2");

    std::vector<std::vector<int>> seqs;
    for (int i = 0; i < 60; ++i) seqs.push_back({1 + i % 3});
    seqs.push_back({1, 2, 3});
    const auto smooth = fit_bigram(seqs, 3, 0.1);
    const auto mass = t::enumerate_sequences(smooth, 8);
    c.expect(std::abs(mass.ended - 1.0) <= 1e-6, "enumerated mass " + std::to_string(mass.ended));
    c.expect(std::abs(mass.ended + mass.alive - 1.0) <= 1e-12, "absorbed plus live mass is not 1");
    std::ostringstream s;
    s.precision(12);
    s << "mass " << mass.ended << " over " << mass.sequences << " sequences up to length 8";
    c.detail = s.str();
    return c;
}

Check sampler_fidelity() {
    Check c;
    const auto m = fit_bigram({{1, 2, 3}, {2, 1}, {3, 3, 1, 2}, {1}}, 3, 0.2);
    const int max_len = 6, n = 10000;
    std::mt19937_64 rng(31337);
    std::vector<double> first(4, 0);
    std::vector<std::vector<double>> trans(4, std::vector<double>(4, 0));
    bool too_long = false, bad_tag = false;
    for (int i = 0; i < n; ++i) {
        const auto s = sample_tag_sequence(m, max_len, rng);
        too_long |= s.empty() || static_cast<int>(s.size()) > max_len;
        for (int tag : s) bad_tag |= tag < 1 || tag > 3;
        if (s.empty() || bad_tag) continue;
        first[static_cast<std::size_t>(s[0])] += 1;
        for (std::size_t k = 1; k < s.size(); ++k) trans[static_cast<std::size_t>(s[k - 1])][static_cast<std::size_t>(s[k])] += 1;
        if (static_cast<int>(s.size()) < max_len) trans[static_cast<std::size_t>(s.back())][0] += 1;
    }
    c.expect(!too_long, "a sequence was empty or exceeded max_outline_len");
    c.expect(!bad_tag, "END or an out-of-range tag appeared");
    double worst = 0;
    for (int a = 1; a <= 3; ++a) {
        worst = std::max(worst, std::abs(first[static_cast<std::size_t>(a)] / n - m.start_prob(a)));
        double row = 0;
        for (double x : trans[static_cast<std::size_t>(a)]) row += x;
        for (int b = 0; b <= 3; ++b) {
            worst = std::max(worst, std::abs(trans[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] / row -
                                             m.transition_prob(a, b)));
        }
    }
    c.expect(worst <= 0.02, "max frequency error " + std::to_string(worst));
    c.detail = "max frequency error " + std::to_string(worst) + " over " + std::to_string(n) + " sequences";
    return c;
}

Corpus segments_corpus(int docs, int segs) {
    std::vector<Document> out;
    for (int d = 0; d < docs; ++d) {
        Document doc;
        doc.id = "h" + std::to_string(d);
        for (int k = 1; k <= segs; ++k) doc.segments.push_back({doc.id, k, "segment " + std::to_string(k) + " of " + doc.id});
        out.push_back(std::move(doc));
    }
    return Corpus(std::move(out));
}

Check reconstruction_estimator() {
    Check c;
    const double lo = smoothed_log_prob(0, 20, 10, 0.1), hi = smoothed_log_prob(20, 20, 10, 0.1);
    c.expect(std::abs(lo - std::log(0.1 / 21.0)) <= 1e-9, "c = 0 value");
    c.expect(std::abs(hi - std::log(20.1 / 21.0)) <= 1e-9, "c = T value");
    const double mid = smoothed_log_prob(10, 20, 10, 0.1);
    c.expect(lo < mid && mid < hi, "c = 10 not between the extremes");

    const Corpus corpus = segments_corpus(50, 4);
    FlsaConfig fc;
    fc.num_tags = 2;
    TagModel model = flsa_init(corpus, fc);
    model.descriptions = {"first kind", "second kind"};
    model.iteration = 1;
    GatewayOptions opts;
    opts.use_cache = false;
    Gateway gw(std::make_unique<t::RandomChoiceBackend>(4, 99), opts);
    EvalConfig ec;
    ec.S = 10;
    ec.T_trials = 40;
    ec.C = 3;
    ec.seed = 4;
    const auto report = eval_reconstruction(draw_test_cases(corpus, 200, 4), corpus, model, gw, ec);
    c.expect(report.cases.size() == 200, "only " + std::to_string(report.cases.size()) + " cases evaluated");
    const auto [expected, sd] = t::binomial_log_moments(40, 0.25, 10, 0.1);
    const double sigma = sd / std::sqrt(200.0);
    const double z = (report.mean_with_tag - expected) / sigma;
    c.expect(std::abs(z) < 3.0, "with-tag mean is " + std::to_string(z) + " sigma from expectation");
    bool paired = true;
    for (const auto& rc : report.cases) {
        for (const auto& tr : rc.trials) {
            paired &= tr.with_tag.distractors == tr.no_tag.distractors && tr.with_tag.order == tr.no_tag.order;
        }
    }
    c.expect(paired, "tag and no-tag variants saw different alternatives");
    std::ostringstream s;
    s << "mean " << report.mean_with_tag << " vs expected " << expected << " (z = " << z << ")";
    c.detail = s.str();
    return c;
}

Check hits_harness() {
    Check c;
    std::vector<GradedProblem> problems;
    std::vector<t::RuleSpec> rules;
    for (int i = 0; i < 10; ++i) {
        problems.push_back({"q" + std::to_string(i), "Parity question " + std::to_string(i) + " end", "4" + std::to_string(i)});
        const std::string right = "Answer: 4" + std::to_string(i), wrong = "Answer: 0";
        rules.push_back({"Parity question " + std::to_string(i) + " end",
                         i % 2 == 0 ? std::vector<std::string>{right, wrong} : std::vector<std::string>{wrong, right}, 1});
    }
    rules.push_back({"", {"none"}, 0});
    auto gw = t::scripted_gateway(rules);
    SampleConfig sc;
    sc.seed = 2;
    sc.K = 1;
    const auto k1 = hits_at_k(problems, SolutionSampler::direct(sc), *gw);
    for (std::size_t i = 0; i < problems.size(); ++i) {
        c.expect(k1.problems[i].hit == (i % 2 == 0), "K=1 pattern differs at " + problems[i].id);
    }
    sc.K = 2;
    const auto k2 = hits_at_k(problems, SolutionSampler::direct(sc), *gw);
    c.expect(k2.accuracy == 1.0, "K=2 accuracy " + std::to_string(k2.accuracy));

    // 20 problems whose single right reply sits at a random slot (or none).
    std::vector<GradedProblem> twenty;
    std::vector<t::RuleSpec> rules20;
    std::mt19937_64 rng(6);
    for (int i = 0; i < 20; ++i) {
        twenty.push_back({"r" + std::to_string(i), "Random slot task " + std::to_string(i) + " end", "9"});
        std::vector<std::string> replies(12, "Answer: 1");
        if (const auto slot = rng() % 14; slot < replies.size()) replies[slot] = "Answer: 9";
        rules20.push_back({"Random slot task " + std::to_string(i) + " end", replies, 1});
    }
    rules20.push_back({"", {"none"}, 0});
    auto gw20 = t::scripted_gateway(rules20);
    std::ostringstream s;
    s << "K=1 " << k1.accuracy << ", K=2 " << k2.accuracy << "; 20-problem set:";
    double previous = -1;
    for (int K : {1, 2, 5, 10}) {
        sc.K = K;
        const double acc = hits_at_k(twenty, SolutionSampler::direct(sc), *gw20).accuracy;
        c.expect(acc >= previous, "accuracy dropped at K=" + std::to_string(K));
        previous = acc;
        s << " K=" << K << " " << acc;
    }
    c.detail = s.str();
    return c;
}

Check reproducibility() {
    Check c;
    t::TempDir a, b;
    t::write_pipeline_inputs(a.path());
    t::write_pipeline_inputs(b.path());
    std::string fa, fb;
    const auto files = t::run_pipeline(a.path(), fa);
    c.expect(!files.empty(), "first run failed: " + fa);
    c.expect(!t::run_pipeline(b.path(), fb).empty(), "second run failed: " + fb);
    std::size_t compared = 0;
    for (const auto& f : files) {
        const auto x = t::read_file(a / f);
        c.expect(!x.empty(), f + " is empty");
        c.expect(x == t::read_file(b / f), f + " differs");
        ++compared;
    }
    c.detail = std::to_string(compared) + " artifacts byte-identical";
    return c;
}

Check default_configuration() {
    Check c;
    const RunConfig d;
    c.expect(d.eval.alpha == 0.1, "alpha");
    c.expect(d.sample.K == 50, "K");
    c.expect(d.flsa.max_iters == 30, "max_iters");
    c.expect(d.flsa.m_step_sample == 10, "m_step_sample");
    c.expect(preset_config("story").flsa.window == Window::of(2), "story window");
    c.expect(preset_config("solution").flsa.window.is_unlimited(), "solution window");
    c.expect(preset_config("story").flsa.num_tags == 100, "story num_tags");
    c.expect(preset_config("math").flsa.num_tags == 100, "MATH num_tags");
    c.expect(preset_config("bbh").flsa.num_tags == 50, "BBH num_tags");
    const auto snap = to_json(d);
    c.detail = "alpha=" + snap["eval"]["alpha"].dump() + " K=" + snap["sample"]["K"].dump() +
               " max_iters=" + snap["flsa"]["max_iters"].dump() + " m_step_sample=" +
               snap["flsa"]["m_step_sample"].dump();
    return c;
}

}  // namespace

int main() {
    log::set_level(log::Level::Error);
    const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
        {"PLSA EM monotonicity", plsa_monotonicity},
        {"PLSA brute-force equivalence", plsa_brute_force},
        {"planted-cluster recovery", planted_recovery},
        {"bigram correctness", bigram_correctness},
        {"sampler fidelity", sampler_fidelity},
        {"reconstruction estimator", reconstruction_estimator},
        {"Hits@K harness", hits_harness},
        {"end-to-end reproducibility", reproducibility},
        {"default configuration", default_configuration},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Check c;
        try {
            c = criteria[i].second();
        } catch (const std::exception& e) {
            c.failures.push_back(std::string("exception: ") + e.what());
        }
        const bool ok = c.failures.empty();
        failed += ok ? 0 : 1;
        std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << (i + 1) << ": " << criteria[i].first;
        if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
        std::cout << "\n";
        for (const auto& f : c.failures) std::cout << "      " << f << "\n";
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
