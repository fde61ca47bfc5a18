#include "flsa/plsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "flsa/error.hpp"
#include "flsa/log.hpp"
#include "flsa/random.hpp"
#include "flsa/text.hpp"

namespace flsa::plsa {

using nlohmann::json;

BowCorpus::BowCorpus(std::vector<std::string> vocab, std::vector<std::vector<WordCount>> docs,
                     std::vector<std::string> doc_ids)
    : vocab_(std::move(vocab)), docs_(std::move(docs)), doc_ids_(std::move(doc_ids)) {
    if (vocab_.empty()) throw ConfigError("bag-of-words corpus has an empty vocabulary");
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        if (!index_.emplace(vocab_[i], static_cast<int>(i)).second) {
            throw ParseError("duplicate vocabulary word '" + vocab_[i] + "'");
        }
    }
    if (doc_ids_.empty()) {
        for (std::size_t d = 0; d < docs_.size(); ++d) doc_ids_.push_back(std::to_string(d));
    }
    if (doc_ids_.size() != docs_.size()) throw ParseError("doc_ids and docs differ in length");
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        auto& row = docs_[d];
        std::map<int, double> merged;
        for (const auto& wc : row) {
            if (wc.word < 0 || wc.word >= num_words()) {
                throw ParseError("document " + doc_ids_[d] + ": word index out of range");
            }
            if (!(wc.count >= 0.0)) throw ParseError("document " + doc_ids_[d] + ": negative count");
            merged[wc.word] += wc.count;
        }
        row.clear();
        double total = 0.0;
        for (const auto& [w, c] : merged) {
            if (c > 0.0) row.push_back({w, c});
            total += c;
        }
        if (total < 1.0) throw ParseError("document " + doc_ids_[d] + " has no words");
    }
}

int BowCorpus::word_index(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? -1 : it->second;
}

BowCorpus build_bow(const Corpus& corpus, BowUnit unit) {
    std::vector<std::vector<std::string>> token_rows;
    std::vector<std::string> ids;
    for (const auto& d : corpus.documents()) {
        if (unit == BowUnit::Document) {
            std::vector<std::string> toks;
            for (const auto& s : d.segments) {
                auto t = text::word_tokens(s.text);
                toks.insert(toks.end(), t.begin(), t.end());
            }
            token_rows.push_back(std::move(toks));
            ids.push_back(d.id);
        } else {
            for (const auto& s : d.segments) {
                token_rows.push_back(text::word_tokens(s.text));
                ids.push_back(d.id + "#" + std::to_string(s.index));
            }
        }
    }
    std::map<std::string, int> vocab_map;
    for (const auto& row : token_rows) {
        for (const auto& t : row) vocab_map.emplace(t, 0);
    }
    std::vector<std::string> vocab;
    for (auto& [w, idx] : vocab_map) {
        idx = static_cast<int>(vocab.size());
        vocab.push_back(w);
    }
    std::vector<std::vector<WordCount>> docs;
    std::vector<std::string> kept_ids;
    for (std::size_t i = 0; i < token_rows.size(); ++i) {
        if (token_rows[i].empty()) {
            log::warn("skipping " + ids[i] + ": no word tokens");
            continue;
        }
        std::vector<WordCount> row;
        for (const auto& t : token_rows[i]) row.push_back({vocab_map.at(t), 1.0});
        docs.push_back(std::move(row));
        kept_ids.push_back(ids[i]);
    }
    return BowCorpus(std::move(vocab), std::move(docs), std::move(kept_ids));
}

double Matrix::row_sum(int r) const {
    double s = 0.0;
    for (int c = 0; c < cols_; ++c) s += (*this)(r, c);
    return s;
}

void Matrix::normalize_row(int r) {
    const double s = row_sum(r);
    for (int c = 0; c < cols_; ++c) (*this)(r, c) /= s;
}

PlsaModel plsa_init(const BowCorpus& corpus, int num_topics, std::uint64_t seed) {
    if (num_topics < 1) throw ConfigError("num_topics must be >= 1");
    if (corpus.num_words() < 1) throw ConfigError("vocabulary is empty");
    std::mt19937_64 rng(seed);
    // Exp(1) draws normalized per row give a symmetric Dirichlet(1).
    auto exp1 = [&rng] { return -std::log1p(-unit_uniform(rng)); };
    PlsaModel m;
    m.num_topics = num_topics;
    m.p_t_given_d = Matrix(corpus.num_docs(), num_topics);
    m.p_w_given_t = Matrix(num_topics, corpus.num_words());
    auto fill = [&](Matrix& mat) {
        for (int r = 0; r < mat.rows(); ++r) {
            for (int c = 0; c < mat.cols(); ++c) mat(r, c) = std::max(exp1(), kProbFloor);
            mat.normalize_row(r);
        }
    };
    fill(m.p_t_given_d);
    fill(m.p_w_given_t);
    if (num_topics == 1) {
        for (int d = 0; d < corpus.num_docs(); ++d) m.p_t_given_d(d, 0) = 1.0;
    }
    return m;
}

std::vector<double> plsa_posterior(const PlsaModel& model, int d, int w) {
    const int T = model.num_topics;
    if (d < 0 || d >= model.p_t_given_d.rows()) throw IndexError("document index out of range");
    if (w < 0 || w >= model.p_w_given_t.cols()) throw IndexError("word index out of range");
    std::vector<double> post(static_cast<std::size_t>(T));
    double denom = 0.0;
    for (int t = 0; t < T; ++t) {
        post[static_cast<std::size_t>(t)] = model.p_t_given_d(d, t) * model.p_w_given_t(t, w);
        denom += post[static_cast<std::size_t>(t)];
    }
    if (!(denom > 0.0)) {
        throw DegenerateError("posterior denominator is zero for document " + std::to_string(d) + ", word " +
                              std::to_string(w));
    }
    for (auto& p : post) p /= denom;
    return post;
}

Posteriors plsa_e_step(const PlsaModel& model, const BowCorpus& corpus) {
    const auto T = static_cast<std::size_t>(model.num_topics);
    Posteriors out(static_cast<std::size_t>(corpus.num_docs()));
    for (int d = 0; d < corpus.num_docs(); ++d) {
        const auto& row = corpus.doc(d);
        auto& dst = out[static_cast<std::size_t>(d)];
        dst.resize(row.size() * T);
        for (std::size_t e = 0; e < row.size(); ++e) {
            auto post = plsa_posterior(model, d, row[e].word);
            std::copy(post.begin(), post.end(), dst.begin() + static_cast<std::ptrdiff_t>(e * T));
        }
    }
    return out;
}

PlsaModel plsa_m_step(const BowCorpus& corpus, const Posteriors& posteriors, int num_topics) {
    if (num_topics < 1) throw ConfigError("num_topics must be >= 1");
    if (static_cast<int>(posteriors.size()) != corpus.num_docs()) {
        throw ConfigError("posteriors do not match the corpus");
    }
    const auto T = static_cast<std::size_t>(num_topics);
    PlsaModel m;
    m.num_topics = num_topics;
    m.p_t_given_d = Matrix(corpus.num_docs(), num_topics);
    m.p_w_given_t = Matrix(num_topics, corpus.num_words());
    for (int d = 0; d < corpus.num_docs(); ++d) {
        const auto& row = corpus.doc(d);
        const auto& post = posteriors[static_cast<std::size_t>(d)];
        if (post.size() != row.size() * T) throw ConfigError("posterior row size mismatch");
        for (std::size_t e = 0; e < row.size(); ++e) {
            for (std::size_t t = 0; t < T; ++t) {
                const double mass = row[e].count * post[e * T + t];
                m.p_t_given_d(d, static_cast<int>(t)) += mass;
                m.p_w_given_t(static_cast<int>(t), row[e].word) += mass;
            }
        }
        m.p_t_given_d.normalize_row(d);
    }
    for (int t = 0; t < num_topics; ++t) {
        if (m.p_w_given_t.row_sum(t) > 0.0) {
            m.p_w_given_t.normalize_row(t);
        } else {
            log::warn("topic " + std::to_string(t) + " received no mass; reseeding its word distribution uniformly");
            for (int w = 0; w < corpus.num_words(); ++w) m.p_w_given_t(t, w) = 1.0 / corpus.num_words();
        }
    }
    return m;
}

double plsa_log_likelihood(const PlsaModel& model, const BowCorpus& corpus) {
    double ll = 0.0;
    for (int d = 0; d < corpus.num_docs(); ++d) {
        for (const auto& wc : corpus.doc(d)) {
            double mix = 0.0;
            for (int t = 0; t < model.num_topics; ++t) mix += model.p_t_given_d(d, t) * model.p_w_given_t(t, wc.word);
            if (!(mix > 0.0)) {
                throw DegenerateError("word '" + corpus.vocab()[static_cast<std::size_t>(wc.word)] +
                                      "' has zero probability in document " + corpus.doc_ids()[static_cast<std::size_t>(d)] +
                                      " (log-likelihood is -infinity)");
            }
            ll += wc.count * std::log(std::max(mix, kProbFloor));
        }
    }
    return ll;
}

void apply_floor(PlsaModel& model) {
    for (Matrix* mat : {&model.p_t_given_d, &model.p_w_given_t}) {
        for (int r = 0; r < mat->rows(); ++r) {
            bool touched = false;
            for (int c = 0; c < mat->cols(); ++c) {
                if ((*mat)(r, c) < kProbFloor) {
                    (*mat)(r, c) = kProbFloor;
                    touched = true;
                }
            }
            if (touched) mat->normalize_row(r);
        }
    }
}

FitResult plsa_fit(const BowCorpus& corpus, const FitOptions& options) {
    if (options.max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (options.tol < 0.0) throw ConfigError("tol must be >= 0");
    FitResult fit;
    fit.model = plsa_init(corpus, options.num_topics, options.seed);
    fit.trace.push_back(plsa_log_likelihood(fit.model, corpus));
    for (int it = 1; it <= options.max_iters; ++it) {
        Posteriors post = plsa_e_step(fit.model, corpus);
        fit.model = plsa_m_step(corpus, post, options.num_topics);
        apply_floor(fit.model);
        fit.trace.push_back(plsa_log_likelihood(fit.model, corpus));
        fit.iterations = it;
        const double gain = fit.trace.back() - fit.trace[fit.trace.size() - 2];
        if (gain < options.tol) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

namespace {

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const json& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<int>(row.size()) != cols) throw ParseError("ragged matrix in model JSON");
        for (int c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

}  // namespace

json to_json(const FitResult& fit, const BowCorpus& corpus, std::uint64_t seed) {
    json j;
    j["format"] = "plsa-model/1";
    j["num_topics"] = fit.model.num_topics;
    j["vocab"] = corpus.vocab();
    j["doc_ids"] = corpus.doc_ids();
    j["p_t_given_d"] = matrix_json(fit.model.p_t_given_d);
    j["p_w_given_t"] = matrix_json(fit.model.p_w_given_t);
    j["meta"] = {{"seed", seed},
                 {"iterations", fit.iterations},
                 {"converged", fit.converged},
                 {"final_log_likelihood", fit.trace.back()},
                 {"trace", fit.trace}};
    return j;
}

PlsaModel model_from_json(const json& j) {
    try {
        PlsaModel m;
        m.num_topics = j.at("num_topics").get<int>();
        m.p_t_given_d = matrix_from_json(j.at("p_t_given_d"));
        m.p_w_given_t = matrix_from_json(j.at("p_w_given_t"));
        if (m.p_t_given_d.cols() != m.num_topics || m.p_w_given_t.rows() != m.num_topics) {
            throw ParseError("model matrices do not match num_topics");
        }
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid PLSA model JSON: ") + e.what());
    }
}

}  // namespace flsa::plsa
