#pragma once

// Classical probabilistic latent semantic analysis fitted by EM:
//
//   p(w|d)   = sum_t p(t|d) p(w|t)
//   E-step:  p(t|w,d) = p(t|d) p(w|t) / sum_t' p(t'|d) p(w|t')
//   M-step:  p(w|t) ∝ sum_d n(d,w) p(t|w,d),  p(t|d) ∝ sum_w n(d,w) p(t|w,d)
//
// The log-likelihood sum_{d,w} n(d,w) log p(w|d) never decreases across
// iterations.

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "flsa/corpus.hpp"

namespace flsa::plsa {

// Entries below this are raised to it (then rows renormalized) between fit
// iterations so zero cells cannot lock in and produce NaNs.
inline constexpr double kProbFloor = 1e-12;

struct WordCount {
    int word = 0;
    double count = 0.0;
};

class BowCorpus {
public:
    BowCorpus() = default;
    // docs[d] lists (word, count) pairs; validated against the vocabulary.
    BowCorpus(std::vector<std::string> vocab, std::vector<std::vector<WordCount>> docs,
              std::vector<std::string> doc_ids = {});

    int num_docs() const { return static_cast<int>(docs_.size()); }
    int num_words() const { return static_cast<int>(vocab_.size()); }
    const std::vector<std::string>& vocab() const { return vocab_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    // Sorted by word index, no duplicates, all counts > 0.
    const std::vector<WordCount>& doc(int d) const { return docs_.at(static_cast<std::size_t>(d)); }
    int word_index(const std::string& word) const;  // -1 when unknown

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::vector<WordCount>> docs_;
    std::vector<std::string> doc_ids_;
};

enum class BowUnit { Document, Segment };

// Bag-of-words view of a segmented corpus, one row per document or per
// segment. The vocabulary is sorted lexicographically.
BowCorpus build_bow(const Corpus& corpus, BowUnit unit);

// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& operator()(int r, int c) { return data_[idx(r, c)]; }
    double operator()(int r, int c) const { return data_[idx(r, c)]; }
    double row_sum(int r) const;
    void normalize_row(int r);

    bool operator==(const Matrix&) const = default;

private:
    std::size_t idx(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
    }
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

struct PlsaModel {
    int num_topics = 0;
    Matrix p_t_given_d;  // docs x topics
    Matrix p_w_given_t;  // topics x words

    bool operator==(const PlsaModel&) const = default;
};

// Posterior p(t|w,d) for every nonzero (d, w) cell: post[d][e*T + t] where e
// indexes corpus.doc(d).
using Posteriors = std::vector<std::vector<double>>;

// Rows drawn from a symmetric Dirichlet(1); deterministic given seed.
PlsaModel plsa_init(const BowCorpus& corpus, int num_topics, std::uint64_t seed);

std::vector<double> plsa_posterior(const PlsaModel& model, int d, int w);
Posteriors plsa_e_step(const PlsaModel& model, const BowCorpus& corpus);
// Closed-form maximizer. A topic with no mass gets a uniform word row.
PlsaModel plsa_m_step(const BowCorpus& corpus, const Posteriors& posteriors, int num_topics);
double plsa_log_likelihood(const PlsaModel& model, const BowCorpus& corpus);

// Raises entries below kProbFloor and renormalizes every row.
void apply_floor(PlsaModel& model);

struct FitOptions {
    int num_topics = 2;
    int max_iters = 200;
    double tol = 1e-6;  // stop when the likelihood gain drops below this
    std::uint64_t seed = 0;
};

struct FitResult {
    PlsaModel model;
    // trace[0] is the initial model's likelihood, then one entry per iteration.
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
};

FitResult plsa_fit(const BowCorpus& corpus, const FitOptions& options);

nlohmann::json to_json(const FitResult& fit, const BowCorpus& corpus, std::uint64_t seed);
PlsaModel model_from_json(const nlohmann::json& j);

}  // namespace flsa::plsa
