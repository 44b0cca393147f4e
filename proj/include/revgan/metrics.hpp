#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "revgan/corpus.hpp"
#include "revgan/sentiment.hpp"
#include "revgan/tensor.hpp"

namespace revgan {

using Tokens = std::vector<std::string>;

/// Natural-log probability of each token of a sentence, eos included.
using SentenceScorer = std::function<std::vector<double>(const Sentence&)>;

struct LikelihoodResult {
    double total = 0.0;
    std::size_t tokens = 0;
    double per_token() const { return tokens ? total / static_cast<double>(tokens) : 0.0; }
};

LikelihoodResult log_likelihood(const std::vector<Document>& docs, const SentenceScorer& scorer);
/// exp(-mean token log-probability). Throws std::invalid_argument with no tokens.
double perplexity(const std::vector<Document>& docs, const SentenceScorer& scorer);

struct BleuOptions {
    /// Add one to the numerator and denominator of the 2- to 4-gram precisions.
    bool smoothing = false;
};

struct BleuStats {
    double matches[4] = {0, 0, 0, 0};
    double totals[4] = {0, 0, 0, 0};
    double hypothesis_length = 0.0;
    /// Sum of the closest reference lengths (shorter wins a tie).
    double reference_length = 0.0;
};
BleuStats bleu_stats(const std::vector<Tokens>& hypotheses, const std::vector<std::vector<Tokens>>& references);

/// Corpus BLEU-4: clipped n-gram precisions pooled over the corpus, geometric
/// mean, brevity penalty against the closest reference length.
double bleu4(const std::vector<Tokens>& hypotheses, const std::vector<std::vector<Tokens>>& references,
             const BleuOptions& options = {});

std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// Balanced F1 of LCS precision and recall; best reference per hypothesis,
/// averaged over hypotheses.
double rouge_l(const std::vector<Tokens>& hypotheses, const std::vector<std::vector<Tokens>>& references);

inline constexpr std::size_t wmd_unique_cap = 64;

/// Normalized bag of words over non-special token ids. Keeps at most
/// wmd_unique_cap distinct tokens (most frequent first, ties by id).
struct BagOfWords {
    std::vector<TokenId> ids;
    std::vector<std::int64_t> counts;
    std::int64_t total = 0;
    double weight(std::size_t i) const { return static_cast<double>(counts[i]) / static_cast<double>(total); }
};
BagOfWords bag_of_words(const std::vector<TokenId>& tokens);

/// Exact word mover's distance under Euclidean cost between rows of
/// `embeddings`. Empty when either document has no regular token.
std::optional<double> wmd(const std::vector<TokenId>& a, const std::vector<TokenId>& b, const Matrix& embeddings);

/// Fraction of texts whose lexicon label equals the requested one; neutral
/// scores never match.
double sentiment_accuracy(const std::vector<std::string>& texts, const std::vector<Sentiment>& labels,
                          const Lexicon& lexicon);

struct MetricsReport {
    double log_likelihood = 0.0;
    double log_likelihood_per_token = 0.0;
    double perplexity = 0.0;
    double bleu4 = 0.0;
    double rouge_l = 0.0;
    double wmd = 0.0;
    double sentiment_accuracy = 0.0;
    std::size_t sample_count = 0;
    std::size_t wmd_pairs = 0;
    std::size_t wmd_skipped = 0;

    /// "key = value" lines in a fixed order.
    std::string to_kv() const;
    nlohmann::json to_json() const;
    static std::string table_header();
    /// Log-likelihood, WMD, PPL, BLEU-4 (%), ROUGE-L (%).
    std::string table_row(const std::string& system) const;
};

Tokens regular_tokens(const std::vector<TokenId>& ids, const Vocabulary& vocab);

}  // namespace revgan
