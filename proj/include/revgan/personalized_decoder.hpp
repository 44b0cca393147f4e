#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "revgan/corpus.hpp"
#include "revgan/recursive_autoencoder.hpp"
#include "revgan/seq_autoencoder.hpp"

namespace revgan {

/// Per-token multiplicative weights applied to the decoder distribution.
struct StyleVector {
    std::string user_id;
    std::vector<double> weights;
    std::size_t history_review_count = 0;

    bool is_identity() const;
};

StyleVector identity_style(std::size_t vocab_size, std::string user_id = {});

/// Add-one smoothed unigram frequencies over the user's history, scaled by the
/// number of regular tokens so that the mean regular weight is 1:
///   w_v = V * (count_v + 1) / (total + V)
/// Special tokens keep weight 1. An empty history yields the identity.
StyleVector build_style(const std::vector<const Document*>& history, const Vocabulary& vocab,
                        std::string user_id = {});

struct PersonalizedDistribution {
    std::vector<double> probs;
    /// Set when the weighted distribution summed to zero and `probs` is the input.
    bool degenerate = false;
};

/// probs ~ dist * style, renormalized. Identity style returns `dist` untouched.
/// Throws std::invalid_argument on a size mismatch.
PersonalizedDistribution personalize_step(std::span<const double> dist, const StyleVector& style);

/// Header "user<TAB>id<TAB>history<TAB>n<TAB>size<TAB>V<TAB>default<TAB>w", then
/// one "token_id<TAB>weight" line per token whose weight differs from w.
void save_style(const StyleVector& style, const std::filesystem::path& path);
StyleVector load_style(const std::filesystem::path& path);

enum class DecodeMode { greedy, sample, beam };

struct DecodeOptions {
    DecodeMode mode = DecodeMode::beam;
    std::size_t beam = 3;
    std::size_t max_len = default_max_len;
    std::uint64_t seed = 1;
};

/// Step model that reweights the sentence decoder's distribution by a style.
class PersonalizedModel {
public:
    using State = SentenceAutoencoder::DecoderModel::State;
    PersonalizedModel(const SentenceAutoencoder::DecoderModel& base, const StyleVector& style)
        : base_(base), style_(&style), identity_(style.is_identity()) {}
    State initial() const { return base_.initial(); }
    void step(const State& s, TokenId prev, State& next, std::vector<double>& log_probs) const;

private:
    SentenceAutoencoder::DecoderModel base_;
    const StyleVector* style_;
    bool identity_;
};

/// Unfolds the review embedding into sentence embeddings and decodes each one
/// with the style applied at every step. Sampling draws from one generator
/// seeded with options.seed, so a fixed seed reproduces the document.
Document decode_personalized(const SentenceAutoencoder& ae, const RecursiveAutoencoder& rae,
                             const ReviewEmbedding& review, const StyleVector& style, const DecodeOptions& options);

}  // namespace revgan
