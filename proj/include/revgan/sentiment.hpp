#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "revgan/corpus.hpp"
#include "revgan/types.hpp"

namespace revgan {

/// Word valences plus the negation and intensity rules of a simplified
/// VADER-style scorer.
struct Lexicon {
    std::unordered_map<std::string, double> valence;
    std::set<std::string> negators;
    std::unordered_map<std::string, double> intensifiers;

    static constexpr double negation_scalar = -0.74;
    static constexpr std::size_t negation_window = 3;
    static constexpr double normalization_alpha = 15.0;
    static constexpr double default_threshold = 0.05;
    /// |compound| at or above this is polar.
    double threshold = default_threshold;

    /// Tab-separated "token<TAB>valence" lines; '#' starts a comment line.
    /// Negators and intensifiers get the built-in English defaults.
    static Lexicon load(const std::filesystem::path& path);
    static Lexicon parse(std::string_view text);

    static std::set<std::string> default_negators();
    static std::unordered_map<std::string, double> default_intensifiers();
};

struct SentimentLabel {
    double compound = 0.0;
    Sentiment label = Sentiment::neutral;
};

/// Sum of per-word valences after adjustment: an intensifier directly before a
/// scored word multiplies it; a negator among the 3 preceding words of the same
/// sentence multiplies it by -0.74. compound = S / sqrt(S^2 + 15).
SentimentLabel score(std::string_view text, const Lexicon& lex);

Sentiment label_for(double compound, double threshold = Lexicon::default_threshold);

struct LabelStats {
    std::size_t positive = 0;
    std::size_t negative = 0;
    std::size_t neutral = 0;
};

/// Scores every document's detokenized text, sets its sentiment and marks
/// neutral documents as excluded from conditioning.
LabelStats label_corpus(std::vector<Document>& docs, const Vocabulary& vocab, const Lexicon& lex);

std::string document_text(const Document& doc, const Vocabulary& vocab);

}  // namespace revgan
