#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "revgan/corpus.hpp"

namespace revgan {

/// Toy review corpus whose positive and negative reviews draw their polar
/// words from disjoint word lists. One user ("marked_user") prefers a small
/// subset of those words, which gives the personalization path something to
/// pick up.
struct SyntheticConfig {
    std::size_t products = 4;
    std::size_t users = 6;
    std::size_t reviews = 120;
    /// Chance of a third, sentiment-free sentence whose object comes from a
    /// 40-word pool drawn with a Zipf exponent of 1.
    double filler_rate = 0.5;
    /// Polar words are drawn with probability proportional to 1 / rank^word_skew.
    double word_skew = 1.5;
    std::uint64_t seed = 1;
};

struct SyntheticCorpus {
    std::vector<RawRecord> records;
    /// "token<TAB>valence" lines covering exactly the polar words.
    std::string lexicon_text;
    std::string marked_user;
    std::set<std::string> marked_words;
    std::set<std::string> positive_words;
    std::set<std::string> negative_words;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config);

/// One JSON object per record, in the format load_records reads.
std::string to_jsonl(const std::vector<RawRecord>& records);

}  // namespace revgan
