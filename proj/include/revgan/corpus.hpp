#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "revgan/types.hpp"

namespace revgan {

using TokenId = std::size_t;

struct RawRecord {
    std::string user_id;
    std::string product_id;
    std::string review_text;
    std::string description_text;
    int stars = 0;
};

struct LoadResult {
    std::vector<RawRecord> records;
    std::size_t skipped = 0;
    /// First few malformed-line diagnostics ("line N: reason").
    std::vector<std::string> diagnostics;
};

struct Sentence {
    std::vector<TokenId> token_ids;
    friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Document {
    std::vector<Sentence> sentences;
    std::string user_id;
    std::string product_id;
    Sentiment sentiment = Sentiment::neutral;
    int stars = 0;
    /// Neutral documents do not take part in sentiment-conditioned training.
    bool excluded = false;
};

class Vocabulary {
public:
    static constexpr TokenId pad = 0;
    static constexpr TokenId sos = 1;
    static constexpr TokenId eos = 2;
    static constexpr TokenId unk = 3;
    static constexpr std::size_t special_count = 4;

    Vocabulary();

    /// Appends a non-special token; returns its id (existing id if present).
    TokenId add(const std::string& token);
    TokenId id(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(TokenId id) const;
    std::size_t size() const { return id_to_token_.size(); }
    static bool is_special(TokenId id) { return id < special_count; }

    /// One non-special token per line; line number = id - 4.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);
    std::string serialize() const;
    /// FNV-1a over the serialized form; stored in checkpoints.
    std::uint64_t hash() const;

private:
    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
};

/// One JSON object per line with user_id, product_id, review_text,
/// description_text, stars. Throws InputError when the file cannot be read or
/// more than half of the non-blank lines are malformed.
LoadResult load_records(const std::filesystem::path& path);
/// Same as load_records over in-memory JSON-lines text.
LoadResult parse_records(std::string_view text);

/// Splits after every run of '.', '!' or '?'; pieces are whitespace-trimmed
/// and empty pieces dropped.
std::vector<std::string> split_sentences(std::string_view text);

/// Lowercases, separates punctuation into single-character tokens, splits on
/// whitespace. Apostrophes between letters stay inside the word.
std::vector<std::string> word_tokens(std::string_view sentence);

inline constexpr std::size_t default_max_len = 32;
inline constexpr std::size_t default_vocab_cap = 10000;

/// Maps words to ids (unknown -> unk), truncates to max_len - 1 and appends eos.
Sentence tokenize(std::string_view sentence, const Vocabulary& vocab,
                  std::size_t max_len = default_max_len);

/// Inverse of tokenize for in-vocabulary text: drops specials after eos,
/// attaches closing punctuation to the previous word.
std::string detokenize(const Sentence& sentence, const Vocabulary& vocab);
std::string detokenize(const std::vector<TokenId>& ids, const Vocabulary& vocab);

/// Frequency-ranked vocabulary over review and description text.
/// Ties are broken lexicographically; at most `cap` non-special tokens.
Vocabulary build_vocab(const std::vector<RawRecord>& records, std::size_t cap = default_vocab_cap);

Document make_document(std::string_view text, const Vocabulary& vocab,
                       std::size_t max_len = default_max_len);

struct DocumentSet {
    std::vector<Document> reviews;
    /// One description document per product, keyed by product id.
    std::map<std::string, Document> descriptions;
};

DocumentSet make_documents(const std::vector<RawRecord>& records, const Vocabulary& vocab,
                           std::size_t max_len = default_max_len);

struct Batch {
    std::size_t batch_size = 0;
    std::size_t padded_len = 0;
    /// batch_size x padded_len, row-major, pad-filled.
    std::vector<TokenId> ids;
    std::vector<std::size_t> lengths;
    /// 1 at real tokens, 0 at padding; same layout as ids.
    std::vector<double> mask;

    TokenId at(std::size_t b, std::size_t t) const { return ids[b * padded_len + t]; }
};

Batch make_batch(const std::vector<const Sentence*>& sentences);

/// Shuffles all sentences of `docs` with `seed` and chunks them into batches.
std::vector<Batch> make_batches(const std::vector<Document>& docs, std::size_t batch_size,
                                std::uint64_t seed);
std::vector<Batch> make_batches(const std::vector<Sentence>& sentences, std::size_t batch_size,
                                std::uint64_t seed);

}  // namespace revgan
