#include "revgan/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace revgan {

namespace {

const std::string special_tokens[] = {"<pad>", "<sos>", "<eos>", "<unk>"};

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool closes(const std::string& tok) {
    return tok.size() == 1 && std::string_view(".,!?;:)]}%").find(tok[0]) != std::string_view::npos;
}

bool opens(const std::string& tok) { return tok == "(" || tok == "[" || tok == "{"; }

std::string parse_error(const nlohmann::json& j, RawRecord& out) {
    if (!j.is_object()) return "not a JSON object";
    for (const char* key : {"user_id", "product_id", "review_text", "description_text"}) {
        auto it = j.find(key);
        if (it == j.end()) return std::string("missing field ") + key;
        if (!it->is_string()) return std::string("field ") + key + " is not a string";
    }
    auto st = j.find("stars");
    if (st == j.end()) return "missing field stars";
    if (!st->is_number_integer()) return "field stars is not an integer";
    const long stars = st->get<long>();
    if (stars < 1 || stars > 5) return "stars out of range 1-5";
    out.user_id = j["user_id"].get<std::string>();
    out.product_id = j["product_id"].get<std::string>();
    out.review_text = j["review_text"].get<std::string>();
    out.description_text = j["description_text"].get<std::string>();
    out.stars = static_cast<int>(stars);
    if (trim(out.review_text).empty()) return "empty review_text";
    return {};
}

}  // namespace

Vocabulary::Vocabulary() {
    for (const auto& s : special_tokens) {
        token_to_id_.emplace(s, id_to_token_.size());
        id_to_token_.push_back(s);
    }
}

TokenId Vocabulary::add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    const TokenId id = id_to_token_.size();
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(token);
    return id;
}

TokenId Vocabulary::id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? unk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return token_to_id_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id >= id_to_token_.size()) throw std::out_of_range("Vocabulary: id out of range");
    return id_to_token_[id];
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (std::size_t i = special_count; i < id_to_token_.size(); ++i) {
        out += id_to_token_[i];
        out += '\n';
    }
    return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write vocabulary " + path.string());
    f << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read vocabulary " + path.string());
    Vocabulary v;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) throw InputError("vocabulary: empty line in " + path.string());
        if (v.contains(line)) throw InputError("vocabulary: duplicate token '" + line + "'");
        v.add(line);
    }
    return v;
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : serialize()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

LoadResult parse_records(std::string_view text) {
    LoadResult result;
    std::size_t nonblank = 0;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = trim(text.substr(pos, end - pos));
        ++line_no;
        pos = end + 1;
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        ++nonblank;
        RawRecord rec;
        std::string err;
        try {
            err = parse_error(nlohmann::json::parse(line), rec);
        } catch (const nlohmann::json::exception& e) {
            err = "invalid JSON";
        }
        if (err.empty()) {
            result.records.push_back(std::move(rec));
        } else {
            ++result.skipped;
            if (result.diagnostics.size() < 10) {
                result.diagnostics.push_back("line " + std::to_string(line_no) + ": " + err);
            }
        }
        if (end == text.size()) break;
    }
    if (nonblank > 0 && 2 * result.skipped > nonblank) {
        std::string msg = "more than half of the lines are malformed (" + std::to_string(result.skipped) +
                          " of " + std::to_string(nonblank) + ")";
        for (const auto& d : result.diagnostics) msg += "\n  " + d;
        throw InputError(msg);
    }
    return result;
}

LoadResult load_records(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    if (f.bad()) throw InputError("read failure on " + path.string());
    return parse_records(ss.str());
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!is_terminator(text[i])) {
            ++i;
            continue;
        }
        while (i < text.size() && is_terminator(text[i])) ++i;
        const auto piece = trim(text.substr(start, i - start));
        if (!piece.empty()) out.emplace_back(piece);
        start = i;
    }
    const auto rest = trim(text.substr(start));
    if (!rest.empty()) out.emplace_back(rest);
    return out;
}

std::vector<std::string> word_tokens(std::string_view sentence) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < sentence.size(); ++i) {
        const unsigned char c = static_cast<unsigned char>(sentence[i]);
        if (std::isspace(c)) {
            flush();
        } else if (c == '\'' && !cur.empty() && i + 1 < sentence.size() &&
                   std::isalnum(static_cast<unsigned char>(sentence[i + 1]))) {
            cur.push_back('\'');
        } else if (std::ispunct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

Sentence tokenize(std::string_view sentence, const Vocabulary& vocab, std::size_t max_len) {
    if (max_len < 1) throw std::invalid_argument("tokenize: max_len must be >= 1");
    Sentence s;
    for (const auto& w : word_tokens(sentence)) {
        if (s.token_ids.size() + 1 >= max_len) break;
        s.token_ids.push_back(vocab.id(w));
    }
    s.token_ids.push_back(Vocabulary::eos);
    return s;
}

std::string detokenize(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
    std::string out;
    bool glue_next = true;
    for (TokenId id : ids) {
        if (id == Vocabulary::eos) break;
        if (id == Vocabulary::pad || id == Vocabulary::sos) continue;
        const std::string& tok = vocab.token(id);
        if (!glue_next && !closes(tok)) out += ' ';
        out += tok;
        glue_next = opens(tok);
    }
    return out;
}

std::string detokenize(const Sentence& sentence, const Vocabulary& vocab) {
    return detokenize(sentence.token_ids, vocab);
}

Vocabulary build_vocab(const std::vector<RawRecord>& records, std::size_t cap) {
    if (records.empty()) throw InputError("build_vocab: empty corpus");
    std::map<std::string, std::size_t> counts;
    auto count_text = [&](const std::string& text) {
        for (const auto& s : split_sentences(text)) {
            for (auto& w : word_tokens(s)) ++counts[w];
        }
    };
    for (const auto& r : records) {
        count_text(r.review_text);
        count_text(r.description_text);
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (std::size_t i = 0; i < ranked.size() && i < cap; ++i) {
        if (v.contains(ranked[i].first)) continue;
        v.add(ranked[i].first);
    }
    return v;
}

Document make_document(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
    Document d;
    for (const auto& s : split_sentences(text)) d.sentences.push_back(tokenize(s, vocab, max_len));
    return d;
}

DocumentSet make_documents(const std::vector<RawRecord>& records, const Vocabulary& vocab,
                           std::size_t max_len) {
    DocumentSet set;
    for (const auto& r : records) {
        Document d = make_document(r.review_text, vocab, max_len);
        d.user_id = r.user_id;
        d.product_id = r.product_id;
        d.stars = r.stars;
        set.reviews.push_back(std::move(d));
        if (!set.descriptions.count(r.product_id) && !trim(r.description_text).empty()) {
            Document desc = make_document(r.description_text, vocab, max_len);
            desc.product_id = r.product_id;
            set.descriptions.emplace(r.product_id, std::move(desc));
        }
    }
    return set;
}

Batch make_batch(const std::vector<const Sentence*>& sentences) {
    Batch b;
    b.batch_size = sentences.size();
    for (const Sentence* s : sentences) {
        if (s->token_ids.empty()) throw std::invalid_argument("make_batch: empty sentence");
        b.padded_len = std::max(b.padded_len, s->token_ids.size());
        b.lengths.push_back(s->token_ids.size());
    }
    b.ids.assign(b.batch_size * b.padded_len, Vocabulary::pad);
    b.mask.assign(b.batch_size * b.padded_len, 0.0);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const auto& ids = sentences[i]->token_ids;
        for (std::size_t t = 0; t < ids.size(); ++t) {
            b.ids[i * b.padded_len + t] = ids[t];
            b.mask[i * b.padded_len + t] = 1.0;
        }
    }
    return b;
}

std::vector<Batch> make_batches(const std::vector<Sentence>& sentences, std::size_t batch_size,
                                std::uint64_t seed) {
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    std::vector<std::size_t> order(sentences.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::vector<const Sentence*> chunk;
        for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
            chunk.push_back(&sentences[order[i]]);
        }
        out.push_back(make_batch(chunk));
    }
    return out;
}

std::vector<Batch> make_batches(const std::vector<Document>& docs, std::size_t batch_size,
                                std::uint64_t seed) {
    std::vector<Sentence> all;
    for (const auto& d : docs) all.insert(all.end(), d.sentences.begin(), d.sentences.end());
    return make_batches(all, batch_size, seed);
}

}  // namespace revgan
