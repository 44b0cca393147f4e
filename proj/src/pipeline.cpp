#include "revgan/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "revgan/checkpoint.hpp"
#include "revgan/sentiment.hpp"
#include "revgan/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace revgan {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw InputError("config: " + key + " expects a number, got '" + v + "'");
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw InputError("config: " + key + " expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InputError("config: " + key + " expects true or false, got '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string decode_mode_name(DecodeMode m) {
    switch (m) {
        case DecodeMode::greedy: return "greedy";
        case DecodeMode::sample: return "sample";
        case DecodeMode::beam: return "beam";
    }
    return "beam";
}

struct Key {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<Key>& key_table() {
    static const std::vector<Key> table = [] {
        std::vector<Key> t;
        auto add = [&t](std::string name, auto get, auto set) { t.push_back({std::move(name), get, set}); };
        auto u = [](const std::string& k, const std::string& v) { return parse_uint(k, v); };
        auto d = [](const std::string& k, const std::string& v) { return parse_double(k, v); };
        auto b = [](const std::string& k, const std::string& v) { return parse_bool(k, v); };
        auto i = [](const std::string& k, const std::string& v) {
            const auto x = parse_uint(k, v);
            if (x > 1000000000ULL) throw InputError("config: " + k + " is too large");
            return static_cast<int>(x);
        };

        add("corpus", [](const RunConfig& c) { return c.corpus.string(); },
            [](RunConfig& c, const std::string& v) { c.corpus = v; });
        add("lexicon", [](const RunConfig& c) { return c.lexicon.string(); },
            [](RunConfig& c, const std::string& v) { c.lexicon = v; });
        add("out_dir", [](const RunConfig& c) { return c.out_dir.string(); },
            [](RunConfig& c, const std::string& v) { c.out_dir = v; });
        add("seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [u](RunConfig& c, const std::string& v) { c.seed = u("seed", v); });
        add("vocab_cap", [](const RunConfig& c) { return std::to_string(c.vocab_cap); },
            [u](RunConfig& c, const std::string& v) { c.vocab_cap = u("vocab_cap", v); });
        add("max_len", [](const RunConfig& c) { return std::to_string(c.sentence.max_len); },
            [u](RunConfig& c, const std::string& v) {
                c.sentence.max_len = u("max_len", v);
                if (c.sentence.max_len < 2) throw InputError("config: max_len must be at least 2");
            });
        add("sentiment.threshold", [](const RunConfig& c) { return fmt_double(c.sentiment_threshold); },
            [d](RunConfig& c, const std::string& v) { c.sentiment_threshold = d("sentiment.threshold", v); });
        add("dim", [](const RunConfig& c) { return std::to_string(c.sentence.hidden_dim); },
            [u](RunConfig& c, const std::string& v) {
                const auto x = u("dim", v);
                if (x == 0) throw InputError("config: dim must be positive");
                c.sentence.embed_dim = c.sentence.hidden_dim = c.gan.dim = x;
            });
        add("noise_dim", [](const RunConfig& c) { return std::to_string(c.gan.noise_dim); },
            [u](RunConfig& c, const std::string& v) { c.gan.noise_dim = u("noise_dim", v); });
        add("init_range", [](const RunConfig& c) { return fmt_double(c.sentence.init_range); },
            [d](RunConfig& c, const std::string& v) { c.sentence.init_range = d("init_range", v); });
        add("halve_every", [](const RunConfig& c) { return std::to_string(c.sentence_train.halve_every); },
            [i](RunConfig& c, const std::string& v) {
                c.sentence_train.halve_every = c.recursive_train.halve_every = i("halve_every", v);
            });
        add("clip", [](const RunConfig& c) { return fmt_double(c.sentence_train.clip_norm); },
            [d](RunConfig& c, const std::string& v) {
                c.sentence_train.clip_norm = c.recursive_train.clip_norm = d("clip", v);
            });
        add("batch", [](const RunConfig& c) { return std::to_string(c.sentence_train.batch_size); },
            [u](RunConfig& c, const std::string& v) {
                const auto x = u("batch", v);
                if (x == 0) throw InputError("config: batch must be positive");
                c.sentence_train.batch_size = c.recursive_train.batch_size = c.gan.batch_size = x;
            });
        add("sentence.epochs", [](const RunConfig& c) { return std::to_string(c.sentence_train.epochs); },
            [i](RunConfig& c, const std::string& v) { c.sentence_train.epochs = i("sentence.epochs", v); });
        add("sentence.lr", [](const RunConfig& c) { return fmt_double(c.sentence_train.learning_rate); },
            [d](RunConfig& c, const std::string& v) { c.sentence_train.learning_rate = d("sentence.lr", v); });
        add("sentence.attention", [](const RunConfig& c) { return std::string(c.sentence.use_attention ? "true" : "false"); },
            [b](RunConfig& c, const std::string& v) { c.sentence.use_attention = b("sentence.attention", v); });
        add("sentence.attention_clip", [](const RunConfig& c) { return std::to_string(c.sentence.attention_clip); },
            [u](RunConfig& c, const std::string& v) { c.sentence.attention_clip = u("sentence.attention_clip", v); });
        add("recursive.epochs", [](const RunConfig& c) { return std::to_string(c.recursive_train.epochs); },
            [i](RunConfig& c, const std::string& v) { c.recursive_train.epochs = i("recursive.epochs", v); });
        add("recursive.lr", [](const RunConfig& c) { return fmt_double(c.recursive_train.learning_rate); },
            [d](RunConfig& c, const std::string& v) { c.recursive_train.learning_rate = d("recursive.lr", v); });
        add("gan.hidden", [](const RunConfig& c) { return std::to_string(c.gan.hidden); },
            [u](RunConfig& c, const std::string& v) { c.gan.hidden = u("gan.hidden", v); });
        add("gan.init_std", [](const RunConfig& c) { return fmt_double(c.gan.init_std); },
            [d](RunConfig& c, const std::string& v) { c.gan.init_std = d("gan.init_std", v); });
        add("gan.lr_generator", [](const RunConfig& c) { return fmt_double(c.gan.lr_generator); },
            [d](RunConfig& c, const std::string& v) { c.gan.lr_generator = d("gan.lr_generator", v); });
        add("gan.lr_discriminator", [](const RunConfig& c) { return fmt_double(c.gan.lr_discriminator); },
            [d](RunConfig& c, const std::string& v) { c.gan.lr_discriminator = d("gan.lr_discriminator", v); });
        add("gan.generator_steps", [](const RunConfig& c) { return std::to_string(c.gan.generator_steps); },
            [i](RunConfig& c, const std::string& v) { c.gan.generator_steps = i("gan.generator_steps", v); });
        add("gan.discriminator_steps", [](const RunConfig& c) { return std::to_string(c.gan.discriminator_steps); },
            [i](RunConfig& c, const std::string& v) { c.gan.discriminator_steps = i("gan.discriminator_steps", v); });
        add("gan.total_updates", [](const RunConfig& c) { return std::to_string(c.gan.total_updates); },
            [u](RunConfig& c, const std::string& v) { c.gan.total_updates = u("gan.total_updates", v); });
        add("gan.lambda", [](const RunConfig& c) { return fmt_double(c.gan.lambda); },
            [d](RunConfig& c, const std::string& v) { c.gan.lambda = d("gan.lambda", v); });
        add("gan.mismatch_ratio", [](const RunConfig& c) { return fmt_double(c.gan.mismatch_ratio); },
            [d](RunConfig& c, const std::string& v) {
                c.gan.mismatch_ratio = d("gan.mismatch_ratio", v);
                if (!(c.gan.mismatch_ratio >= 0.0)) throw InputError("config: gan.mismatch_ratio must be non-negative");
            });
        add("gan.eps", [](const RunConfig& c) { return fmt_double(c.gan.eps); },
            [d](RunConfig& c, const std::string& v) { c.gan.eps = d("gan.eps", v); });
        add("gan.probe_every", [](const RunConfig& c) { return std::to_string(c.gan.probe_every); },
            [u](RunConfig& c, const std::string& v) { c.gan.probe_every = u("gan.probe_every", v); });
        add("gan.conditioned", [](const RunConfig& c) { return std::string(c.gan.conditioned ? "true" : "false"); },
            [b](RunConfig& c, const std::string& v) { c.gan.conditioned = b("gan.conditioned", v); });
        add("decode.mode", [](const RunConfig& c) { return decode_mode_name(c.decode.mode); },
            [](RunConfig& c, const std::string& v) {
                if (v == "greedy") c.decode.mode = DecodeMode::greedy;
                else if (v == "sample") c.decode.mode = DecodeMode::sample;
                else if (v == "beam") c.decode.mode = DecodeMode::beam;
                else throw InputError("config: decode.mode must be greedy, sample or beam, got '" + v + "'");
            });
        add("decode.beam", [](const RunConfig& c) { return std::to_string(c.decode.beam); },
            [u](RunConfig& c, const std::string& v) {
                c.decode.beam = u("decode.beam", v);
                if (c.decode.beam == 0) throw InputError("config: decode.beam must be at least 1");
            });
        add("decode.max_len", [](const RunConfig& c) { return std::to_string(c.decode.max_len); },
            [u](RunConfig& c, const std::string& v) { c.decode.max_len = u("decode.max_len", v); });
        add("metrics.bleu_smoothing", [](const RunConfig& c) { return std::string(c.bleu_smoothing ? "true" : "false"); },
            [b](RunConfig& c, const std::string& v) { c.bleu_smoothing = b("metrics.bleu_smoothing", v); });
        add("metrics.bootstrap", [](const RunConfig& c) { return std::to_string(c.bootstrap_resamples); },
            [u](RunConfig& c, const std::string& v) {
                c.bootstrap_resamples = u("metrics.bootstrap", v);
                if (c.bootstrap_resamples < 100) throw InputError("config: metrics.bootstrap must be at least 100");
            });
        add("metrics.wmd_references", [](const RunConfig& c) { return std::to_string(c.wmd_references); },
            [u](RunConfig& c, const std::string& v) { c.wmd_references = u("metrics.wmd_references", v); });
        return t;
    }();
    return table;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path.string());
    f << text;
    if (!f) throw InputError("write failure on " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void mark_done(const fs::path& dir) { write_text(dir / "DONE", ""); }

fs::path require_stage(const RunConfig& cfg, const std::string& stage, const std::string& how) {
    auto dir = latest_done(cfg.out_dir / stage);
    if (!dir) throw PrerequisiteError("no completed " + stage + " run under " + cfg.out_dir.string() + "; run `" + how + "` first");
    return *dir;
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

json sentences_json(const Document& d) {
    json out = json::array();
    for (const auto& s : d.sentences) out.push_back(s.token_ids);
    return out;
}

std::vector<Sentence> sentences_from(const json& j) {
    std::vector<Sentence> out;
    for (const auto& s : j) out.push_back(Sentence{s.get<std::vector<TokenId>>()});
    return out;
}

void check_vocab(const Checkpoint& ck, const Vocabulary& vocab, const std::string& what) {
    if (!ck.meta.contains("vocab_hash") || ck.meta["vocab_hash"].get<std::uint64_t>() != vocab.hash()) {
        throw PrerequisiteError(what + " checkpoint was trained on a different vocabulary; retrain it after the latest ingest");
    }
}

Lexicon load_lexicon(const RunConfig& cfg) {
    if (cfg.lexicon.empty()) throw InputError("config: lexicon path is not set");
    Lexicon lex = Lexicon::load(cfg.lexicon);
    lex.threshold = cfg.sentiment_threshold;
    return lex;
}

SentenceAutoencoder load_sentence(const fs::path& dir, const Vocabulary& vocab) {
    const Checkpoint ck = Checkpoint::load(dir / "model.ckpt");
    check_vocab(ck, vocab, "sentence");
    return SentenceAutoencoder::load(ck);
}

std::vector<SentenceEmbedding> embed_sentences(const SentenceAutoencoder& ae, const Document& d) {
    std::vector<const Sentence*> ptrs;
    for (const auto& s : d.sentences) ptrs.push_back(&s);
    if (ptrs.empty()) return {};
    const Matrix m = ae.encode_batch(make_batch(ptrs));
    std::vector<SentenceEmbedding> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        out[i].assign(r.begin(), r.end());
    }
    return out;
}

std::string csv_line(std::initializer_list<std::string> cells) {
    std::string out;
    for (const auto& c : cells) {
        if (!out.empty()) out += ',';
        out += c;
    }
    return out + '\n';
}

Tokens doc_tokens(const Document& d, const Vocabulary& vocab) {
    Tokens out;
    for (const auto& s : d.sentences) {
        const Tokens t = regular_tokens(s.token_ids, vocab);
        out.insert(out.end(), t.begin(), t.end());
    }
    return out;
}

std::vector<TokenId> regular_ids(const Document& d) {
    std::vector<TokenId> out;
    for (const auto& s : d.sentences) {
        for (TokenId t : s.token_ids) {
            if (t == Vocabulary::eos) break;
            if (!Vocabulary::is_special(t)) out.push_back(t);
        }
    }
    return out;
}

LawReport fit_laws(const std::string& name, const std::vector<std::size_t>& stream, const fs::path& dir) {
    LawReport rep;
    rep.corpus = name;
    std::unordered_map<std::size_t, std::size_t> counts;
    for (auto t : stream) ++counts[t];
    std::vector<std::size_t> c;
    for (const auto& [tok, n] : counts) c.push_back(n);
    try {
        rep.zipf = fit_zipf(c);
        write_law_csv(*rep.zipf, dir / ("zipf_" + name + ".csv"));
    } catch (const InputError& e) {
        rep.errors.push_back(e.what());
    }
    try {
        rep.heaps = fit_heaps(stream);
        write_law_csv(*rep.heaps, dir / ("heaps_" + name + ".csv"));
    } catch (const InputError& e) {
        rep.errors.push_back(e.what());
    }
    return rep;
}

json law_json(const LawReport& r) {
    json j;
    j["corpus"] = r.corpus;
    auto fit = [](const std::optional<LawFit>& f) -> json {
        if (!f) return nullptr;
        return json{{"exponent", f->exponent}, {"prefactor", f->prefactor}, {"r2", f->r2}, {"points", f->points.size()}};
    };
    j["zipf"] = fit(r.zipf);
    j["heaps"] = fit(r.heaps);
    j["errors"] = r.errors;
    return j;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const auto& k : key_table()) {
        if (k.name == key) {
            k.set(*this, value);
            return;
        }
    }
    throw InputError("config: unknown key '" + key + "'");
}

void RunConfig::load_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot read config " + path.string());
    std::string line;
    for (std::size_t no = 1; std::getline(f, line); ++no) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InputError(path.string() + ":" + std::to_string(no) + ": expected 'key = value'");
        }
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string RunConfig::to_kv() const {
    std::string out;
    for (const auto& k : key_table()) out += k.name + " = " + k.get(*this) + "\n";
    return out;
}

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name);
    return out;
}

Stage parse_stage(const std::string& s) {
    if (s == "sentence") return Stage::sentence;
    if (s == "recursive") return Stage::recursive;
    if (s == "gan") return Stage::gan;
    throw InputError("unknown stage '" + s + "'; expected sentence, recursive or gan");
}

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::sentence: return "sentence";
        case Stage::recursive: return "recursive";
        case Stage::gan: return "gan";
    }
    return "sentence";
}

fs::path next_run_dir(const fs::path& root) {
    fs::create_directories(root);
    std::size_t highest = 0;
    for (const auto& e : fs::directory_iterator(root)) {
        const std::string n = e.path().filename().string();
        std::size_t v = 0;
        const auto [p, ec] = std::from_chars(n.data(), n.data() + n.size(), v);
        if (ec == std::errc() && p == n.data() + n.size()) highest = std::max(highest, v);
    }
    std::ostringstream name;
    name << std::setw(3) << std::setfill('0') << highest + 1;
    const fs::path dir = root / name.str();
    fs::create_directory(dir);
    return dir;
}

std::optional<fs::path> latest_done(const fs::path& root) {
    if (!fs::is_directory(root)) return std::nullopt;
    std::optional<fs::path> best;
    std::size_t best_n = 0;
    for (const auto& e : fs::directory_iterator(root)) {
        const std::string n = e.path().filename().string();
        std::size_t v = 0;
        const auto [p, ec] = std::from_chars(n.data(), n.data() + n.size(), v);
        if (ec != std::errc() || p != n.data() + n.size()) continue;
        if (!fs::exists(e.path() / "DONE")) continue;
        if (!best || v > best_n) {
            best = e.path();
            best_n = v;
        }
    }
    return best;
}

CorpusArtifacts load_ingest(const fs::path& dir) {
    CorpusArtifacts out;
    out.vocab = Vocabulary::load(dir / "vocab.txt");
    try {
        std::istringstream docs(read_text(dir / "documents.jsonl"));
        for (std::string line; std::getline(docs, line);) {
            const json j = json::parse(line);
            Document d;
            d.user_id = j.at("user_id");
            d.product_id = j.at("product_id");
            d.stars = j.at("stars");
            d.sentiment = parse_sentiment(j.at("sentiment").get<std::string>());
            d.excluded = j.at("excluded");
            d.sentences = sentences_from(j.at("sentences"));
            out.reviews.push_back(std::move(d));
        }
        std::istringstream descs(read_text(dir / "descriptions.jsonl"));
        for (std::string line; std::getline(descs, line);) {
            const json j = json::parse(line);
            Document d;
            d.product_id = j.at("product_id");
            d.sentences = sentences_from(j.at("sentences"));
            out.descriptions[d.product_id] = std::move(d);
        }
    } catch (const json::exception& e) {
        throw InputError("corrupt ingest artifacts in " + dir.string() + ": " + e.what());
    }
    return out;
}

fs::path run_ingest(const RunConfig& cfg) {
    if (cfg.corpus.empty()) throw InputError("config: corpus path is not set");
    const LoadResult loaded = load_records(cfg.corpus);
    if (loaded.records.empty()) throw InputError("corpus " + cfg.corpus.string() + " has no usable records");
    const Lexicon lex = load_lexicon(cfg);
    const Vocabulary vocab = build_vocab(loaded.records, cfg.vocab_cap);
    DocumentSet docs = make_documents(loaded.records, vocab, cfg.sentence.max_len);
    const LabelStats labels = label_corpus(docs.reviews, vocab, lex);

    const fs::path dir = next_run_dir(cfg.out_dir / "ingest");
    vocab.save(dir / "vocab.txt");
    std::string lines;
    std::size_t sentences = 0, tokens = 0;
    std::set<std::string> users;
    for (const auto& d : docs.reviews) {
        json j{{"user_id", d.user_id},
               {"product_id", d.product_id},
               {"stars", d.stars},
               {"sentiment", std::string(to_string(d.sentiment))},
               {"excluded", d.excluded},
               {"sentences", sentences_json(d)}};
        lines += j.dump() + "\n";
        sentences += d.sentences.size();
        for (const auto& s : d.sentences) tokens += s.token_ids.size();
        users.insert(d.user_id);
    }
    write_text(dir / "documents.jsonl", lines);
    lines.clear();
    for (const auto& [pid, d] : docs.descriptions) {
        lines += json{{"product_id", pid}, {"sentences", sentences_json(d)}}.dump() + "\n";
    }
    write_text(dir / "descriptions.jsonl", lines);

    json manifest;
    manifest["corpus"] = cfg.corpus.string();
    manifest["documents"] = docs.reviews.size();
    manifest["sentences"] = sentences;
    manifest["tokens"] = tokens;
    manifest["products"] = docs.descriptions.size();
    manifest["users"] = users.size();
    manifest["skipped_lines"] = loaded.skipped;
    manifest["diagnostics"] = loaded.diagnostics;
    manifest["vocab_size"] = vocab.size();
    manifest["vocab_hash"] = vocab.hash();
    manifest["labels"] = {{"positive", labels.positive}, {"negative", labels.negative}, {"neutral", labels.neutral}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    write_text(dir / "config.txt", cfg.to_kv());
    mark_done(dir);
    return dir;
}

fs::path run_train(const RunConfig& cfg, Stage stage) {
    const fs::path ingest_dir = require_stage(cfg, "ingest", "revgan ingest");
    const CorpusArtifacts corpus = load_ingest(ingest_dir);

    if (stage == Stage::sentence) {
        std::vector<Sentence> sentences;
        for (const auto& d : corpus.reviews) sentences.insert(sentences.end(), d.sentences.begin(), d.sentences.end());
        for (const auto& [pid, d] : corpus.descriptions) {
            sentences.insert(sentences.end(), d.sentences.begin(), d.sentences.end());
        }
        if (sentences.empty()) throw InputError("ingested corpus has no sentences");
        SentenceAutoencoder ae(corpus.vocab.size(), cfg.sentence, cfg.seed);
        SeqTrainConfig tc = cfg.sentence_train;
        tc.seed = cfg.seed;
        const TrainHistory hist = ae.train(sentences, tc);
        const fs::path dir = next_run_dir(cfg.out_dir / "sentence");
        std::string csv = "epoch,loss,learning_rate,max_grad_norm\n";
        for (std::size_t e = 0; e < hist.epoch_loss.size(); ++e) {
            csv += csv_line({std::to_string(e + 1), fmt_double(hist.epoch_loss[e]), fmt_double(hist.learning_rate[e]),
                             fmt_double(hist.max_grad_norm[e])});
        }
        write_text(dir / "loss.csv", csv);
        Checkpoint ck;
        ae.save(ck);
        ck.meta["vocab_hash"] = corpus.vocab.hash();
        ck.save(dir / "model.ckpt");
        write_text(dir / "config.txt", cfg.to_kv());
        mark_done(dir);
        return dir;
    }

    const fs::path sentence_dir = require_stage(cfg, "sentence", "revgan train --stage sentence");
    const SentenceAutoencoder ae = load_sentence(sentence_dir, corpus.vocab);

    if (stage == Stage::recursive) {
        std::vector<std::vector<SentenceEmbedding>> reviews;
        for (const auto& d : corpus.reviews) reviews.push_back(embed_sentences(ae, d));
        RecursiveAutoencoder rae(ae.embedding_dim(), cfg.seed + 1, cfg.sentence.init_range);
        RecursiveTrainConfig tc = cfg.recursive_train;
        tc.seed = cfg.seed + 1;
        const std::vector<double> losses = rae.train(reviews, tc);
        const fs::path dir = next_run_dir(cfg.out_dir / "recursive");
        std::string csv = "epoch,loss\n";
        for (std::size_t e = 0; e < losses.size(); ++e) csv += csv_line({std::to_string(e + 1), fmt_double(losses[e])});
        write_text(dir / "loss.csv", csv);
        Checkpoint ck;
        rae.save(ck);
        ck.meta["vocab_hash"] = corpus.vocab.hash();
        ck.save(dir / "model.ckpt");
        write_text(dir / "config.txt", cfg.to_kv());
        mark_done(dir);
        return dir;
    }

    const fs::path recursive_dir = require_stage(cfg, "recursive", "revgan train --stage recursive");
    const Checkpoint rck = Checkpoint::load(recursive_dir / "model.ckpt");
    check_vocab(rck, corpus.vocab, "recursive");
    const RecursiveAutoencoder rae = RecursiveAutoencoder::load(rck);

    std::vector<TrainingPair> pairs;
    std::map<std::string, std::vector<double>> desc_cache;
    for (const auto& d : corpus.reviews) {
        if (d.excluded || d.sentences.empty()) continue;
        auto it = desc_cache.find(d.product_id);
        if (it == desc_cache.end()) {
            auto dit = corpus.descriptions.find(d.product_id);
            if (dit == corpus.descriptions.end() || dit->second.sentences.empty()) continue;
            it = desc_cache.emplace(d.product_id, rae.encode(embed_sentences(ae, dit->second)).vector).first;
        }
        TrainingPair p;
        p.description = it->second;
        p.review = rae.encode(embed_sentences(ae, d)).vector;
        p.sentiment = d.sentiment;
        p.sentence_count = d.sentences.size();
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw InputError("no labelled review with a product description to train the GAN on");

    GanConfig gc = cfg.gan;
    gc.dim = ae.embedding_dim();
    gc.seed = cfg.seed + 2;
    ConditionalGan gan(gc);
    const fs::path dir = next_run_dir(cfg.out_dir / "gan");
    write_text(dir / "config.txt", cfg.to_kv());
    GanHistory partial;
    try {
        const GanHistory hist = gan.train(pairs, [&partial](const GanProbe& p) { partial.probes.push_back(p); });
        write_probes_csv(hist, dir / "probes.csv");
    } catch (const NumericalError&) {
        write_probes_csv(partial, dir / "probes.csv");
        Checkpoint ck;
        gan.save(ck);
        ck.meta["vocab_hash"] = corpus.vocab.hash();
        ck.save(dir / "last_good.ckpt");
        throw;
    }
    Checkpoint ck;
    gan.save(ck);
    ck.meta["vocab_hash"] = corpus.vocab.hash();
    ck.save(dir / "model.ckpt");
    mark_done(dir);
    return dir;
}

fs::path run_generate(const RunConfig& cfg, const GenerateRequest& request, std::ostream& warnings) {
    const fs::path ingest_dir = require_stage(cfg, "ingest", "revgan ingest");
    const fs::path sentence_dir = require_stage(cfg, "sentence", "revgan train --stage sentence");
    const fs::path recursive_dir = require_stage(cfg, "recursive", "revgan train --stage recursive");
    const fs::path gan_dir = require_stage(cfg, "gan", "revgan train --stage gan");
    const CorpusArtifacts corpus = load_ingest(ingest_dir);
    const SentenceAutoencoder ae = load_sentence(sentence_dir, corpus.vocab);
    const Checkpoint rck = Checkpoint::load(recursive_dir / "model.ckpt");
    check_vocab(rck, corpus.vocab, "recursive");
    const RecursiveAutoencoder rae = RecursiveAutoencoder::load(rck);
    const Checkpoint gck = Checkpoint::load(gan_dir / "model.ckpt");
    check_vocab(gck, corpus.vocab, "gan");
    const ConditionalGan gan = ConditionalGan::load(gck);

    struct Job {
        std::string product, user;
        Sentiment sentiment;
    };
    std::vector<Job> jobs;
    if (request.from_corpus) {
        for (const auto& d : corpus.reviews) {
            if (!d.excluded) jobs.push_back({d.product_id, d.user_id, d.sentiment});
        }
    } else {
        if (request.sentiment == Sentiment::neutral) throw InputError("generation sentiment must be positive or negative");
        if (!corpus.descriptions.count(request.product_id)) {
            throw InputError("unknown product id '" + request.product_id + "'");
        }
        for (std::size_t i = 0; i < request.n; ++i) jobs.push_back({request.product_id, request.user_id, request.sentiment});
    }

    std::map<std::string, std::vector<const Document*>> history;
    for (const auto& d : corpus.reviews) history[d.user_id].push_back(&d);
    std::map<std::string, StyleVector> styles;
    std::set<std::string> warned;
    auto style_for = [&](const std::string& user) -> const StyleVector& {
        auto it = styles.find(user);
        if (it != styles.end()) return it->second;
        auto h = history.find(user);
        if (user.empty() || h == history.end()) {
            if (!user.empty() && warned.insert(user).second) {
                warnings << "warning: user '" << user << "' has no review history; using the identity style\n";
            }
            return styles.emplace(user, identity_style(corpus.vocab.size(), user)).first->second;
        }
        return styles.emplace(user, build_style(h->second, corpus.vocab, user)).first->second;
    };
    std::map<std::string, ReviewEmbedding> desc_cache;

    const fs::path dir = next_run_dir(cfg.out_dir / "generate");
    std::string text_out, jsonl_out;
    std::size_t personalized = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const Job& job = jobs[i];
        auto dit = desc_cache.find(job.product);
        if (dit == desc_cache.end()) {
            const Document& desc = corpus.descriptions.at(job.product);
            if (desc.sentences.empty()) throw InputError("product '" + job.product + "' has an empty description");
            dit = desc_cache.emplace(job.product, rae.encode(embed_sentences(ae, desc))).first;
        }
        std::mt19937_64 rng(mix(cfg.seed ^ mix(i)));
        const ReviewEmbedding review = gan.generate(dit->second, job.sentiment, rng);
        const StyleVector& style = style_for(job.user);
        DecodeOptions opt = cfg.decode;
        opt.seed = mix(cfg.seed + 0x51ed270b27c3a4f1ULL + i);
        const Document doc = decode_personalized(ae, rae, review, style, opt);
        const bool is_personal = !style.is_identity();
        personalized += is_personal;
        const std::string text = document_text(doc, corpus.vocab);
        text_out += text + "\n";
        jsonl_out += json{{"index", i},
                          {"product_id", job.product},
                          {"sentiment", std::string(to_string(job.sentiment))},
                          {"user_id", job.user},
                          {"personalized", is_personal},
                          {"text", text},
                          {"sentences", sentences_json(doc)}}
                         .dump() +
                     "\n";
    }
    write_text(dir / "reviews.txt", text_out);
    write_text(dir / "generated.jsonl", jsonl_out);

    json sidecar;
    if (request.from_corpus) {
        sidecar["mode"] = "corpus";
    } else {
        sidecar["mode"] = "request";
        sidecar["product_id"] = request.product_id;
        sidecar["sentiment"] = std::string(to_string(request.sentiment));
        sidecar["user_id"] = request.user_id.empty() ? json(nullptr) : json(request.user_id);
        const StyleVector& s = style_for(request.user_id);
        sidecar["history_reviews"] = s.history_review_count;
    }
    sidecar["n"] = jobs.size();
    sidecar["seed"] = cfg.seed;
    sidecar["personalized"] = personalized > 0;
    sidecar["personalized_count"] = personalized;
    sidecar["decode_mode"] = decode_mode_name(cfg.decode.mode);
    sidecar["beam"] = cfg.decode.beam;
    sidecar["conditioned"] = gan.config().conditioned;
    sidecar["vocab_hash"] = corpus.vocab.hash();
    write_text(dir / "sidecar.json", sidecar.dump(2) + "\n");
    write_text(dir / "config.txt", cfg.to_kv());
    mark_done(dir);
    return dir;
}

std::vector<GeneratedReview> load_generated(const fs::path& dir, const Vocabulary& vocab) {
    std::vector<GeneratedReview> out;
    std::istringstream in(read_text(dir / "generated.jsonl"));
    try {
        for (std::string line; std::getline(in, line);) {
            const json j = json::parse(line);
            GeneratedReview g;
            g.product_id = j.at("product_id");
            g.sentiment = parse_sentiment(j.at("sentiment").get<std::string>());
            g.user_id = j.at("user_id");
            g.personalized = j.at("personalized");
            g.text = j.at("text");
            g.document.sentences = sentences_from(j.at("sentences"));
            g.document.product_id = g.product_id;
            g.document.user_id = g.user_id;
            g.document.sentiment = g.sentiment;
            for (const auto& s : g.document.sentences) {
                for (TokenId t : s.token_ids) {
                    if (t >= vocab.size()) throw InputError("generated token id out of vocabulary range in " + dir.string());
                }
            }
            out.push_back(std::move(g));
        }
    } catch (const json::exception& e) {
        throw InputError("corrupt generation file in " + dir.string() + ": " + e.what());
    }
    return out;
}

EvaluateOutcome run_evaluate(const RunConfig& cfg, const EvaluateRequest& request) {
    std::vector<std::string> missing;
    const auto ingest_dir = latest_done(cfg.out_dir / "ingest");
    if (!ingest_dir) missing.push_back("no completed ingest run (run `revgan ingest`)");
    const auto sentence_dir = latest_done(cfg.out_dir / "sentence");
    if (!sentence_dir) missing.push_back("no completed sentence stage (run `revgan train --stage sentence`)");
    std::optional<fs::path> gen_dir;
    if (!request.self_check) {
        gen_dir = request.generated.empty() ? latest_done(cfg.out_dir / "generate") : std::optional(request.generated);
        if (!gen_dir || !fs::exists(*gen_dir / "generated.jsonl")) {
            missing.push_back("no generated corpus (run `revgan generate`)");
        }
    }
    if (!request.baseline.empty() && !fs::exists(request.baseline / "generated.jsonl")) {
        missing.push_back("baseline " + request.baseline.string() + " has no generated.jsonl");
    }
    if (cfg.lexicon.empty() || !fs::exists(cfg.lexicon)) missing.push_back("lexicon file '" + cfg.lexicon.string() + "'");
    if (!missing.empty()) {
        std::string msg = "evaluate is missing inputs:";
        for (const auto& m : missing) msg += "\n  - " + m;
        throw PrerequisiteError(msg);
    }

    const CorpusArtifacts corpus = load_ingest(*ingest_dir);
    const SentenceAutoencoder ae = load_sentence(*sentence_dir, corpus.vocab);
    const Lexicon lex = load_lexicon(cfg);

    std::vector<GeneratedReview> gen;
    if (request.self_check) {
        for (const auto& d : corpus.reviews) {
            if (d.excluded) continue;
            GeneratedReview g;
            g.product_id = d.product_id;
            g.sentiment = d.sentiment;
            g.user_id = d.user_id;
            g.document = d;
            g.text = document_text(d, corpus.vocab);
            gen.push_back(std::move(g));
        }
    } else {
        gen = load_generated(*gen_dir, corpus.vocab);
    }

    // References: organic reviews of the same product and sentiment, or of the
    // same product when none match the sentiment.
    std::map<std::pair<std::string, Sentiment>, std::vector<const Document*>> by_key;
    std::map<std::string, std::vector<const Document*>> by_product;
    for (const auto& d : corpus.reviews) {
        by_key[{d.product_id, d.sentiment}].push_back(&d);
        by_product[d.product_id].push_back(&d);
    }
    auto refs_for = [&](const GeneratedReview& g) -> const std::vector<const Document*>& {
        auto it = by_key.find({g.product_id, g.sentiment});
        if (it != by_key.end()) return it->second;
        auto pit = by_product.find(g.product_id);
        if (pit == by_product.end()) throw InputError("generated review names unknown product '" + g.product_id + "'");
        return pit->second;
    };

    struct Scored {
        std::vector<Tokens> hyps;
        std::vector<std::vector<Tokens>> refs;
        std::vector<std::string> texts;
        std::vector<Sentiment> labels;
    };
    auto prepare = [&](const std::vector<GeneratedReview>& g) {
        Scored s;
        for (const auto& r : g) {
            s.hyps.push_back(doc_tokens(r.document, corpus.vocab));
            std::vector<Tokens> refs;
            for (const Document* d : refs_for(r)) refs.push_back(doc_tokens(*d, corpus.vocab));
            s.refs.push_back(std::move(refs));
            s.texts.push_back(r.text);
            s.labels.push_back(r.sentiment);
        }
        return s;
    };
    const Scored scored = prepare(gen);
    const BleuOptions bleu_opt{cfg.bleu_smoothing};

    EvaluateOutcome out;
    MetricsReport& rep = out.report;
    rep.sample_count = gen.size();
    if (!gen.empty()) {
        std::vector<Document> docs;
        for (const auto& g : gen) docs.push_back(g.document);
        const SentenceScorer scorer = [&ae](const Sentence& s) { return ae.token_log_probs(s); };
        const LikelihoodResult ll = log_likelihood(docs, scorer);
        rep.log_likelihood = ll.total;
        rep.log_likelihood_per_token = ll.per_token();
        if (ll.tokens > 0) rep.perplexity = perplexity(docs, scorer);
        rep.bleu4 = bleu4(scored.hyps, scored.refs, bleu_opt);
        rep.rouge_l = rouge_l(scored.hyps, scored.refs);
        rep.sentiment_accuracy = sentiment_accuracy(scored.texts, scored.labels, lex);

        double wmd_sum = 0.0;
        for (const auto& g : gen) {
            const auto a = regular_ids(g.document);
            const auto& refs = refs_for(g);
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t r = 0; r < refs.size() && r < cfg.wmd_references; ++r) {
                const auto d = wmd(a, regular_ids(*refs[r]), ae.embeddings().value);
                if (d) {
                    sum += *d;
                    ++n;
                }
            }
            if (n == 0) {
                ++rep.wmd_skipped;
            } else {
                wmd_sum += sum / static_cast<double>(n);
                ++rep.wmd_pairs;
            }
        }
        if (rep.wmd_pairs) rep.wmd = wmd_sum / static_cast<double>(rep.wmd_pairs);
    }

    out.dir = next_run_dir(cfg.out_dir / "evaluate");
    write_text(out.dir / "metrics.txt", rep.to_kv());
    write_text(out.dir / "metrics.json", rep.to_json().dump(2) + "\n");
    write_text(out.dir / "table.txt", MetricsReport::table_header() + "\n" +
                                           rep.table_row(request.self_check ? "organic" : "generated") + "\n");

    if (!request.baseline.empty()) {
        const auto base = load_generated(request.baseline, corpus.vocab);
        if (base.size() != gen.size()) {
            throw InputError("baseline has " + std::to_string(base.size()) + " reviews, evaluated run has " +
                             std::to_string(gen.size()));
        }
        for (std::size_t i = 0; i < gen.size(); ++i) {
            if (base[i].product_id != gen[i].product_id || base[i].sentiment != gen[i].sentiment) {
                throw InputError("baseline request " + std::to_string(i) + " differs from the evaluated run");
            }
        }
        const Scored other = prepare(base);
        auto subset_bleu = [&bleu_opt](const Scored& s) {
            return [&s, &bleu_opt](const std::vector<std::size_t>& idx) {
                std::vector<Tokens> h;
                std::vector<std::vector<Tokens>> r;
                for (auto i : idx) {
                    h.push_back(s.hyps[i]);
                    r.push_back(s.refs[i]);
                }
                return bleu4(h, r, bleu_opt);
            };
        };
        auto subset_rouge = [](const Scored& s) {
            return [&s](const std::vector<std::size_t>& idx) {
                std::vector<Tokens> h;
                std::vector<std::vector<Tokens>> r;
                for (auto i : idx) {
                    h.push_back(s.hyps[i]);
                    r.push_back(s.refs[i]);
                }
                return rouge_l(h, r);
            };
        };
        auto subset_sentiment = [&lex](const Scored& s) {
            return [&s, &lex](const std::vector<std::size_t>& idx) {
                std::vector<std::string> t;
                std::vector<Sentiment> l;
                for (auto i : idx) {
                    t.push_back(s.texts[i]);
                    l.push_back(s.labels[i]);
                }
                return sentiment_accuracy(t, l, lex);
            };
        };
        const std::uint64_t bseed = cfg.seed;
        out.comparisons.push_back(bootstrap_compare("bleu4", subset_bleu(scored), subset_bleu(other), gen.size(),
                                                    cfg.bootstrap_resamples, bseed));
        out.comparisons.push_back(bootstrap_compare("rouge_l", subset_rouge(scored), subset_rouge(other), gen.size(),
                                                    cfg.bootstrap_resamples, bseed));
        out.comparisons.push_back(bootstrap_compare("sentiment_accuracy", subset_sentiment(scored),
                                                    subset_sentiment(other), gen.size(), cfg.bootstrap_resamples, bseed));
        std::string csv = "metric,point,standard_error,resamples,failed,t,p_value\n";
        for (const auto& c : out.comparisons) {
            csv += csv_line({c.metric, fmt_double(c.point), fmt_double(c.standard_error), std::to_string(c.resamples),
                             std::to_string(c.failed), fmt_double(c.t), fmt_double(c.p_value)});
        }
        write_text(out.dir / "bootstrap.csv", csv);
    }

    if (request.confusion) {
        out.chi_square = chi_square_independence(*request.confusion);
        write_text(out.dir / "chi_square.txt", "statistic = " + fmt_double(out.chi_square->statistic) +
                                                   "\np_value = " + fmt_double(out.chi_square->p_value) + "\ndf = 1\n");
    }

    std::vector<std::size_t> organic_stream, generated_stream;
    for (const auto& d : corpus.reviews) {
        const auto ids = regular_ids(d);
        organic_stream.insert(organic_stream.end(), ids.begin(), ids.end());
    }
    for (const auto& g : gen) {
        const auto ids = regular_ids(g.document);
        generated_stream.insert(generated_stream.end(), ids.begin(), ids.end());
    }
    out.laws.push_back(fit_laws("organic", organic_stream, out.dir));
    out.laws.push_back(fit_laws(request.self_check ? "self" : "generated", generated_stream, out.dir));
    json laws = json::array();
    for (const auto& l : out.laws) laws.push_back(law_json(l));
    write_text(out.dir / "laws.json", laws.dump(2) + "\n");
    write_text(out.dir / "config.txt", cfg.to_kv());
    mark_done(out.dir);
    return out;
}

std::pair<fs::path, LawReport> run_laws(const RunConfig& cfg, const fs::path& text_file) {
    std::istringstream in(read_text(text_file));
    std::unordered_map<std::string, std::size_t> ids;
    std::vector<std::size_t> stream;
    for (std::string line; std::getline(in, line);) {
        for (const auto& w : word_tokens(line)) {
            const auto [it, fresh] = ids.emplace(w, ids.size());
            stream.push_back(it->second);
        }
    }
    const fs::path dir = next_run_dir(cfg.out_dir / "laws");
    LawReport rep = fit_laws("text", stream, dir);
    write_text(dir / "laws.json", law_json(rep).dump(2) + "\n");
    mark_done(dir);
    return {dir, std::move(rep)};
}

}  // namespace revgan
