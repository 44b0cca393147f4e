#include "revgan/personalized_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "revgan/search.hpp"
#include "revgan/types.hpp"

namespace revgan {

bool StyleVector::is_identity() const {
    return std::all_of(weights.begin(), weights.end(), [](double w) { return w == 1.0; });
}

StyleVector identity_style(std::size_t vocab_size, std::string user_id) {
    return {std::move(user_id), std::vector<double>(vocab_size, 1.0), 0};
}

StyleVector build_style(const std::vector<const Document*>& history, const Vocabulary& vocab, std::string user_id) {
    StyleVector style = identity_style(vocab.size(), std::move(user_id));
    style.history_review_count = history.size();
    if (history.empty()) return style;
    std::vector<double> counts(vocab.size(), 0.0);
    double total = 0.0;
    for (const Document* doc : history) {
        for (const Sentence& s : doc->sentences) {
            for (TokenId id : s.token_ids) {
                if (id >= vocab.size() || Vocabulary::is_special(id)) continue;
                counts[id] += 1.0;
                total += 1.0;
            }
        }
    }
    const double regular = static_cast<double>(vocab.size() - Vocabulary::special_count);
    for (TokenId id = Vocabulary::special_count; id < vocab.size(); ++id) {
        style.weights[id] = regular * (counts[id] + 1.0) / (total + regular);
    }
    return style;
}

PersonalizedDistribution personalize_step(std::span<const double> dist, const StyleVector& style) {
    if (dist.size() != style.weights.size()) {
        throw std::invalid_argument("personalize_step: distribution has " + std::to_string(dist.size()) +
                                    " entries, style has " + std::to_string(style.weights.size()));
    }
    PersonalizedDistribution out{{dist.begin(), dist.end()}, false};
    if (style.is_identity()) return out;
    double total = 0.0;
    for (std::size_t v = 0; v < dist.size(); ++v) {
        out.probs[v] = dist[v] * style.weights[v];
        total += out.probs[v];
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        out.probs.assign(dist.begin(), dist.end());
        out.degenerate = true;
        return out;
    }
    for (double& p : out.probs) p /= total;
    return out;
}

void PersonalizedModel::step(const State& s, TokenId prev, State& next, std::vector<double>& log_probs) const {
    base_.step(s, prev, next, log_probs);
    if (identity_) return;
    std::vector<double> probs(log_probs.size());
    for (std::size_t v = 0; v < probs.size(); ++v) probs[v] = std::exp(log_probs[v]);
    const PersonalizedDistribution p = personalize_step(probs, *style_);
    if (p.degenerate) return;
    for (std::size_t v = 0; v < probs.size(); ++v) log_probs[v] = std::log(p.probs[v]);
}

Document decode_personalized(const SentenceAutoencoder& ae, const RecursiveAutoencoder& rae,
                             const ReviewEmbedding& review, const StyleVector& style, const DecodeOptions& options) {
    if (style.weights.size() != ae.vocab_size()) {
        throw std::invalid_argument("decode_personalized: style size does not match the vocabulary");
    }
    Document doc;
    std::mt19937_64 rng(options.seed);
    for (const SentenceEmbedding& e : rae.decode(review)) {
        const PersonalizedModel model(ae.decoder(e), style);
        SearchResult r;
        switch (options.mode) {
            case DecodeMode::greedy: r = greedy_search(model, options.max_len); break;
            case DecodeMode::sample: r = sample_search(model, options.max_len, rng); break;
            case DecodeMode::beam: r = beam_search(model, options.beam, options.max_len); break;
        }
        doc.sentences.push_back(Sentence{std::move(r.tokens)});
    }
    return doc;
}

void save_style(const StyleVector& style, const std::filesystem::path& path) {
    // The most common weight is stored once as the default.
    std::map<double, std::size_t> freq;
    for (double w : style.weights) ++freq[w];
    double def = 1.0;
    std::size_t best = 0;
    for (const auto& [w, n] : freq) {
        if (n > best) {
            best = n;
            def = w;
        }
    }
    std::ofstream f(path);
    if (!f) throw InputError("cannot write style file " + path.string());
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", def);
    f << "user\t" << (style.user_id.empty() ? "-" : style.user_id) << "\thistory\t" << style.history_review_count << "\tsize\t"
      << style.weights.size() << "\tdefault\t" << buf << '\n';
    for (std::size_t v = 0; v < style.weights.size(); ++v) {
        if (style.weights[v] == def) continue;
        std::snprintf(buf, sizeof(buf), "%.17g", style.weights[v]);
        f << v << '\t' << buf << '\n';
    }
}

StyleVector load_style(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot read style file " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw InputError("empty style file " + path.string());
    std::istringstream head(line);
    std::string k1, k2, k3, k4;
    StyleVector style;
    std::size_t size = 0;
    double def = 1.0;
    std::string defs;
    if (!(head >> k1 >> style.user_id >> k2 >> style.history_review_count >> k3 >> size >> k4 >> defs) ||
        k1 != "user" || k2 != "history" || k3 != "size" || k4 != "default") {
        throw InputError("malformed style header in " + path.string());
    }
    if (style.user_id == "-") style.user_id.clear();
    def = std::stod(defs);
    style.weights.assign(size, def);
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream in(line);
        std::size_t id = 0;
        std::string w;
        if (!(in >> id >> w) || id >= size) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": malformed style entry");
        }
        style.weights[id] = std::stod(w);
        if (!(style.weights[id] >= 0.0)) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": negative style weight");
        }
    }
    return style;
}

}  // namespace revgan
