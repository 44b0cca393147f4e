#include "revgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "revgan/kernels.hpp"
#include "revgan/transport.hpp"

namespace revgan {

LikelihoodResult log_likelihood(const std::vector<Document>& docs, const SentenceScorer& scorer) {
    LikelihoodResult r;
    for (const auto& d : docs) {
        for (const auto& s : d.sentences) {
            for (double lp : scorer(s)) r.total += lp;
            r.tokens += s.token_ids.size();
        }
    }
    return r;
}

double perplexity(const std::vector<Document>& docs, const SentenceScorer& scorer) {
    // Accumulates per-sentence negative log-likelihoods and lengths separately
    // from log_likelihood so the two can be cross-checked.
    std::vector<double> nll;
    std::vector<double> len;
    for (const auto& d : docs) {
        for (const auto& s : d.sentences) {
            const auto lps = scorer(s);
            double acc = 0.0;
            for (auto it = lps.rbegin(); it != lps.rend(); ++it) acc -= *it;
            nll.push_back(acc);
            len.push_back(static_cast<double>(lps.size()));
        }
    }
    double n = 0.0, total = 0.0;
    for (std::size_t i = 0; i < nll.size(); ++i) {
        n += len[i];
        total += nll[i];
    }
    if (n == 0.0) throw std::invalid_argument("perplexity: no tokens");
    return std::exp(total / n);
}

namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
    NgramCounts out;
    if (t.size() < n) return out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n))];
    return out;
}

void check_aligned(std::size_t hyps, std::size_t refs, const char* what) {
    if (hyps != refs) throw std::invalid_argument(std::string(what) + ": hypotheses and references differ in count");
    if (hyps == 0) throw std::invalid_argument(std::string(what) + ": empty corpus");
}

}  // namespace

BleuStats bleu_stats(const std::vector<Tokens>& hypotheses, const std::vector<std::vector<Tokens>>& references) {
    check_aligned(hypotheses.size(), references.size(), "bleu4");
    BleuStats st;
    for (std::size_t k = 0; k < hypotheses.size(); ++k) {
        const Tokens& hyp = hypotheses[k];
        const auto& refs = references[k];
        if (refs.empty()) throw std::invalid_argument("bleu4: hypothesis without references");
        st.hypothesis_length += static_cast<double>(hyp.size());
        const auto diff = [&](std::size_t len) { return std::abs(static_cast<long>(len) - static_cast<long>(hyp.size())); };
        std::size_t best = refs[0].size();
        for (const auto& r : refs) {
            if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) best = r.size();
        }
        st.reference_length += static_cast<double>(best);
        for (std::size_t n = 1; n <= 4; ++n) {
            NgramCounts max_ref;
            for (const auto& r : refs) {
                for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
            }
            for (const auto& [g, c] : ngrams(hyp, n)) {
                const auto it = max_ref.find(g);
                st.matches[n - 1] += static_cast<double>(std::min(c, it == max_ref.end() ? 0 : it->second));
                st.totals[n - 1] += static_cast<double>(c);
            }
        }
    }
    return st;
}

double bleu4(const std::vector<Tokens>& hypotheses, const std::vector<std::vector<Tokens>>& references,
             const BleuOptions& options) {
    const BleuStats st = bleu_stats(hypotheses, references);
    double log_sum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        double m = st.matches[n], p = st.totals[n];
        if (options.smoothing && n > 0) {
            m += 1.0;
            p += 1.0;
        }
        if (m == 0.0 || p == 0.0) return 0.0;
        log_sum += std::log(m / p) / 4.0;
    }
    const double c = st.hypothesis_length, r = st.reference_length;
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const std::vector<Tokens>& hypotheses, const std::vector<std::vector<Tokens>>& references) {
    check_aligned(hypotheses.size(), references.size(), "rouge_l");
    double sum = 0.0;
    for (std::size_t k = 0; k < hypotheses.size(); ++k) {
        double best = 0.0;
        for (const auto& r : references[k]) {
            const double lcs = static_cast<double>(lcs_length(hypotheses[k], r));
            if (lcs == 0.0) continue;
            const double prec = lcs / static_cast<double>(hypotheses[k].size());
            const double rec = lcs / static_cast<double>(r.size());
            best = std::max(best, 2.0 * prec * rec / (prec + rec));
        }
        sum += best;
    }
    return sum / static_cast<double>(hypotheses.size());
}

BagOfWords bag_of_words(const std::vector<TokenId>& tokens) {
    std::map<TokenId, std::int64_t> counts;
    for (TokenId id : tokens) {
        if (!Vocabulary::is_special(id)) ++counts[id];
    }
    std::vector<std::pair<TokenId, std::int64_t>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    if (items.size() > wmd_unique_cap) items.resize(wmd_unique_cap);
    std::sort(items.begin(), items.end());
    BagOfWords bag;
    for (const auto& [id, c] : items) {
        bag.ids.push_back(id);
        bag.counts.push_back(c);
        bag.total += c;
    }
    return bag;
}

std::optional<double> wmd(const std::vector<TokenId>& a, const std::vector<TokenId>& b, const Matrix& embeddings) {
    const BagOfWords ba = bag_of_words(a), bb = bag_of_words(b);
    if (ba.total == 0 || bb.total == 0) return std::nullopt;
    auto rows = [&](const BagOfWords& bag) {
        Matrix m(bag.ids.size(), embeddings.cols());
        for (std::size_t i = 0; i < bag.ids.size(); ++i) {
            if (bag.ids[i] >= embeddings.rows()) throw std::out_of_range("wmd: token id outside embedding table");
            const auto src = embeddings.row(bag.ids[i]);
            std::copy(src.begin(), src.end(), m.row(i).begin());
        }
        return m;
    };
    Matrix cost;
    kernels::pairwise_euclidean(rows(ba), rows(bb), cost);
    // Scale both marginals to the common total |a| * |b| to stay in integers.
    std::vector<std::int64_t> supply(ba.counts), demand(bb.counts);
    for (auto& s : supply) s *= bb.total;
    for (auto& d : demand) d *= ba.total;
    return min_cost_transport(supply, demand, cost) / static_cast<double>(ba.total * bb.total);
}

double sentiment_accuracy(const std::vector<std::string>& texts, const std::vector<Sentiment>& labels,
                          const Lexicon& lexicon) {
    if (texts.size() != labels.size()) throw std::invalid_argument("sentiment_accuracy: size mismatch");
    if (texts.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const Sentiment got = score(texts[i], lexicon).label;
        if (got != Sentiment::neutral && got == labels[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(texts.size());
}

Tokens regular_tokens(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
    Tokens out;
    for (TokenId id : ids) {
        if (id == Vocabulary::eos) break;
        if (id == Vocabulary::pad || id == Vocabulary::sos) continue;
        out.push_back(vocab.token(id));
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string MetricsReport::to_kv() const {
    std::ostringstream o;
    o << "log_likelihood = " << fmt(log_likelihood) << '\n'
      << "log_likelihood_per_token = " << fmt(log_likelihood_per_token) << '\n'
      << "perplexity = " << fmt(perplexity) << '\n'
      << "bleu4 = " << fmt(bleu4) << '\n'
      << "rouge_l = " << fmt(rouge_l) << '\n'
      << "wmd = " << fmt(wmd) << '\n'
      << "sentiment_accuracy = " << fmt(sentiment_accuracy) << '\n'
      << "sample_count = " << sample_count << '\n'
      << "wmd_pairs = " << wmd_pairs << '\n'
      << "wmd_skipped = " << wmd_skipped << '\n';
    return o.str();
}

nlohmann::json MetricsReport::to_json() const {
    return {{"log_likelihood", log_likelihood},
            {"log_likelihood_per_token", log_likelihood_per_token},
            {"perplexity", perplexity},
            {"bleu4", bleu4},
            {"rouge_l", rouge_l},
            {"wmd", wmd},
            {"sentiment_accuracy", sentiment_accuracy},
            {"sample_count", sample_count},
            {"wmd_pairs", wmd_pairs},
            {"wmd_skipped", wmd_skipped}};
}

std::string MetricsReport::table_header() {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s %14s %8s %10s %10s %10s", "system", "log-likelihood", "WMD", "PPL",
                  "BLEU-4(%)", "ROUGE-L(%)");
    return buf;
}

std::string MetricsReport::table_row(const std::string& system) const {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-16s %14.2f %8.4f %10.2f %10.2f %10.2f", system.c_str(), log_likelihood, wmd,
                  perplexity, 100.0 * bleu4, 100.0 * rouge_l);
    return buf;
}

}  // namespace revgan
