#pragma once

// Token-level search over any autoregressive step model.
//
// A step model provides:
//   using State = ...;
//   State initial() const;
//   void step(const State& s, TokenId prev, State& next, std::vector<double>& log_probs) const;
// `prev` is the previously emitted token (sos on the first step).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <random>
#include <vector>

#include "revgan/corpus.hpp"

namespace revgan {

template <typename M>
concept StepModel = requires(const M& m, const typename M::State& s, typename M::State& next,
                             std::vector<double>& lp) {
    { m.initial() } -> std::convertible_to<typename M::State>;
    m.step(s, TokenId{}, next, lp);
};

struct SearchResult {
    std::vector<TokenId> tokens;
    double log_prob = 0.0;
};

inline std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Emits the most probable token at each step until eos or max_len tokens.
template <StepModel M>
SearchResult greedy_search(const M& model, std::size_t max_len, TokenId eos = Vocabulary::eos,
                           TokenId start = Vocabulary::sos) {
    SearchResult out;
    auto state = model.initial();
    typename M::State next;
    std::vector<double> lp;
    TokenId prev = start;
    for (std::size_t t = 0; t < max_len; ++t) {
        model.step(state, prev, next, lp);
        const TokenId tok = argmax(lp);
        out.tokens.push_back(tok);
        out.log_prob += lp[tok];
        if (tok == eos) break;
        state = std::move(next);
        prev = tok;
    }
    return out;
}

/// Draws each token from the model distribution with `rng`.
template <StepModel M>
SearchResult sample_search(const M& model, std::size_t max_len, std::mt19937_64& rng,
                           TokenId eos = Vocabulary::eos, TokenId start = Vocabulary::sos) {
    SearchResult out;
    auto state = model.initial();
    typename M::State next;
    std::vector<double> lp;
    TokenId prev = start;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t t = 0; t < max_len; ++t) {
        model.step(state, prev, next, lp);
        const double u = unif(rng);
        double acc = 0.0;
        TokenId tok = lp.size() - 1;
        for (std::size_t v = 0; v < lp.size(); ++v) {
            acc += std::exp(lp[v]);
            if (u < acc) {
                tok = v;
                break;
            }
        }
        out.tokens.push_back(tok);
        out.log_prob += lp[tok];
        if (tok == eos) break;
        state = std::move(next);
        prev = tok;
    }
    return out;
}

/// Keeps the `beam` best partial hypotheses by accumulated log-probability.
/// Hypotheses finish at eos or max_len; search stops once `beam` hypotheses
/// finished or no live hypothesis can still beat the best finished one.
/// beam = 1 reproduces greedy_search token for token.
template <StepModel M>
SearchResult beam_search(const M& model, std::size_t beam, std::size_t max_len,
                         TokenId eos = Vocabulary::eos, TokenId start = Vocabulary::sos) {
    if (beam == 0) throw std::invalid_argument("beam_search: beam must be >= 1");
    using State = typename M::State;
    struct Hyp {
        std::vector<TokenId> tokens;
        double log_prob = 0.0;
        State state;
    };
    struct Candidate {
        double score;
        std::size_t hyp;
        TokenId token;
    };

    std::vector<Hyp> live;
    live.push_back(Hyp{{}, 0.0, model.initial()});
    std::vector<SearchResult> finished;
    std::vector<double> lp;

    for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
        std::vector<Candidate> cands;
        std::vector<State> next_states(live.size());
        for (std::size_t h = 0; h < live.size(); ++h) {
            const TokenId prev = live[h].tokens.empty() ? start : live[h].tokens.back();
            model.step(live[h].state, prev, next_states[h], lp);
            for (std::size_t v = 0; v < lp.size(); ++v) {
                cands.push_back({live[h].log_prob + lp[v], h, v});
            }
        }
        const std::size_t keep = std::min(beam, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                          [](const Candidate& a, const Candidate& b) {
                              if (a.score != b.score) return a.score > b.score;
                              if (a.hyp != b.hyp) return a.hyp < b.hyp;
                              return a.token < b.token;
                          });
        std::vector<Hyp> next_live;
        for (std::size_t c = 0; c < keep; ++c) {
            const Candidate& cand = cands[c];
            Hyp nh{live[cand.hyp].tokens, cand.score, {}};
            nh.tokens.push_back(cand.token);
            if (cand.token == eos || t + 1 == max_len) {
                finished.push_back({std::move(nh.tokens), nh.log_prob});
            } else {
                nh.state = next_states[cand.hyp];
                next_live.push_back(std::move(nh));
            }
        }
        live = std::move(next_live);
        if (finished.size() >= beam) break;
        if (!finished.empty() && !live.empty()) {
            double best_done = finished.front().log_prob;
            for (const auto& f : finished) best_done = std::max(best_done, f.log_prob);
            double best_live = live.front().log_prob;
            for (const auto& h : live) best_live = std::max(best_live, h.log_prob);
            if (best_live <= best_done) break;
        }
    }
    if (finished.empty()) {
        // Only reachable with max_len == 0.
        return {};
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < finished.size(); ++i) {
        if (finished[i].log_prob > finished[best].log_prob) best = i;
    }
    return finished[best];
}

}  // namespace revgan
