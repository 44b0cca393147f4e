#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "revgan/metrics.hpp"
#include "revgan/transport.hpp"

using namespace revgan;

namespace {

Tokens words(const std::string& s) {
    Tokens out;
    std::istringstream in(s);
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::vector<Document> docs_of(std::initializer_list<std::vector<TokenId>> sentences) {
    Document d;
    for (const auto& s : sentences) d.sentences.push_back(Sentence{s});
    return {d};
}

double euclid(const Matrix& e, TokenId a, TokenId b) {
    double s = 0;
    for (std::size_t j = 0; j < e.cols(); ++j) s += (e(a, j) - e(b, j)) * (e(a, j) - e(b, j));
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("log-likelihood and perplexity closed forms") {
    const auto docs = docs_of({{4, 5, 2}, {6, 2}});
    const SentenceScorer perfect = [](const Sentence& s) { return std::vector<double>(s.token_ids.size(), 0.0); };
    CHECK(log_likelihood(docs, perfect).total == 0.0);
    CHECK(log_likelihood(docs, perfect).tokens == 5);
    CHECK(perplexity(docs, perfect) == 1.0);

    const double V = 7.0;
    const SentenceScorer uniform = [&](const Sentence& s) {
        return std::vector<double>(s.token_ids.size(), -std::log(V));
    };
    CHECK(log_likelihood(docs, uniform).total == doctest::Approx(-5 * std::log(V)).epsilon(1e-14));
    CHECK(perplexity(docs, uniform) == doctest::Approx(V).epsilon(1e-12));

    const auto three = docs_of({{4, 5, 2}});
    const SentenceScorer fixed = [](const Sentence&) {
        return std::vector<double>{std::log(0.5), std::log(0.25), std::log(0.8)};
    };
    const double hand = std::log(0.5) + std::log(0.25) + std::log(0.8);
    CHECK(log_likelihood(three, fixed).total == doctest::Approx(hand).epsilon(1e-14));
    CHECK(perplexity(three, fixed) == doctest::Approx(std::exp(-hand / 3)).epsilon(1e-12));

    CHECK_THROWS_AS(perplexity({}, perfect), std::invalid_argument);
}

TEST_CASE("perplexity agrees with the likelihood path") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-6.0, -0.01);
    std::vector<std::vector<TokenId>> sents;
    for (int i = 0; i < 30; ++i) sents.push_back(std::vector<TokenId>(1 + i % 7, 4));
    Document d;
    for (const auto& s : sents) d.sentences.push_back(Sentence{s});
    std::map<std::size_t, std::vector<double>> table;
    const SentenceScorer scorer = [&](const Sentence& s) {
        auto& v = table[s.token_ids.size()];
        if (v.empty())
            for (std::size_t i = 0; i < s.token_ids.size(); ++i) v.push_back(u(rng));
        return v;
    };
    const auto ll = log_likelihood({d}, scorer);
    CHECK(perplexity({d}, scorer) == doctest::Approx(std::exp(-ll.total / static_cast<double>(ll.tokens))).epsilon(1e-12));
}

TEST_CASE("BLEU-4") {
    const Tokens hyp = words("the cat sat on the mat"), ref = words("the cat is on the mat");
    CHECK(bleu4({hyp}, {{hyp}}) == doctest::Approx(1.0));

    const BleuStats st = bleu_stats({hyp}, {{ref}});
    CHECK(st.matches[0] == 5);
    CHECK(st.totals[0] == 6);
    CHECK(st.matches[1] == 3);
    CHECK(st.totals[1] == 5);
    CHECK(st.matches[2] == 1);
    CHECK(st.totals[2] == 4);
    CHECK(st.matches[3] == 0);
    CHECK(st.totals[3] == 3);
    CHECK(bleu4({hyp}, {{ref}}) == 0.0);
    const double smoothed = std::pow(5.0 / 6 * 4.0 / 6 * 2.0 / 5 * 1.0 / 4, 0.25);
    CHECK(bleu4({hyp}, {{ref}}, {true}) == doctest::Approx(smoothed).epsilon(1e-12));

    SUBCASE("brevity penalty") {
        const Tokens shorter = words("the cat sat on");
        const Tokens longer = words("the cat sat on the mat today");
        CHECK(bleu4({shorter}, {{longer}}) == doctest::Approx(std::exp(1.0 - 7.0 / 4)).epsilon(1e-12));
    }
    SUBCASE("relabeling tokens changes nothing") {
        auto relabel = [](Tokens t) {
            for (auto& w : t) w = "#" + w + "#";
            return t;
        };
        const Tokens h2 = words("a b c d e f"), r2 = words("a b c d x f");
        CHECK(bleu4({hyp, h2}, {{ref}, {r2}}, {true}) ==
              bleu4({relabel(hyp), relabel(h2)}, {{relabel(ref)}, {relabel(r2)}}, {true}));
    }
    CHECK_THROWS_AS(bleu4({hyp}, {}), std::invalid_argument);
}

TEST_CASE("ROUGE-L") {
    CHECK(lcs_length(words("a b c d"), words("a c d e")) == 3);
    CHECK(rouge_l({words("a b c d")}, {{words("a c d e")}}) == doctest::Approx(0.75));
    CHECK(rouge_l({words("x y z")}, {{words("x y z")}}) == 1.0);
    CHECK(rouge_l({words("x y z")}, {{words("p q")}}) == 0.0);
    // Best reference wins, then averaged over hypotheses.
    CHECK(rouge_l({words("a b"), words("c")}, {{words("z"), words("a b")}, {words("d")}}) == doctest::Approx(0.5));
}

TEST_CASE("transport solver against enumerated plans") {
    // 2x2 with marginals (2/3, 1/3) and (1/3, 2/3): one free variable t in [0, 1/3].
    const Matrix c(2, 2, {1.0, 3.0, 2.5, 0.5});
    double best = 1e300;
    for (int k = 0; k <= 3000; ++k) {
        const double t = k / 9000.0;
        best = std::min(best, t * c(0, 0) + (2.0 / 3 - t) * c(0, 1) + (1.0 / 3 - t) * c(1, 0) + t * c(1, 1));
    }
    CHECK(min_cost_transport({6, 3}, {3, 6}, c) / 9.0 == doctest::Approx(best).epsilon(1e-12));
    CHECK_THROWS_AS(min_cost_transport({1}, {2}, Matrix(1, 1)), std::invalid_argument);
}

TEST_CASE("word mover's distance") {
    Matrix emb(10, 2);
    const double pts[10][2] = {{0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 0}, {3, 4}, {1, 1}, {-2, 0}, {0, 5}, {6, -1}};
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 2; ++j) emb(i, j) = pts[i][j];

    const std::vector<TokenId> a{4, 5, Vocabulary::eos}, b{6, 7, Vocabulary::eos};
    CHECK(*wmd(a, a, emb) == 0.0);
    CHECK(*wmd(a, b, emb) == doctest::Approx(*wmd(b, a, emb)).epsilon(1e-14));

    // Equal halves: best of the two matchings.
    const double hand = 0.5 * std::min(euclid(emb, 4, 6) + euclid(emb, 5, 7), euclid(emb, 4, 7) + euclid(emb, 5, 6));
    CHECK(*wmd(a, b, emb) == doctest::Approx(hand).epsilon(1e-12));

    // Unequal weights (2/3, 1/3) vs (1/3, 2/3).
    const std::vector<TokenId> c{4, 4, 5}, d{8, 9, 9};
    double best = 1e300;
    for (int k = 0; k <= 3000; ++k) {
        const double t = k / 9000.0;
        best = std::min(best, t * euclid(emb, 4, 8) + (2.0 / 3 - t) * euclid(emb, 4, 9) +
                                  (1.0 / 3 - t) * euclid(emb, 5, 8) + t * euclid(emb, 5, 9));
    }
    CHECK(*wmd(c, d, emb) == doctest::Approx(best).epsilon(1e-12));

    CHECK_FALSE(wmd({Vocabulary::unk, Vocabulary::eos}, b, emb).has_value());

    SUBCASE("metric properties on random documents") {
        std::mt19937_64 rng(5);
        std::uniform_int_distribution<TokenId> tok(4, 9);
        auto doc = [&] {
            std::vector<TokenId> t(1 + rng() % 6);
            for (auto& x : t) x = tok(rng);
            return t;
        };
        for (int i = 0; i < 100; ++i) {
            const auto x = doc(), y = doc(), z = doc();
            const double xy = *wmd(x, y, emb), yz = *wmd(y, z, emb), xz = *wmd(x, z, emb);
            CHECK(xy >= 0.0);
            CHECK(xz <= xy + yz + 1e-9);
            CHECK(xy == *wmd(x, y, emb));
            if (bag_of_words(x).ids != bag_of_words(y).ids || bag_of_words(x).counts != bag_of_words(y).counts) {
                CHECK(xy > 0.0);
            }
        }
    }
}

TEST_CASE("bag of words caps distinct tokens") {
    std::vector<TokenId> many;
    for (TokenId i = 4; i < 4 + 70; ++i) many.push_back(i);
    many.push_back(10);
    const BagOfWords bag = bag_of_words(many);
    CHECK(bag.ids.size() == wmd_unique_cap);
    CHECK(std::find(bag.ids.begin(), bag.ids.end(), TokenId{10}) != bag.ids.end());
    double w = 0;
    for (std::size_t i = 0; i < bag.ids.size(); ++i) w += bag.weight(i);
    CHECK(w == doctest::Approx(1.0));
}

TEST_CASE("sentiment accuracy") {
    const Lexicon lex = Lexicon::parse("good\t2\nbad\t-2\n");
    const std::vector<std::string> texts{"good", "bad", "meh", "good"};
    CHECK(sentiment_accuracy(texts, {Sentiment::positive, Sentiment::negative, Sentiment::neutral, Sentiment::negative},
                             lex) == 0.5);
    CHECK(sentiment_accuracy(texts, {Sentiment::positive, Sentiment::negative, Sentiment::positive, Sentiment::positive},
                             lex) == 0.75);
}

TEST_CASE("report serialization") {
    MetricsReport r;
    r.bleu4 = 1.0;
    r.rouge_l = 0.5;
    r.perplexity = 12.5;
    r.sample_count = 3;
    CHECK(r.to_kv().find("bleu4 = 1\n") != std::string::npos);
    CHECK(r.to_json()["sample_count"] == 3);
    CHECK(r.table_row("self").find("100.00") != std::string::npos);
    CHECK(MetricsReport::table_header().find("BLEU-4") != std::string::npos);
}
