#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "revgan/sentiment.hpp"

using namespace revgan;

namespace {

const Lexicon& shipped() {
    static const Lexicon lex = Lexicon::load(REVGAN_LEXICON);
    return lex;
}

}  // namespace

TEST_CASE("empty text is neutral") {
    const SentimentLabel s = score("", shipped());
    CHECK(s.compound == 0.0);
    CHECK(s.label == Sentiment::neutral);
}

TEST_CASE("negation flips the sign of a single word") {
    const double good = score("good", shipped()).compound;
    const double not_good = score("not good", shipped()).compound;
    CHECK(not_good < 0.0);
    CHECK(0.0 < good);
    // 1.9 / sqrt(1.9^2 + 15)
    CHECK(good == doctest::Approx(1.9 / std::sqrt(1.9 * 1.9 + 15.0)));
    const double neg = -0.74 * 1.9;
    CHECK(not_good == doctest::Approx(neg / std::sqrt(neg * neg + 15.0)));
}

TEST_CASE("negation window and intensifiers") {
    const Lexicon lex = Lexicon::parse("good\t2.0\n");
    CHECK(score("not very really good", lex).compound < 0);
    CHECK(score("not a b c good", lex).compound > 0);
    CHECK(score("not. good", lex).compound > 0);
    const double boosted = score("very good", lex).compound;
    CHECK(boosted > score("good", lex).compound);
    const double s = 2.0 * 1.293;
    CHECK(boosted == doctest::Approx(s / std::sqrt(s * s + 15.0)));
}

TEST_CASE("thresholds") {
    CHECK(label_for(0.05) == Sentiment::positive);
    CHECK(label_for(0.0499) == Sentiment::neutral);
    CHECK(label_for(-0.05) == Sentiment::negative);
}

TEST_CASE("lexicon parsing") {
    const Lexicon lex = Lexicon::parse("# comment\ngreat\t3.1\textra\tcolumns\n\nmeh\t-0.3\n");
    CHECK(lex.valence.at("great") == 3.1);
    CHECK(lex.valence.at("meh") == -0.3);
    CHECK(lex.negators.count("not") == 1);
    CHECK_THROWS_AS(Lexicon::parse("broken line\n"), InputError);
    CHECK_THROWS_AS(Lexicon::parse("word\tnan-ish\n"), InputError);
    CHECK_THROWS_AS(Lexicon::load("/nonexistent/lexicon.txt"), InputError);
    CHECK(shipped().valence.size() >= 2500);
    for (const auto& [w, v] : shipped().valence) {
        REQUIRE(std::isfinite(v));
        REQUIRE(std::abs(v) <= 4.0);
    }
    for (const auto& [w, m] : shipped().intensifiers) CHECK(m > 0.0);
}

TEST_CASE("hand-labeled fixture agreement") {
    std::ifstream f(REVGAN_TEST_DATA "/hand_labeled.tsv");
    std::string line;
    int total = 0, agree = 0;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        ++total;
        if (score(line.substr(0, tab), shipped()).label == parse_sentiment(line.substr(tab + 1))) ++agree;
    }
    CHECK(total == 20);
    CHECK(agree >= 18);
}

TEST_CASE("sign symmetry and monotonicity") {
    Lexicon flipped = shipped();
    for (auto& [w, v] : flipped.valence) v = -v;
    const std::vector<std::string> words{"good", "bad", "not", "very", "the", "lamp", "awful", "love", "never", "."};
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        for (int i = 0; i < 8; ++i) text += words[pick(rng)] + " ";
        CHECK(score(text, flipped).compound == doctest::Approx(-score(text, shipped()).compound));
        CHECK(score(text + ". great", shipped()).compound >= score(text, shipped()).compound);
    }
}

TEST_CASE("corpus labeling excludes neutral documents") {
    Vocabulary v;
    for (const char* w : {"good", "bad", "lamp", "."}) v.add(w);
    std::vector<Document> docs{make_document("good lamp.", v), make_document("bad lamp.", v), make_document("lamp.", v)};
    const LabelStats st = label_corpus(docs, v, shipped());
    CHECK(st.positive == 1);
    CHECK(st.negative == 1);
    CHECK(st.neutral == 1);
    CHECK(docs[0].sentiment == Sentiment::positive);
    CHECK_FALSE(docs[0].excluded);
    CHECK(docs[2].excluded);
    for (const auto& d : docs) CHECK(d.sentiment == score(document_text(d, v), shipped()).label);
}
