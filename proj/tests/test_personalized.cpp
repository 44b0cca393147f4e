#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "revgan/personalized_decoder.hpp"

using namespace revgan;

namespace {

Vocabulary vocab_of(std::initializer_list<const char*> words) {
    Vocabulary v;
    for (const char* w : words) v.add(w);
    return v;
}

std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> p(n);
    double s = 0;
    for (double& x : p) s += (x = u(rng));
    for (double& x : p) x /= s;
    return p;
}

}  // namespace

TEST_CASE("empty history gives the identity style") {
    const Vocabulary v = vocab_of({"good", "bad"});
    const StyleVector s = build_style({}, v, "u1");
    CHECK(s.weights == std::vector<double>(v.size(), 1.0));
    CHECK(s.is_identity());
    CHECK(s.history_review_count == 0);
}

TEST_CASE("add-one smoothing ratio") {
    const Vocabulary v = vocab_of({"good", "bad"});
    const Document d = make_document("good good bad", v);
    const StyleVector s = build_style({&d}, v);
    CHECK(s.weights[v.id("good")] / s.weights[v.id("bad")] == doctest::Approx(1.5));
    CHECK(s.weights[Vocabulary::eos] == 1.0);
    CHECK(s.weights[Vocabulary::pad] == 1.0);
    // Regular weights average to one.
    CHECK((s.weights[v.id("good")] + s.weights[v.id("bad")]) / 2 == doctest::Approx(1.0));
}

TEST_CASE("style weights match an independent counter") {
    const std::vector<std::string> texts{"the lamp is bright.", "bright and warm!", "the cord is short.",
                                         "I like the lamp.", "warm light, nice lamp.", "short cord though.",
                                         "is it bright?", "the base is heavy.", "heavy but nice.", "a lamp."};
    Vocabulary v;
    for (const auto& t : texts)
        for (const auto& w : word_tokens(t)) v.add(w);
    v.add("unused");
    std::vector<Document> docs;
    for (const auto& t : texts) docs.push_back(make_document(t, v));
    std::vector<const Document*> ptrs;
    for (const auto& d : docs) ptrs.push_back(&d);
    const StyleVector s = build_style(ptrs, v, "u");

    std::map<std::string, double> count;
    double total = 0;
    for (const auto& t : texts)
        for (const auto& w : word_tokens(t)) {
            count[w] += 1;
            total += 1;
        }
    const double V = static_cast<double>(v.size() - Vocabulary::special_count);
    for (TokenId id = Vocabulary::special_count; id < v.size(); ++id) {
        CHECK(s.weights[id] == doctest::Approx(V * (count[v.token(id)] + 1) / (total + V)).epsilon(1e-12));
    }
    CHECK(s.history_review_count == 10);
}

TEST_CASE("personalize_step arithmetic") {
    const StyleVector id = identity_style(3);
    const std::vector<double> dist{0.2, 0.3, 0.5};
    CHECK(personalize_step(dist, id).probs == dist);

    StyleVector doubled = identity_style(2);
    doubled.weights[0] = 2.0;
    const auto out = personalize_step(std::vector<double>{0.5, 0.5}, doubled);
    CHECK(out.probs[0] == doctest::Approx(2.0 / 3));
    CHECK(out.probs[1] == doctest::Approx(1.0 / 3));

    StyleVector five = identity_style(5);
    five.weights = {0.5, 2.0, 1.0, 3.0, 0.25};
    const std::vector<double> p{0.1, 0.2, 0.3, 0.15, 0.25};
    const double z = 0.05 + 0.4 + 0.3 + 0.45 + 0.0625;
    const auto q = personalize_step(p, five);
    const std::vector<double> expect{0.05 / z, 0.4 / z, 0.3 / z, 0.45 / z, 0.0625 / z};
    for (std::size_t i = 0; i < 5; ++i) CHECK(q.probs[i] == doctest::Approx(expect[i]).epsilon(1e-14));

    StyleVector zero = identity_style(2);
    zero.weights = {0.0, 1.0};
    const auto degenerate = personalize_step(std::vector<double>{1.0, 0.0}, zero);
    CHECK(degenerate.degenerate);
    CHECK(degenerate.probs == std::vector<double>{1.0, 0.0});

    CHECK_THROWS_AS(personalize_step(std::vector<double>{1.0}, zero), std::invalid_argument);
}

TEST_CASE("personalize_step properties on random inputs") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> w(0.0, 4.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + trial % 9;
        const auto p = random_simplex(n, rng);
        StyleVector s = identity_style(n);
        for (double& x : s.weights) x = 0.05 + w(rng);
        const auto q = personalize_step(p, s);
        double sum = 0;
        for (double x : q.probs) {
            CHECK(x > 0.0);
            sum += x;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

        StyleVector bumped = s;
        const std::size_t v = trial % n;
        bumped.weights[v] *= 1.5;
        CHECK(personalize_step(p, bumped).probs[v] >= q.probs[v]);
    }
}

TEST_CASE("style file round trip") {
    const Vocabulary v = vocab_of({"good", "bad", "ugly"});
    const Document d = make_document("good good bad", v);
    const StyleVector s = build_style({&d}, v, "user-7");
    const auto path = std::filesystem::temp_directory_path() / "revgan_style_test.tsv";
    save_style(s, path);
    const StyleVector back = load_style(path);
    CHECK(back.user_id == "user-7");
    CHECK(back.history_review_count == 1);
    CHECK(back.weights == s.weights);

    save_style(identity_style(6), path);
    CHECK(load_style(path).is_identity());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_style(path), InputError);
}

TEST_CASE("personalized decoding") {
    SeqConfig cfg;
    cfg.embed_dim = cfg.hidden_dim = 6;
    cfg.attention_clip = 2;
    SentenceAutoencoder ae(12, cfg, 3);
    RecursiveAutoencoder rae(6, 4);
    const ReviewEmbedding review{{0.3, -0.2, 0.5, 0.1, -0.4, 0.2}, 3};
    DecodeOptions opt;
    opt.max_len = 6;

    SUBCASE("identity style reproduces plain decoding") {
        const StyleVector id = identity_style(12);
        opt.mode = DecodeMode::greedy;
        const Document doc = decode_personalized(ae, rae, review, id, opt);
        const auto parts = rae.decode(review);
        REQUIRE(doc.sentences.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) CHECK(doc.sentences[i] == ae.decode_greedy(parts[i], 6));
        opt.mode = DecodeMode::beam;
        const Document beam = decode_personalized(ae, rae, review, id, opt);
        for (std::size_t i = 0; i < 3; ++i) CHECK(beam.sentences[i] == ae.decode_beam(parts[i], 3, 6));
    }

    SUBCASE("sampling is reproducible under a seed") {
        StyleVector s = identity_style(12);
        s.weights[7] = 5.0;
        opt.mode = DecodeMode::sample;
        opt.seed = 99;
        const Document a = decode_personalized(ae, rae, review, s, opt);
        const Document b = decode_personalized(ae, rae, review, s, opt);
        for (std::size_t i = 0; i < a.sentences.size(); ++i) CHECK(a.sentences[i] == b.sentences[i]);
    }

    SUBCASE("a heavy style weight raises the token's frequency") {
        StyleVector s = identity_style(12);
        s.weights[7] = 20.0;
        opt.mode = DecodeMode::sample;
        std::size_t plain = 0, styled = 0;
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            opt.seed = seed;
            for (const auto& sent : decode_personalized(ae, rae, review, identity_style(12), opt).sentences)
                plain += static_cast<std::size_t>(std::count(sent.token_ids.begin(), sent.token_ids.end(), 7));
            for (const auto& sent : decode_personalized(ae, rae, review, s, opt).sentences)
                styled += static_cast<std::size_t>(std::count(sent.token_ids.begin(), sent.token_ids.end(), 7));
        }
        CHECK(styled > plain);
    }

    CHECK_THROWS_AS(decode_personalized(ae, rae, review, identity_style(5), opt), std::invalid_argument);
}
