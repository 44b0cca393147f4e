#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "revgan/checkpoint.hpp"
#include "revgan/optim.hpp"
#include "revgan/seq_autoencoder.hpp"

using namespace revgan;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Sentence ids(std::initializer_list<TokenId> t) {
    Sentence s{t};
    s.token_ids.push_back(Vocabulary::eos);
    return s;
}

SeqConfig tiny(std::size_t d, bool attention = true) {
    SeqConfig c;
    c.embed_dim = d;
    c.hidden_dim = d;
    c.attention_clip = 1;
    c.use_attention = attention;
    c.max_len = 8;
    return c;
}

}  // namespace

TEST_CASE("GRU step matches a scalar evaluation of the gate equations") {
    GruCell cell("g", 2, 2);
    std::mt19937_64 rng(4);
    for (Parameter* p : cell.parameters()) init_uniform(*p, -0.5, 0.5, rng);
    const Matrix x(1, 2, {0.3, -0.7});
    const Matrix h(1, 2, {0.1, 0.4});

    auto lin = [&](const Parameter& W, const Parameter& U, const Parameter& b, const double* hh, std::size_t j) {
        double s = b.value[j];
        for (std::size_t i = 0; i < 2; ++i) s += x[i] * W.value(i, j) + hh[i] * U.value(i, j);
        return s;
    };
    double z[2], r[2], rh[2], expect[2];
    for (std::size_t j = 0; j < 2; ++j) {
        z[j] = sig(lin(cell.W_z, cell.U_z, cell.b_z, h.data(), j));
        r[j] = sig(lin(cell.W_r, cell.U_r, cell.b_r, h.data(), j));
        rh[j] = r[j] * h[j];
    }
    for (std::size_t j = 0; j < 2; ++j) {
        const double cand = std::tanh(lin(cell.W_h, cell.U_h, cell.b_h, rh, j));
        expect[j] = (1 - z[j]) * h[j] + z[j] * cand;
    }
    const Matrix got = gru_step(cell, x, h);
    CHECK(got[0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(got[1] == doctest::Approx(expect[1]).epsilon(1e-12));

    Tape t;
    const Matrix taped = gru_step(bind(t, cell), t.constant(x), t.constant(h)).value();
    CHECK(taped[0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(taped[1] == doctest::Approx(expect[1]).epsilon(1e-12));

    CHECK_THROWS_AS(gru_step(cell, Matrix(1, 3), h), std::invalid_argument);
}

TEST_CASE("GRU gradients match finite differences") {
    GruCell cell("g", 3, 2);
    std::mt19937_64 rng(6);
    for (Parameter* p : cell.parameters()) init_uniform(*p, -0.5, 0.5, rng);
    Parameter x("x", 2, 3);
    init_uniform(x, -1, 1, rng);
    auto loss = [&](Tape& t) {
        GruVars v = bind(t, cell);
        Var h = t.constant(Matrix(2, 2));
        for (int s = 0; s < 3; ++s) h = gru_step(v, t.param(x), h);
        return ag::sum(h * h);
    };
    auto ps = cell.parameters();
    ps.push_back(&x);
    CHECK(testing::gradcheck(ps, loss) < 1e-4);
}

TEST_CASE("attention weights are a distribution over valid positions") {
    AttentionLayer layer("a", 3, 2);
    std::mt19937_64 rng(8);
    for (Parameter* p : layer.parameters()) init_uniform(*p, -1, 1, rng);
    Matrix in(4, 3);
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = std::sin(static_cast<double>(i));
    const std::vector<double> mask{1, 1, 1, 0};
    const AttentionResult res = attend(layer, in, mask);
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) s += res.weights(i, j);
        CHECK(s == doctest::Approx(1.0));
        CHECK(res.weights(i, 3) == 0.0);
    }
    CHECK(res.output.all_finite());
}

TEST_CASE("autoencoder loss gradients match finite differences") {
    for (bool attention : {true, false}) {
        CAPTURE(attention);
        SentenceAutoencoder ae(8, tiny(3, attention), 17);
        const Sentence a = ids({4, 5, 6}), b = ids({7});
        const Batch batch = make_batch({&a, &b});
        auto loss = [&](Tape& t) { return ae.reconstruction_loss(t, batch, true); };
        testing::GradMismatch w;
        const double err = testing::gradcheck(ae.parameters(), loss, &w);
        INFO(w.param, "[", w.index, "] analytic=", w.analytic, " numeric=", w.numeric);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("padding does not change a sentence embedding") {
    SentenceAutoencoder ae(10, tiny(4), 3);
    const Sentence shortest = ids({4}), mid = ids({5, 6}), longest = ids({7, 8, 9, 4, 5});
    const Matrix batch = ae.encode_batch(make_batch({&shortest, &mid, &longest}));
    for (const auto& [row, s] : {std::pair{0, &shortest}, {1, &mid}, {2, &longest}}) {
        const SentenceEmbedding alone = ae.encode_sentence(*s);
        for (std::size_t j = 0; j < alone.size(); ++j) {
            CHECK(batch(row, j) == doctest::Approx(alone[j]).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(ae.encode_sentence(Sentence{}), std::invalid_argument);
}

TEST_CASE("embeddings stay bounded and token log-probs are normalized") {
    SentenceAutoencoder ae(9, tiny(4), 5);
    const Sentence s = ids({4, 8, 8, 5});
    const SentenceEmbedding e = ae.encode_sentence(s);
    CHECK(e.size() == 4);
    for (double v : e) CHECK(std::abs(v) < 1.0);
    const auto lp = ae.token_log_probs(s);
    CHECK(lp.size() == s.token_ids.size());
    for (double v : lp) CHECK(v < 0.0);

    auto model = ae.decoder(e);
    Matrix next;
    std::vector<double> dist;
    model.step(model.initial(), Vocabulary::sos, next, dist);
    double total = 0;
    for (double v : dist) total += std::exp(v);
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("training reconstructs a small corpus") {
    const std::vector<Sentence> corpus{ids({4, 5, 6}), ids({7, 8}), ids({9, 10, 11, 4}), ids({5, 9}),
                                       ids({11, 6, 7}), ids({8, 10})};
    SentenceAutoencoder ae(12, tiny(16), 21);
    SeqTrainConfig cfg;
    cfg.epochs = 150;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-2;
    cfg.seed = 2;
    const TrainHistory hist = ae.train(corpus, cfg);
    REQUIRE(hist.epoch_loss.size() == 150);
    CHECK(hist.epoch_loss.back() < 0.1 * hist.epoch_loss.front());
    CHECK(hist.learning_rate[49] == doctest::Approx(1e-2));
    CHECK(hist.learning_rate[50] == doctest::Approx(5e-3));
    CHECK(reconstruction_accuracy(ae, corpus) >= 0.9);

    SUBCASE("beam search never scores below greedy and beam 1 equals greedy") {
        for (const auto& s : corpus) {
            const auto e = ae.encode_sentence(s);
            const auto g = greedy_search(ae.decoder(e), 8);
            const auto b1 = beam_search(ae.decoder(e), 1, 8);
            const auto b3 = beam_search(ae.decoder(e), 3, 8);
            CHECK(b1.tokens == g.tokens);
            CHECK(b3.log_prob >= g.log_prob - 1e-12);
        }
    }

    SUBCASE("checkpoint round trip reproduces embeddings") {
        const auto path = std::filesystem::temp_directory_path() / "revgan_seq_roundtrip.ckpt";
        Checkpoint ck;
        ae.save(ck);
        ck.save(path);
        const SentenceAutoencoder back = SentenceAutoencoder::load(Checkpoint::load(path));
        std::filesystem::remove(path);
        CHECK(back.encode_sentence(corpus[2]) == ae.encode_sentence(corpus[2]));
        CHECK(back.decode_greedy(ae.encode_sentence(corpus[0]), 8) == ae.decode_greedy(ae.encode_sentence(corpus[0]), 8));
    }
}

TEST_CASE("checkpoint errors") {
    CHECK_THROWS_AS(Checkpoint::load("/nonexistent/x.ckpt"), PrerequisiteError);
    Checkpoint ck;
    ck.put("a", Matrix(2, 2));
    CHECK_THROWS_AS(ck.get("a", 3, 2), InputError);
    CHECK_THROWS_AS(ck.get("b"), InputError);
    CHECK_THROWS_AS(SentenceAutoencoder::load(ck), InputError);
}

TEST_CASE("zero GRU halves the previous state") {
    GruCell cell("g", 3, 3);
    const Matrix h(1, 3, {0.4, -1.0, 2.0});
    const Matrix out = gru_step(cell, Matrix(1, 3, {1.0, 2.0, 3.0}), h);
    for (std::size_t j = 0; j < 3; ++j) CHECK(out[j] == 0.5 * h[j]);
    CHECK(gru_step(cell, Matrix(1, 3), Matrix(1, 3)) == Matrix(1, 3));
}

TEST_CASE("attention degenerate cases") {
    AttentionLayer layer("a", 2, 2);
    std::mt19937_64 rng(1);
    init_uniform(layer.W_v, -1, 1, rng);
    SUBCASE("single position returns its value projection") {
        init_uniform(layer.W_q, -1, 1, rng);
        init_uniform(layer.W_k, -1, 1, rng);
        const Matrix x(1, 2, {0.7, -0.2});
        const AttentionResult r = attend(layer, x);
        const Matrix expect = kernels::matmul(x, layer.W_v.value);
        CHECK(r.output[0] == doctest::Approx(expect[0]));
        CHECK(r.output[1] == doctest::Approx(expect[1]));
        CHECK(r.weights[0] == 1.0);
    }
    SUBCASE("constant logits give uniform weights") {
        // Zero query projection makes every logit zero.
        Matrix x(3, 2, {1, 2, 3, 4, 5, 6});
        const AttentionResult r = attend(layer, x);
        for (std::size_t i = 0; i < r.weights.size(); ++i) CHECK(r.weights[i] == doctest::Approx(1.0 / 3));
    }
}
