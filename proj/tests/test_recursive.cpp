#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "revgan/checkpoint.hpp"
#include "revgan/optim.hpp"
#include "revgan/recursive_autoencoder.hpp"

using namespace revgan;

namespace {

std::vector<SentenceEmbedding> random_review(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    std::vector<SentenceEmbedding> r(n, SentenceEmbedding(d));
    for (auto& e : r)
        for (double& x : e) x = u(rng);
    return r;
}

// Scalar reference for one merge: tanh(sum_i [l | r]_i W(i, j) + bias_j).
std::vector<double> merge_oracle(const std::vector<double>& l, const std::vector<double>& r, const Matrix& W,
                                 const Matrix& bias) {
    std::vector<double> in(l);
    in.insert(in.end(), r.begin(), r.end());
    std::vector<double> out(W.cols());
    for (std::size_t j = 0; j < W.cols(); ++j) {
        double s = bias[j];
        for (std::size_t i = 0; i < in.size(); ++i) s += in[i] * W(i, j);
        out[j] = std::tanh(s);
    }
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    return dot(a, b) / (l2_norm(a) * l2_norm(b));
}

RecursiveAutoencoder randomized(std::size_t d, std::uint64_t seed) {
    RecursiveAutoencoder rae(d, seed, 0.5);
    std::mt19937_64 rng(seed + 100);
    init_uniform(rae.b, -0.5, 0.5, rng);
    init_uniform(rae.b_d, -0.5, 0.5, rng);
    return rae;
}

}  // namespace

TEST_CASE("shapes") {
    RecursiveAutoencoder rae(300, 1);
    CHECK(rae.W_e.value.rows() == 600);
    CHECK(rae.W_e.value.cols() == 300);
    CHECK(rae.W_d.value.rows() == 300);
    CHECK(rae.W_d.value.cols() == 600);
    CHECK(rae.b_d.value.cols() == 600);
}

TEST_CASE("single sentence passes through unchanged") {
    const RecursiveAutoencoder rae = randomized(3, 2);
    const SentenceEmbedding e{0.1, -0.2, 0.3};
    const ReviewEmbedding r = rae.encode({e});
    CHECK(r.vector == e);
    CHECK(r.sentence_count == 1);
    CHECK(rae.decode(r) == std::vector<SentenceEmbedding>{e});
    CHECK_THROWS_AS(rae.encode({}), std::invalid_argument);
    CHECK_THROWS_AS(rae.encode({{1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("merge chain matches a hand-unrolled oracle") {
    const RecursiveAutoencoder rae = randomized(3, 3);
    std::mt19937_64 rng(4);
    const auto sentences = random_review(4, 3, rng);

    const auto y2 = merge_oracle(sentences[0], sentences[1], rae.W_e.value, rae.b.value);
    CHECK(rae.encode({sentences[0], sentences[1]}).vector == y2);
    const auto y3 = merge_oracle(y2, sentences[2], rae.W_e.value, rae.b.value);
    const auto y4 = merge_oracle(y3, sentences[3], rae.W_e.value, rae.b.value);
    const ReviewEmbedding root = rae.encode(sentences);
    CHECK(root.sentence_count == 4);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(root.vector[j] == doctest::Approx(y4[j]).epsilon(1e-14));
        CHECK(std::abs(root.vector[j]) < 1.0);
    }
}

TEST_CASE("unfold splits the reconstruction into children") {
    const RecursiveAutoencoder rae = randomized(3, 5);
    const ReviewEmbedding root{{0.2, -0.4, 0.6}, 2};
    std::vector<double> full(6);
    for (std::size_t j = 0; j < 6; ++j) {
        double s = rae.b_d.value[j];
        for (std::size_t i = 0; i < 3; ++i) s += root.vector[i] * rae.W_d.value(i, j);
        full[j] = std::tanh(s);
    }
    const auto parts = rae.decode(root);
    REQUIRE(parts.size() == 2);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(parts[0][j] == doctest::Approx(full[j]).epsilon(1e-14));
        CHECK(parts[1][j] == doctest::Approx(full[3 + j]).epsilon(1e-14));
    }
    CHECK(rae.decode({root.vector, 5}).size() == 5);
}

TEST_CASE("loss gradients match finite differences") {
    RecursiveAutoencoder rae = randomized(4, 6);
    std::mt19937_64 rng(7);
    const auto a = random_review(3, 4, rng), b = random_review(2, 4, rng), c = random_review(1, 4, rng);
    auto loss = [&](Tape& t) { return rae.batch_loss(t, {&a, &b, &c}); };
    testing::GradMismatch w;
    const double err = testing::gradcheck(rae.parameters(), loss, &w);
    INFO(w.param, "[", w.index, "] analytic=", w.analytic, " numeric=", w.numeric);
    CHECK(err < 1e-4);
}

TEST_CASE("batch loss ignores review order") {
    RecursiveAutoencoder rae = randomized(4, 8);
    std::mt19937_64 rng(9);
    const auto a = random_review(3, 4, rng), b = random_review(4, 4, rng), c = random_review(2, 4, rng);
    Tape t1, t2;
    CHECK(rae.batch_loss(t1, {&a, &b, &c}).scalar() == doctest::Approx(rae.batch_loss(t2, {&c, &a, &b}).scalar()));
}

TEST_CASE("single-sentence corpus trains as a no-op") {
    RecursiveAutoencoder rae = randomized(3, 10);
    const Matrix before = rae.W_e.value;
    RecursiveTrainConfig cfg;
    cfg.epochs = 5;
    const auto hist = rae.train({{{0.1, 0.2, 0.3}}, {{0.0, 0.5, -0.5}}}, cfg);
    CHECK(hist == std::vector<double>(5, 0.0));
    CHECK(rae.W_e.value == before);
}

TEST_CASE("overfitting a two-sentence review cuts the loss tenfold") {
    RecursiveAutoencoder rae(4, 11);
    std::mt19937_64 rng(12);
    const auto review = random_review(2, 4, rng);
    RecursiveTrainConfig cfg;
    cfg.epochs = 1000;
    cfg.learning_rate = 1e-2;
    cfg.halve_every = 0;
    const auto hist = rae.train({review}, cfg);
    CHECK(hist.back() * 10.0 <= hist.front());
}

TEST_CASE("encode then decode recovers an overfit three-sentence review") {
    RecursiveAutoencoder rae(8, 13);
    std::mt19937_64 rng(14);
    const auto review = random_review(3, 8, rng);
    RecursiveTrainConfig cfg;
    cfg.epochs = 3000;
    cfg.learning_rate = 1e-2;
    cfg.halve_every = 1000;
    rae.train({review}, cfg);
    const auto back = rae.decode(rae.encode(review));
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(cosine(back[i], review[i]) >= 0.95);

    Checkpoint ck;
    rae.save(ck);
    const RecursiveAutoencoder loaded = RecursiveAutoencoder::load(ck);
    CHECK(loaded.encode(review) == rae.encode(review));
}
