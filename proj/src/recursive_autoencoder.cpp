#include "revgan/recursive_autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "revgan/checkpoint.hpp"
#include "revgan/optim.hpp"
#include "revgan/types.hpp"

namespace revgan {

namespace {

Matrix affine_tanh(const Matrix& x, const Matrix& W, const Matrix& bias) {
    Matrix out;
    kernels::matmul(x, W, out);
    for (std::size_t j = 0; j < out.cols(); ++j) out[j] = std::tanh(out[j] + bias[j]);
    return out;
}

Matrix concat(std::span<const double> a, std::span<const double> b) {
    Matrix m(1, a.size() + b.size());
    std::copy(a.begin(), a.end(), m.data());
    std::copy(b.begin(), b.end(), m.data() + a.size());
    return m;
}

}  // namespace

RecursiveAutoencoder::RecursiveAutoencoder(std::size_t dim, std::uint64_t seed, double init_range)
    : W_e("recursive.W_e", 2 * dim, dim),
      b("recursive.b", 1, dim),
      W_d("recursive.W_d", dim, 2 * dim),
      b_d("recursive.b_d", 1, 2 * dim) {
    if (dim == 0) throw std::invalid_argument("RecursiveAutoencoder: zero dimension");
    std::mt19937_64 rng(seed);
    init_uniform(W_e, -init_range, init_range, rng);
    init_uniform(W_d, -init_range, init_range, rng);
}

ReviewEmbedding RecursiveAutoencoder::encode(const std::vector<SentenceEmbedding>& sentences) const {
    if (sentences.empty()) throw std::invalid_argument("encode_review: no sentences");
    for (const auto& e : sentences) {
        if (e.size() != dim()) {
            throw std::invalid_argument("encode_review: sentence embedding of size " + std::to_string(e.size()) +
                                        ", expected " + std::to_string(dim()));
        }
    }
    std::vector<double> y = sentences.front();
    for (std::size_t k = 1; k < sentences.size(); ++k) {
        const Matrix out = affine_tanh(concat(y, sentences[k]), W_e.value, b.value);
        y = out.values();
    }
    return {std::move(y), sentences.size()};
}

std::vector<SentenceEmbedding> RecursiveAutoencoder::decode(const ReviewEmbedding& root) const {
    if (root.vector.size() != dim()) throw std::invalid_argument("decode_review: wrong root dimension");
    if (root.sentence_count == 0) throw std::invalid_argument("decode_review: sentence_count is zero");
    const std::size_t d = dim();
    std::vector<SentenceEmbedding> out(root.sentence_count);
    std::vector<double> cur = root.vector;
    for (std::size_t k = root.sentence_count; k-- > 1;) {
        const Matrix children = affine_tanh(Matrix::row_vector(cur), W_d.value, b_d.value);
        const auto vals = children.values();
        out[k].assign(vals.begin() + static_cast<long>(d), vals.end());
        cur.assign(vals.begin(), vals.begin() + static_cast<long>(d));
    }
    out[0] = std::move(cur);
    return out;
}

Var RecursiveAutoencoder::review_loss(Tape& tape, const std::vector<SentenceEmbedding>& sentences) {
    using namespace ag;
    if (sentences.size() < 2) return tape.constant(Matrix(1, 1));
    const Var We = tape.param(W_e), be = tape.param(b), Wd = tape.param(W_d), bd = tape.param(b_d);
    Var y = tape.constant(Matrix::row_vector(sentences[0]));
    Var loss;
    for (std::size_t k = 1; k < sentences.size(); ++k) {
        const Var children = concat_cols(y, tape.constant(Matrix::row_vector(sentences[k])));
        y = ag::tanh(add_bias(matmul(children, We), be));
        const Var recon = ag::tanh(add_bias(matmul(y, Wd), bd));
        const Var layer = mse(recon, children);
        loss = k == 1 ? layer : loss + layer;
    }
    return loss;
}

Var RecursiveAutoencoder::batch_loss(Tape& tape, const std::vector<const std::vector<SentenceEmbedding>*>& reviews) {
    Var total;
    std::size_t n = 0;
    for (const auto* r : reviews) {
        if (r->size() < 2) continue;
        const Var l = review_loss(tape, *r);
        total = n == 0 ? l : total + l;
        ++n;
    }
    if (n == 0) return tape.constant(Matrix(1, 1));
    return ag::scale(total, 1.0 / static_cast<double>(n));
}

std::vector<double> RecursiveAutoencoder::train(const std::vector<std::vector<SentenceEmbedding>>& reviews,
                                                const RecursiveTrainConfig& cfg) {
    std::vector<const std::vector<SentenceEmbedding>*> usable;
    for (const auto& r : reviews) {
        if (r.size() >= 2) usable.push_back(&r);
    }
    std::vector<double> history;
    Adam opt(parameters());
    const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (usable.empty()) {
            history.push_back(0.0);
            if (cfg.on_epoch) cfg.on_epoch(epoch, 0.0);
            continue;
        }
        const double lr = halving_lr(cfg.learning_rate, epoch, cfg.halve_every);
        std::vector<std::size_t> order(usable.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::vector<const std::vector<SentenceEmbedding>*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(usable[order[i]]);
            opt.zero_grad();
            Tape tape;
            const Var loss = batch_loss(tape, batch);
            const double value = loss.scalar();
            if (!std::isfinite(value)) {
                throw NumericalError("recursive autoencoder: non-finite loss in epoch " + std::to_string(epoch));
            }
            tape.backward(loss);
            clip_grad_norm(opt.params(), cfg.clip_norm);
            opt.step(lr);
            total += value * static_cast<double>(batch.size());
        }
        const double mean = total / static_cast<double>(usable.size());
        history.push_back(mean);
        if (cfg.on_epoch) cfg.on_epoch(epoch, mean);
    }
    return history;
}

void RecursiveAutoencoder::save(Checkpoint& ckpt) const {
    ckpt.put(W_e);
    ckpt.put(b);
    ckpt.put(W_d);
    ckpt.put(b_d);
    ckpt.meta["recursive"] = {{"dim", dim()}};
}

RecursiveAutoencoder RecursiveAutoencoder::load(const Checkpoint& ckpt) {
    if (!ckpt.meta.contains("recursive")) throw InputError("checkpoint has no recursive autoencoder");
    RecursiveAutoencoder rae(ckpt.meta["recursive"].at("dim").get<std::size_t>(), 0);
    for (Parameter* p : rae.parameters()) ckpt.restore(*p);
    return rae;
}

}  // namespace revgan
