#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "revgan/autograd.hpp"
#include "revgan/seq_autoencoder.hpp"

namespace revgan {

class Checkpoint;

struct ReviewEmbedding {
    std::vector<double> vector;
    std::size_t sentence_count = 1;
    friend bool operator==(const ReviewEmbedding&, const ReviewEmbedding&) = default;
};

struct RecursiveTrainConfig {
    int epochs = 100;
    double learning_rate = 1e-3;
    int halve_every = 50;
    double clip_norm = 1.0;
    std::size_t batch_size = 128;
    std::uint64_t seed = 1;
    std::function<void(int, double)> on_epoch;
};

/// Left-leaning chain over sentence embeddings:
///   y_2 = tanh([e_1 | e_2] W_e + b),  y_k = tanh([y_{k-1} | e_k] W_e + b)
/// and the mirrored unfold [y_{k-1} | e_k] ~ tanh(y_k W_d + b_d).
class RecursiveAutoencoder {
public:
    Parameter W_e;  ///< 2d x d
    Parameter b;    ///< 1 x d
    Parameter W_d;  ///< d x 2d
    Parameter b_d;  ///< 1 x 2d

    RecursiveAutoencoder() = default;
    RecursiveAutoencoder(std::size_t dim, std::uint64_t seed, double init_range = 0.1);

    std::size_t dim() const { return b.value.cols(); }

    /// Throws std::invalid_argument on an empty list or a wrongly sized embedding.
    ReviewEmbedding encode(const std::vector<SentenceEmbedding>& sentences) const;
    /// Returns exactly root.sentence_count embeddings, first sentence first.
    std::vector<SentenceEmbedding> decode(const ReviewEmbedding& root) const;

    /// Sum over merge layers of the mean squared unfold error; zero for one sentence.
    Var review_loss(Tape& tape, const std::vector<SentenceEmbedding>& sentences);
    /// Mean review_loss over the reviews that have at least two sentences.
    Var batch_loss(Tape& tape, const std::vector<const std::vector<SentenceEmbedding>*>& reviews);

    /// Per-epoch mean loss. Reviews with fewer than two sentences are ignored;
    /// if none remain every epoch records zero and nothing is updated.
    std::vector<double> train(const std::vector<std::vector<SentenceEmbedding>>& reviews,
                              const RecursiveTrainConfig& cfg);

    std::vector<Parameter*> parameters() { return {&W_e, &b, &W_d, &b_d}; }

    void save(Checkpoint& ckpt) const;
    static RecursiveAutoencoder load(const Checkpoint& ckpt);
};

}  // namespace revgan
