#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "revgan/autograd.hpp"
#include "revgan/corpus.hpp"
#include "revgan/search.hpp"

namespace revgan {

class Checkpoint;

using SentenceEmbedding = std::vector<double>;

/// Gated recurrent unit in row-vector convention:
///   z = sigmoid(x W_z + h U_z + b_z)
///   r = sigmoid(x W_r + h U_r + b_r)
///   h' = (1 - z) * h + z * tanh(x W_h + (r * h) U_h + b_h)
struct GruCell {
    Parameter W_z, W_r, W_h;
    Parameter U_z, U_r, U_h;
    Parameter b_z, b_r, b_h;

    GruCell() = default;
    GruCell(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim);

    std::size_t input_dim() const { return W_z.value.rows(); }
    std::size_t hidden_dim() const { return U_z.value.rows(); }
    std::vector<Parameter*> parameters();
};

/// One GRU step for a batch of rows. Throws std::invalid_argument on shape mismatch.
Matrix gru_step(const GruCell& cell, const Matrix& x, const Matrix& h_prev);

struct GruVars {
    Var W_z, W_r, W_h, U_z, U_r, U_h, b_z, b_r, b_h;
};
GruVars bind(Tape& tape, GruCell& cell);
GruVars bind_frozen(Tape& tape, const GruCell& cell);
Var gru_step(const GruVars& cell, Var x, Var h_prev);

/// Self-attention with clipped relative-position offsets added to the keys.
struct AttentionLayer {
    Parameter W_q, W_k, W_v;
    /// (2 * clip + 1) x dim offset embeddings.
    Parameter rel;
    std::size_t clip = 8;

    AttentionLayer() = default;
    AttentionLayer(const std::string& prefix, std::size_t dim, std::size_t clip);
    std::vector<Parameter*> parameters();
};

struct AttentionResult {
    Matrix output;   ///< n x dim
    Matrix weights;  ///< n x n, rows sum to one over unmasked keys
};

/// Attention over one sequence (rows of `inputs`). Positions whose mask entry
/// is zero receive zero weight; an empty mask means all positions are valid.
AttentionResult attend(const AttentionLayer& layer, const Matrix& inputs,
                       std::span<const double> mask = {});

struct SeqConfig {
    std::size_t embed_dim = 300;
    std::size_t hidden_dim = 300;
    std::size_t max_len = default_max_len;
    std::size_t attention_clip = 8;
    bool use_attention = true;
    double init_range = 0.1;
};

struct SeqTrainConfig {
    int epochs = 100;
    double learning_rate = 1e-3;
    int halve_every = 50;
    double clip_norm = 1.0;
    std::size_t batch_size = 128;
    std::uint64_t seed = 1;
    /// Called after each epoch with (epoch, mean loss).
    std::function<void(int, double)> on_epoch;
};

struct TrainHistory {
    std::vector<double> epoch_loss;
    std::vector<double> learning_rate;
    /// Largest pre-clip gradient norm seen in each epoch.
    std::vector<double> max_grad_norm;
};

/// Bidirectional GRU encoder with relative-position self-attention, and a GRU
/// decoder initialized from the sentence embedding.
class SentenceAutoencoder {
public:
    SentenceAutoencoder() = default;
    SentenceAutoencoder(std::size_t vocab_size, const SeqConfig& config, std::uint64_t seed);

    const SeqConfig& config() const { return config_; }
    std::size_t vocab_size() const { return embedding_.value.rows(); }
    std::size_t embedding_dim() const { return config_.hidden_dim; }

    /// Sentence embeddings (batch x hidden_dim) for a padded batch.
    Var encode(Tape& tape, const Batch& batch, bool training);
    Matrix encode_batch(const Batch& batch) const;
    /// Throws std::invalid_argument on an empty sentence.
    SentenceEmbedding encode_sentence(const Sentence& sentence) const;

    /// Teacher-forced mean token cross-entropy of reconstructing `batch` from
    /// `embeddings` (batch x hidden_dim).
    Var decoder_loss(Tape& tape, Var embeddings, const Batch& batch);
    Var reconstruction_loss(Tape& tape, const Batch& batch, bool training);

    /// Teacher-forced log-probability of every token of `sentence` (eos included)
    /// given its own embedding.
    std::vector<double> token_log_probs(const Sentence& sentence) const;
    std::vector<double> token_log_probs(const Sentence& sentence, const SentenceEmbedding& e) const;

    class DecoderModel {
    public:
        using State = Matrix;
        DecoderModel(const SentenceAutoencoder& ae, const SentenceEmbedding& e) : ae_(&ae), init_(Matrix::row_vector(e)) {}
        State initial() const { return init_; }
        void step(const State& h, TokenId prev, State& next, std::vector<double>& log_probs) const;

    private:
        const SentenceAutoencoder* ae_;
        Matrix init_;
    };
    DecoderModel decoder(const SentenceEmbedding& e) const;

    Sentence decode_greedy(const SentenceEmbedding& e, std::size_t max_len) const;
    Sentence decode_beam(const SentenceEmbedding& e, std::size_t beam, std::size_t max_len) const;

    TrainHistory train(const std::vector<Sentence>& sentences, const SeqTrainConfig& cfg);
    /// One optimizer pass over the given batches in order; returns token-weighted mean loss.
    double train_epoch(const std::vector<Batch>& batches, class Adam& opt, double lr, double clip_norm,
                       double* max_grad_norm = nullptr);

    std::vector<Parameter*> parameters();
    const Parameter& embeddings() const { return embedding_; }
    const GruCell& encoder_forward() const { return enc_fwd_; }
    const GruCell& decoder_cell() const { return dec_; }

    void save(Checkpoint& ckpt) const;
    static SentenceAutoencoder load(const Checkpoint& ckpt);

private:
    struct Bound;
    Var encode_impl(Tape& tape, const Bound& p, const Batch& batch, bool training);
    Var decoder_impl(Tape& tape, const Bound& p, Var embeddings, const Batch& batch);
    Bound bind_all(Tape& tape, bool trainable);
    Bound bind_frozen(Tape& tape) const;

    SeqConfig config_;
    Parameter embedding_;
    GruCell enc_fwd_, enc_bwd_;
    AttentionLayer attention_;
    Parameter bn_gamma_, bn_beta_;
    mutable ag::BatchNormState bn_state_;
    Parameter proj_W_, proj_b_;
    GruCell dec_;
    Parameter out_W_, out_b_;
};

/// Fraction of target tokens reproduced position-for-position by greedy
/// decoding of each sentence's own embedding.
double reconstruction_accuracy(const SentenceAutoencoder& ae, const std::vector<Sentence>& sentences);

std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace revgan
