#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "revgan/autograd.hpp"
#include "revgan/recursive_autoencoder.hpp"
#include "revgan/types.hpp"

namespace revgan {

class Checkpoint;

enum class SampleKind { organic_match, organic_mismatch, generated };

/// Discriminator target: only organic reviews whose sentiment matches the
/// condition are real (1); mismatched organic and generated samples are 0.
inline int target_label(SampleKind kind, Sentiment) { return kind == SampleKind::organic_match ? 1 : 0; }

struct GanConfig {
    std::size_t dim = 300;
    std::size_t noise_dim = 100;
    std::size_t hidden = 300;
    double init_std = 0.02;
    double lr_generator = 5e-5;
    double lr_discriminator = 1e-5;
    int generator_steps = 5;
    int discriminator_steps = 1;
    std::uint64_t total_updates = 30000;
    std::size_t batch_size = 128;
    /// Weight of the paired-reconstruction term in the generator loss.
    double lambda = 1.0;
    double eps = 1e-7;
    /// Mismatched organic reviews per generated sample in a discriminator
    /// batch. With a perfect generator the optimal D on matching reviews is
    /// (1 + r) / (2 + r).
    double mismatch_ratio = 1.0;
    std::uint64_t probe_every = 100;
    /// false trains the ablation: one generator for every label and a
    /// discriminator that sees no condition and treats all organic reviews as real.
    bool conditioned = true;
    std::uint64_t seed = 1;
};

struct TrainingPair {
    std::vector<double> description;
    std::vector<double> review;
    Sentiment sentiment = Sentiment::positive;
    std::size_t sentence_count = 1;
};

struct LabeledSample {
    std::vector<double> x;
    Sentiment condition = Sentiment::positive;
    SampleKind kind = SampleKind::organic_match;
};

struct GanProbe {
    std::uint64_t step = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double d_real = 0.0;
    double d_fake = 0.0;
};

struct GanHistory {
    std::vector<GanProbe> probes;
    std::uint64_t steps = 0;
    std::uint64_t generator_updates = 0;
    std::uint64_t discriminator_updates = 0;
};

void write_probes_csv(const GanHistory& history, const std::filesystem::path& path);

/// One hidden ReLU layer; output through tanh (generator) or sigmoid (discriminator).
struct Mlp {
    Parameter W1, b1, W2, b2;
    bool sigmoid_out = false;

    Mlp() = default;
    Mlp(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out, bool sigmoid_out);

    Matrix forward(const Matrix& x) const;
    Var forward(Tape& tape, Var x, bool trainable);
    std::vector<Parameter*> parameters() { return {&W1, &b1, &W2, &b2}; }
};

/// Generators map [description | noise] to a review embedding; one
/// discriminator scores [review | condition] with the condition as a +-1 scalar.
class ConditionalGan {
public:
    ConditionalGan() = default;
    explicit ConditionalGan(const GanConfig& config);

    const GanConfig& config() const { return config_; }

    /// Deterministic in (parameters, description, noise). Throws
    /// std::invalid_argument on dimension mismatches.
    std::vector<double> generate(const std::vector<double>& description, const std::vector<double>& noise,
                                 Sentiment c) const;
    /// Draws noise from `rng`; the sentence count is the training median.
    ReviewEmbedding generate(const ReviewEmbedding& description, Sentiment c, std::mt19937_64& rng) const;
    std::vector<double> sample_noise(std::mt19937_64& rng) const;

    double discriminate(const std::vector<double>& x, Sentiment c) const;

    /// -1/2 mean_{target 1} log D - 1/2 mean_{target 0} log(1 - D), logs clipped at eps.
    /// Throws std::invalid_argument unless both targets occur.
    Var discriminator_loss(Tape& tape, const std::vector<LabeledSample>& batch);
    /// -mean log D(G(description, noise) | c) + lambda * mse(G(...), paired review).
    /// The discriminator is read-only here.
    Var generator_loss(Tape& tape, const std::vector<const TrainingPair*>& pairs, const Matrix& noise, Sentiment c);

    /// Scheduler: each cycle runs generator_steps generator updates then
    /// discriminator_steps discriminator updates. On a non-finite loss the
    /// parameters are rolled back to the last probe and NumericalError is thrown.
    GanHistory train(const std::vector<TrainingPair>& pairs,
                     const std::function<void(const GanProbe&)>& on_probe = {});

    Mlp& generator(Sentiment c);
    const Mlp& generator(Sentiment c) const;
    Mlp& discriminator() { return disc_; }
    std::vector<Parameter*> generator_parameters();
    std::vector<Parameter*> discriminator_parameters() { return disc_.parameters(); }

    std::size_t sentence_count() const { return sentence_count_; }

    void save(Checkpoint& ckpt) const;
    static ConditionalGan load(const Checkpoint& ckpt);

private:
    double condition_value(Sentiment c) const;
    Matrix generator_input(const std::vector<const TrainingPair*>& pairs, const Matrix& noise) const;

    GanConfig config_;
    Mlp gen_pos_, gen_neg_;
    Mlp disc_;
    std::size_t sentence_count_ = 1;
};

}  // namespace revgan
