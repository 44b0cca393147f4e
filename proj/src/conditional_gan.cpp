#include "revgan/conditional_gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "revgan/checkpoint.hpp"
#include "revgan/optim.hpp"

namespace revgan {

namespace {

void add_bias_rows(Matrix& m, const Matrix& bias) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<Matrix> snapshot(const std::vector<Parameter*>& params) {
    std::vector<Matrix> out;
    out.reserve(params.size());
    for (const Parameter* p : params) out.push_back(p->value);
    return out;
}

void restore(const std::vector<Parameter*>& params, const std::vector<Matrix>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

void write_probes_csv(const GanHistory& history, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    f.precision(17);
    f << "step,d_loss,g_loss,d_real,d_fake\n";
    for (const auto& p : history.probes) {
        f << p.step << ',' << p.d_loss << ',' << p.g_loss << ',' << p.d_real << ',' << p.d_fake << '\n';
    }
}

Mlp::Mlp(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out, bool sigmoid_out_)
    : W1(prefix + ".W1", in, hidden),
      b1(prefix + ".b1", 1, hidden),
      W2(prefix + ".W2", hidden, out),
      b2(prefix + ".b2", 1, out),
      sigmoid_out(sigmoid_out_) {}

Matrix Mlp::forward(const Matrix& x) const {
    Matrix h, y;
    kernels::matmul(x, W1.value, h);
    add_bias_rows(h, b1.value);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0, h[i]);
    kernels::matmul(h, W2.value, y);
    add_bias_rows(y, b2.value);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = sigmoid_out ? sigmoid(y[i]) : std::tanh(y[i]);
    return y;
}

Var Mlp::forward(Tape& tape, Var x, bool trainable) {
    auto bind = [&](Parameter& p) { return trainable ? tape.param(p) : tape.frozen(p.value); };
    using namespace ag;
    const Var h = relu(add_bias(matmul(x, bind(W1)), bind(b1)));
    const Var y = add_bias(matmul(h, bind(W2)), bind(b2));
    return sigmoid_out ? ag::sigmoid(y) : ag::tanh(y);
}

ConditionalGan::ConditionalGan(const GanConfig& config)
    : config_(config),
      gen_pos_("gan.gen_pos", config.dim + config.noise_dim, config.hidden, config.dim, false),
      gen_neg_("gan.gen_neg", config.dim + config.noise_dim, config.hidden, config.dim, false),
      disc_("gan.disc", config.dim + 1, config.hidden, 1, true) {
    if (config.dim == 0 || config.hidden == 0) throw std::invalid_argument("ConditionalGan: zero dimension");
    if (config.generator_steps < 1 || config.discriminator_steps < 1) {
        throw std::invalid_argument("ConditionalGan: update ratio needs at least one step of each kind");
    }
    std::mt19937_64 rng(config.seed);
    for (Mlp* m : {&gen_pos_, &gen_neg_, &disc_}) {
        init_normal(m->W1, 0.0, config.init_std, rng);
        init_normal(m->W2, 0.0, config.init_std, rng);
    }
}

Mlp& ConditionalGan::generator(Sentiment c) {
    return (!config_.conditioned || c != Sentiment::negative) ? gen_pos_ : gen_neg_;
}

const Mlp& ConditionalGan::generator(Sentiment c) const {
    return (!config_.conditioned || c != Sentiment::negative) ? gen_pos_ : gen_neg_;
}

std::vector<Parameter*> ConditionalGan::generator_parameters() {
    auto ps = gen_pos_.parameters();
    if (config_.conditioned) {
        for (Parameter* p : gen_neg_.parameters()) ps.push_back(p);
    }
    return ps;
}

double ConditionalGan::condition_value(Sentiment c) const {
    if (!config_.conditioned) return 0.0;
    if (c == Sentiment::neutral) throw std::invalid_argument("condition must be positive or negative");
    return c == Sentiment::positive ? 1.0 : -1.0;
}

std::vector<double> ConditionalGan::sample_noise(std::mt19937_64& rng) const {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> z(config_.noise_dim);
    for (double& v : z) v = n(rng);
    return z;
}

std::vector<double> ConditionalGan::generate(const std::vector<double>& description, const std::vector<double>& noise,
                                             Sentiment c) const {
    if (description.size() != config_.dim) throw std::invalid_argument("generate: description dimension mismatch");
    if (noise.size() != config_.noise_dim) throw std::invalid_argument("generate: noise dimension mismatch");
    Matrix in(1, config_.dim + config_.noise_dim);
    std::copy(description.begin(), description.end(), in.data());
    std::copy(noise.begin(), noise.end(), in.data() + config_.dim);
    return generator(c).forward(in).values();
}

ReviewEmbedding ConditionalGan::generate(const ReviewEmbedding& description, Sentiment c, std::mt19937_64& rng) const {
    return {generate(description.vector, sample_noise(rng), c), sentence_count_};
}

double ConditionalGan::discriminate(const std::vector<double>& x, Sentiment c) const {
    if (x.size() != config_.dim) throw std::invalid_argument("discriminate: dimension mismatch");
    Matrix in(1, config_.dim + 1);
    std::copy(x.begin(), x.end(), in.data());
    in[config_.dim] = condition_value(c);
    return disc_.forward(in)[0];
}

Var ConditionalGan::discriminator_loss(Tape& tape, const std::vector<LabeledSample>& batch) {
    const std::size_t d = config_.dim;
    Matrix x(batch.size(), d + 1);
    std::vector<double> real(batch.size()), fake(batch.size());
    bool any_real = false, any_fake = false;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].x.size() != d) throw std::invalid_argument("discriminator_loss: sample dimension mismatch");
        std::copy(batch[i].x.begin(), batch[i].x.end(), x.row(i).begin());
        x(i, d) = condition_value(batch[i].condition);
        const int t = config_.conditioned ? target_label(batch[i].kind, batch[i].condition)
                                          : (batch[i].kind == SampleKind::generated ? 0 : 1);
        real[i] = t;
        fake[i] = 1 - t;
        any_real |= t == 1;
        any_fake |= t == 0;
    }
    if (!any_real || !any_fake) {
        throw std::invalid_argument("discriminator_loss: batch needs both real and fake targets");
    }
    using namespace ag;
    const Var p = clamp(disc_.forward(tape, tape.constant(std::move(x)), true), config_.eps, 1.0 - config_.eps);
    const Var l_real = masked_mean(ag::log(p), real);
    const Var l_fake = masked_mean(ag::log(one_minus(p)), fake);
    return scale(l_real + l_fake, -0.5);
}

Matrix ConditionalGan::generator_input(const std::vector<const TrainingPair*>& pairs, const Matrix& noise) const {
    const std::size_t d = config_.dim, nz = config_.noise_dim;
    require_shape(noise, pairs.size(), nz, "generator noise");
    Matrix in(pairs.size(), d + nz);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i]->description.size() != d) throw std::invalid_argument("generator: description dimension mismatch");
        auto row = in.row(i);
        std::copy(pairs[i]->description.begin(), pairs[i]->description.end(), row.begin());
        std::copy(noise.row(i).begin(), noise.row(i).end(), row.begin() + static_cast<long>(d));
    }
    return in;
}

Var ConditionalGan::generator_loss(Tape& tape, const std::vector<const TrainingPair*>& pairs, const Matrix& noise,
                                   Sentiment c) {
    if (pairs.empty()) throw std::invalid_argument("generator_loss: empty batch");
    const std::size_t d = config_.dim;
    Matrix real(pairs.size(), d);
    Matrix cond(pairs.size(), 1, condition_value(c));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i]->review.size() != d) throw std::invalid_argument("generator_loss: review dimension mismatch");
        std::copy(pairs[i]->review.begin(), pairs[i]->review.end(), real.row(i).begin());
    }
    using namespace ag;
    const Var g = generator(c).forward(tape, tape.constant(generator_input(pairs, noise)), true);
    const Var p = clamp(disc_.forward(tape, concat_cols(g, tape.constant(std::move(cond))), false), config_.eps,
                        1.0 - config_.eps);
    Var loss = scale(mean(ag::log(p)), -1.0);
    if (config_.lambda != 0.0) loss = loss + scale(mse(g, tape.constant(std::move(real))), config_.lambda);
    return loss;
}

GanHistory ConditionalGan::train(const std::vector<TrainingPair>& pairs,
                                 const std::function<void(const GanProbe&)>& on_probe) {
    std::vector<const TrainingPair*> pos, neg, all;
    std::vector<std::size_t> counts;
    for (const auto& p : pairs) {
        if (p.sentiment == Sentiment::positive) pos.push_back(&p);
        if (p.sentiment == Sentiment::negative) neg.push_back(&p);
        if (p.sentiment != Sentiment::neutral) {
            all.push_back(&p);
            counts.push_back(p.sentence_count);
        }
    }
    if (config_.conditioned && (pos.empty() || neg.empty())) {
        throw InputError("GAN training needs pairs of both sentiments (have " + std::to_string(pos.size()) +
                         " positive, " + std::to_string(neg.size()) + " negative)");
    }
    if (all.empty()) throw InputError("GAN training needs at least one labeled pair");
    std::nth_element(counts.begin(), counts.begin() + static_cast<long>(counts.size() / 2), counts.end());
    sentence_count_ = std::max<std::size_t>(1, counts[counts.size() / 2]);

    const std::vector<Sentiment> conditions =
        config_.conditioned ? std::vector<Sentiment>{Sentiment::positive, Sentiment::negative}
                            : std::vector<Sentiment>{Sentiment::positive};
    auto pool = [&](Sentiment c) -> const std::vector<const TrainingPair*>& {
        if (!config_.conditioned) return all;
        return c == Sentiment::positive ? pos : neg;
    };

    std::mt19937_64 rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t B = std::max<std::size_t>(1, config_.batch_size);
    auto draw = [&](const std::vector<const TrainingPair*>& from) {
        std::uniform_int_distribution<std::size_t> pick(0, from.size() - 1);
        std::vector<const TrainingPair*> out(B);
        for (auto& p : out) p = from[pick(rng)];
        return out;
    };
    auto noise_batch = [&](std::mt19937_64& r, std::size_t n) {
        std::normal_distribution<double> nd(0.0, 1.0);
        Matrix z(n, config_.noise_dim);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = nd(r);
        return z;
    };

    // Fixed probe set so probes are comparable across steps.
    std::map<Sentiment, std::vector<const TrainingPair*>> probe_pairs;
    std::map<Sentiment, Matrix> probe_noise;
    std::mt19937_64 probe_rng(config_.seed + 17);
    for (Sentiment c : conditions) {
        const auto& from = pool(c);
        probe_pairs[c].assign(from.begin(), from.begin() + static_cast<long>(std::min<std::size_t>(from.size(), 256)));
        probe_noise[c] = noise_batch(probe_rng, probe_pairs[c].size());
    }

    GanHistory hist;
    double last_d = 0.0, last_g = 0.0;
    auto probe = [&](std::uint64_t step) {
        double real_sum = 0.0, fake_sum = 0.0;
        std::size_t n = 0;
        for (Sentiment c : conditions) {
            const auto& ps = probe_pairs[c];
            const Matrix fake = generator(c).forward(generator_input(ps, probe_noise[c]));
            for (std::size_t i = 0; i < ps.size(); ++i) {
                real_sum += discriminate(ps[i]->review, c);
                fake_sum += discriminate({fake.row(i).begin(), fake.row(i).end()}, c);
            }
            n += ps.size();
        }
        GanProbe p{step, last_d, last_g, real_sum / static_cast<double>(n), fake_sum / static_cast<double>(n)};
        hist.probes.push_back(p);
        if (on_probe) on_probe(p);
    };

    auto gen_params = generator_parameters();
    auto disc_params = discriminator_parameters();
    std::vector<Parameter*> every(gen_params);
    every.insert(every.end(), disc_params.begin(), disc_params.end());
    auto good = snapshot(every);
    Adam g_opt(gen_params), d_opt(disc_params);
    const auto mismatched = static_cast<std::size_t>(std::llround(config_.mismatch_ratio * static_cast<double>(B)));
    const std::uint64_t cycle = static_cast<std::uint64_t>(config_.generator_steps + config_.discriminator_steps);

    for (std::uint64_t step = 0; step < config_.total_updates; ++step) {
        const bool generator_turn = step % cycle < static_cast<std::uint64_t>(config_.generator_steps);
        double value = 0.0;
        if (generator_turn) {
            g_opt.zero_grad();
            Tape tape;
            Var loss;
            for (std::size_t k = 0; k < conditions.size(); ++k) {
                const Var l = generator_loss(tape, draw(pool(conditions[k])), noise_batch(rng, B), conditions[k]);
                loss = k == 0 ? l : loss + l;
            }
            value = loss.scalar();
            if (std::isfinite(value)) {
                tape.backward(loss);
                g_opt.step(config_.lr_generator);
                ++hist.generator_updates;
                last_g = value;
            }
        } else {
            std::vector<LabeledSample> batch;
            for (Sentiment c : conditions) {
                for (const TrainingPair* p : draw(pool(c))) batch.push_back({p->review, c, SampleKind::organic_match});
                if (config_.conditioned && mismatched > 0) {
                    const auto& other = pool(opposite(c));
                    std::uniform_int_distribution<std::size_t> pick(0, other.size() - 1);
                    for (std::size_t i = 0; i < mismatched; ++i) {
                        batch.push_back({other[pick(rng)]->review, c, SampleKind::organic_mismatch});
                    }
                }
                const Matrix fake = generator(c).forward(generator_input(draw(pool(c)), noise_batch(rng, B)));
                for (std::size_t i = 0; i < fake.rows(); ++i) {
                    batch.push_back({{fake.row(i).begin(), fake.row(i).end()}, c, SampleKind::generated});
                }
            }
            d_opt.zero_grad();
            Tape tape;
            const Var loss = discriminator_loss(tape, batch);
            value = loss.scalar();
            if (std::isfinite(value)) {
                tape.backward(loss);
                d_opt.step(config_.lr_discriminator);
                ++hist.discriminator_updates;
                last_d = value;
            }
        }
        bool finite = std::isfinite(value);
        for (const Parameter* p : every) finite = finite && p->value.all_finite();
        if (!finite) {
            restore(every, good);
            throw NumericalError("GAN training: non-finite " + std::string(generator_turn ? "generator" : "discriminator") +
                                 " loss at update " + std::to_string(step + 1) +
                                 "; parameters rolled back to the last probe");
        }
        hist.steps = step + 1;
        if (config_.probe_every > 0 && hist.steps % config_.probe_every == 0) {
            probe(hist.steps);
            good = snapshot(every);
        }
    }
    if (hist.probes.empty() || hist.probes.back().step != hist.steps) probe(hist.steps);
    return hist;
}

void ConditionalGan::save(Checkpoint& ckpt) const {
    for (const Mlp* m : {&gen_pos_, &gen_neg_, &disc_}) {
        for (const Parameter* p : {&m->W1, &m->b1, &m->W2, &m->b2}) ckpt.put(*p);
    }
    ckpt.meta["gan"] = {{"dim", config_.dim},
                        {"noise_dim", config_.noise_dim},
                        {"hidden", config_.hidden},
                        {"conditioned", config_.conditioned},
                        {"lambda", config_.lambda},
                        {"eps", config_.eps},
                        {"sentence_count", sentence_count_}};
}

ConditionalGan ConditionalGan::load(const Checkpoint& ckpt) {
    if (!ckpt.meta.contains("gan")) throw InputError("checkpoint has no GAN");
    const auto& m = ckpt.meta["gan"];
    GanConfig cfg;
    cfg.dim = m.at("dim").get<std::size_t>();
    cfg.noise_dim = m.at("noise_dim").get<std::size_t>();
    cfg.hidden = m.at("hidden").get<std::size_t>();
    cfg.conditioned = m.at("conditioned").get<bool>();
    cfg.lambda = m.at("lambda").get<double>();
    cfg.eps = m.at("eps").get<double>();
    ConditionalGan gan(cfg);
    for (Mlp* mlp : {&gan.gen_pos_, &gan.gen_neg_, &gan.disc_}) {
        for (Parameter* p : mlp->parameters()) ckpt.restore(*p);
    }
    gan.sentence_count_ = m.at("sentence_count").get<std::size_t>();
    return gan;
}

}  // namespace revgan
