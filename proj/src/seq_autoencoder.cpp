#include "revgan/seq_autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "revgan/checkpoint.hpp"
#include "revgan/optim.hpp"
#include "revgan/types.hpp"

namespace revgan {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void add_row_bias(Matrix& m, const Matrix& bias) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
}

}  // namespace

std::vector<double> log_softmax(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    const double mx = *std::max_element(out.begin(), out.end());
    double denom = 0.0;
    for (double x : out) denom += std::exp(x - mx);
    const double log_denom = std::log(denom) + mx;
    for (double& x : out) x -= log_denom;
    return out;
}

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

GruCell::GruCell(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim)
    : W_z(prefix + ".W_z", input_dim, hidden_dim),
      W_r(prefix + ".W_r", input_dim, hidden_dim),
      W_h(prefix + ".W_h", input_dim, hidden_dim),
      U_z(prefix + ".U_z", hidden_dim, hidden_dim),
      U_r(prefix + ".U_r", hidden_dim, hidden_dim),
      U_h(prefix + ".U_h", hidden_dim, hidden_dim),
      b_z(prefix + ".b_z", 1, hidden_dim),
      b_r(prefix + ".b_r", 1, hidden_dim),
      b_h(prefix + ".b_h", 1, hidden_dim) {}

std::vector<Parameter*> GruCell::parameters() {
    return {&W_z, &W_r, &W_h, &U_z, &U_r, &U_h, &b_z, &b_r, &b_h};
}

Matrix gru_step(const GruCell& cell, const Matrix& x, const Matrix& h_prev) {
    const std::size_t hd = cell.hidden_dim();
    if (x.cols() != cell.input_dim()) {
        throw std::invalid_argument("gru_step: input has " + std::to_string(x.cols()) + " columns, cell expects " +
                                    std::to_string(cell.input_dim()));
    }
    if (h_prev.cols() != hd || h_prev.rows() != x.rows()) {
        throw std::invalid_argument("gru_step: hidden state shape " + h_prev.shape_string() + " mismatches");
    }
    Matrix z, r, c;
    kernels::matmul(x, cell.W_z.value, z);
    kernels::matmul(h_prev, cell.U_z.value, z, true);
    add_row_bias(z, cell.b_z.value);
    kernels::matmul(x, cell.W_r.value, r);
    kernels::matmul(h_prev, cell.U_r.value, r, true);
    add_row_bias(r, cell.b_r.value);
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = sigmoid(z[i]);
        r[i] = sigmoid(r[i]) * h_prev[i];
    }
    kernels::matmul(x, cell.W_h.value, c);
    kernels::matmul(r, cell.U_h.value, c, true);
    add_row_bias(c, cell.b_h.value);
    Matrix h(h_prev.rows(), hd);
    for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * std::tanh(c[i]);
    }
    return h;
}

GruVars bind(Tape& tape, GruCell& cell) {
    return {tape.param(cell.W_z), tape.param(cell.W_r), tape.param(cell.W_h),
            tape.param(cell.U_z), tape.param(cell.U_r), tape.param(cell.U_h),
            tape.param(cell.b_z), tape.param(cell.b_r), tape.param(cell.b_h)};
}

GruVars bind_frozen(Tape& tape, const GruCell& cell) {
    return {tape.frozen(cell.W_z.value), tape.frozen(cell.W_r.value), tape.frozen(cell.W_h.value),
            tape.frozen(cell.U_z.value), tape.frozen(cell.U_r.value), tape.frozen(cell.U_h.value),
            tape.frozen(cell.b_z.value), tape.frozen(cell.b_r.value), tape.frozen(cell.b_h.value)};
}

Var gru_step(const GruVars& c, Var x, Var h) {
    using namespace ag;
    Var z = sigmoid(add_bias(matmul(x, c.W_z) + matmul(h, c.U_z), c.b_z));
    Var r = sigmoid(add_bias(matmul(x, c.W_r) + matmul(h, c.U_r), c.b_r));
    Var cand = ag::tanh(add_bias(matmul(x, c.W_h) + matmul(r * h, c.U_h), c.b_h));
    return one_minus(z) * h + z * cand;
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

AttentionLayer::AttentionLayer(const std::string& prefix, std::size_t dim, std::size_t clip_)
    : W_q(prefix + ".W_q", dim, dim),
      W_k(prefix + ".W_k", dim, dim),
      W_v(prefix + ".W_v", dim, dim),
      rel(prefix + ".rel", 2 * clip_ + 1, dim),
      clip(clip_) {}

std::vector<Parameter*> AttentionLayer::parameters() { return {&W_q, &W_k, &W_v, &rel}; }

AttentionResult attend(const AttentionLayer& layer, const Matrix& inputs, std::span<const double> mask) {
    if (inputs.rows() == 0) throw std::invalid_argument("attend: empty sequence");
    std::vector<double> m(mask.begin(), mask.end());
    if (m.empty()) m.assign(inputs.rows(), 1.0);
    if (m.size() != inputs.rows()) throw std::invalid_argument("attend: mask length mismatch");
    Matrix q, k, v;
    kernels::matmul(inputs, layer.W_q.value, q);
    kernels::matmul(inputs, layer.W_k.value, k);
    kernels::matmul(inputs, layer.W_v.value, v);
    AttentionResult res;
    kernels::attention_forward(q, k, v, layer.rel.value, layer.clip, {1, inputs.rows()}, m,
                               1.0 / std::sqrt(static_cast<double>(q.cols())), res.output, res.weights);
    return res;
}

// ---------------------------------------------------------------------------
// Sentence autoencoder
// ---------------------------------------------------------------------------

struct SentenceAutoencoder::Bound {
    Var emb;
    GruVars fwd, bwd;
    Var W_q, W_k, W_v, rel;
    Var gamma, beta;
    Var proj_W, proj_b;
    GruVars dec;
    Var out_W, out_b;
};

SentenceAutoencoder::SentenceAutoencoder(std::size_t vocab_size, const SeqConfig& config, std::uint64_t seed)
    : config_(config),
      embedding_("sentence.embedding", vocab_size, config.embed_dim),
      enc_fwd_("sentence.enc_fwd", config.embed_dim, config.hidden_dim),
      enc_bwd_("sentence.enc_bwd", config.embed_dim, config.hidden_dim),
      attention_("sentence.attention", 2 * config.hidden_dim, config.attention_clip),
      bn_gamma_("sentence.bn.gamma", 1, 2 * config.hidden_dim),
      bn_beta_("sentence.bn.beta", 1, 2 * config.hidden_dim),
      proj_W_("sentence.proj.W", 2 * config.hidden_dim, config.hidden_dim),
      proj_b_("sentence.proj.b", 1, config.hidden_dim),
      dec_("sentence.dec", config.embed_dim, config.hidden_dim),
      out_W_("sentence.out.W", config.hidden_dim, vocab_size),
      out_b_("sentence.out.b", 1, vocab_size) {
    if (vocab_size <= Vocabulary::special_count) {
        throw std::invalid_argument("SentenceAutoencoder: vocabulary has no regular tokens");
    }
    embedding_.frozen_row = static_cast<long>(Vocabulary::pad);
    std::mt19937_64 rng(seed);
    for (Parameter* p : parameters()) {
        if (p == &bn_gamma_ || p == &bn_beta_) continue;
        init_uniform(*p, -config.init_range, config.init_range, rng);
    }
    bn_gamma_.value.fill(1.0);
    bn_beta_.value.fill(0.0);
    bn_state_.running_mean = Matrix(1, 2 * config.hidden_dim, 0.0);
    bn_state_.running_var = Matrix(1, 2 * config.hidden_dim, 1.0);
}

std::vector<Parameter*> SentenceAutoencoder::parameters() {
    std::vector<Parameter*> ps{&embedding_};
    for (Parameter* p : enc_fwd_.parameters()) ps.push_back(p);
    for (Parameter* p : enc_bwd_.parameters()) ps.push_back(p);
    if (config_.use_attention) {
        for (Parameter* p : attention_.parameters()) ps.push_back(p);
        ps.push_back(&bn_gamma_);
        ps.push_back(&bn_beta_);
    }
    ps.push_back(&proj_W_);
    ps.push_back(&proj_b_);
    for (Parameter* p : dec_.parameters()) ps.push_back(p);
    ps.push_back(&out_W_);
    ps.push_back(&out_b_);
    return ps;
}

SentenceAutoencoder::Bound SentenceAutoencoder::bind_all(Tape& tape, bool) {
    return {tape.param(embedding_),
            bind(tape, enc_fwd_),
            bind(tape, enc_bwd_),
            tape.param(attention_.W_q),
            tape.param(attention_.W_k),
            tape.param(attention_.W_v),
            tape.param(attention_.rel),
            tape.param(bn_gamma_),
            tape.param(bn_beta_),
            tape.param(proj_W_),
            tape.param(proj_b_),
            bind(tape, dec_),
            tape.param(out_W_),
            tape.param(out_b_)};
}

SentenceAutoencoder::Bound SentenceAutoencoder::bind_frozen(Tape& tape) const {
    return {tape.frozen(embedding_.value),
            revgan::bind_frozen(tape, enc_fwd_),
            revgan::bind_frozen(tape, enc_bwd_),
            tape.frozen(attention_.W_q.value),
            tape.frozen(attention_.W_k.value),
            tape.frozen(attention_.W_v.value),
            tape.frozen(attention_.rel.value),
            tape.frozen(bn_gamma_.value),
            tape.frozen(bn_beta_.value),
            tape.frozen(proj_W_.value),
            tape.frozen(proj_b_.value),
            revgan::bind_frozen(tape, dec_),
            tape.frozen(out_W_.value),
            tape.frozen(out_b_.value)};
}

Var SentenceAutoencoder::encode_impl(Tape& tape, const Bound& p, const Batch& batch, bool training) {
    using namespace ag;
    const std::size_t B = batch.batch_size, T = batch.padded_len, h = config_.hidden_dim;
    if (B == 0 || T == 0) throw std::invalid_argument("encode: empty batch");
    const long pad = static_cast<long>(Vocabulary::pad);

    std::vector<std::vector<std::size_t>> ids(T, std::vector<std::size_t>(B));
    std::vector<std::vector<double>> mask(T, std::vector<double>(B));
    std::vector<bool> full(T, true);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t b = 0; b < B; ++b) {
            ids[t][b] = batch.at(b, t);
            mask[t][b] = batch.mask[b * T + t];
            if (mask[t][b] == 0.0) full[t] = false;
        }
    }
    std::vector<Var> xs;
    xs.reserve(T);
    for (std::size_t t = 0; t < T; ++t) xs.push_back(gather_rows(p.emb, ids[t], pad));

    auto advance = [&](const GruVars& cell, Var x, Var hprev, std::size_t t) {
        Var hn = gru_step(cell, x, hprev);
        if (full[t]) return hn;
        return hprev + mul_rows(hn - hprev, mask[t]);
    };

    std::vector<Var> hf(T), hb(T);
    Var state = tape.constant(Matrix(B, h));
    for (std::size_t t = 0; t < T; ++t) {
        state = advance(p.fwd, xs[t], state, t);
        hf[t] = state;
    }
    state = tape.constant(Matrix(B, h));
    for (std::size_t t = T; t-- > 0;) {
        state = advance(p.bwd, xs[t], state, t);
        hb[t] = state;
    }
    Var seq = concat_cols(stack_steps(hf), stack_steps(hb));
    if (config_.use_attention) {
        Var q = ag::matmul(seq, p.W_q);
        Var k = ag::matmul(seq, p.W_k);
        Var v = ag::matmul(seq, p.W_v);
        Var att = attention(q, k, v, p.rel, config_.attention_clip, {B, T}, batch.mask);
        att = batch_norm(att, p.gamma, p.beta, batch.mask, bn_state_, training);
        seq = seq + att;
    }
    std::vector<std::size_t> last(B), first(B);
    for (std::size_t b = 0; b < B; ++b) {
        last[b] = b * T + batch.lengths[b] - 1;
        first[b] = b * T;
    }
    Var final_state = concat_cols(slice_cols(gather_rows(seq, last), 0, h), slice_cols(gather_rows(seq, first), h, h));
    return ag::tanh(add_bias(ag::matmul(final_state, p.proj_W), p.proj_b));
}

Var SentenceAutoencoder::decoder_impl(Tape&, const Bound& p, Var embeddings, const Batch& batch) {
    using namespace ag;
    const std::size_t B = batch.batch_size, T = batch.padded_len;
    require_shape(embeddings.value(), B, config_.hidden_dim, "decoder embeddings");
    const long pad = static_cast<long>(Vocabulary::pad);
    std::vector<Var> hs;
    hs.reserve(T);
    Var state = embeddings;
    std::vector<std::size_t> prev(B, Vocabulary::sos);
    for (std::size_t t = 0; t < T; ++t) {
        Var x = gather_rows(p.emb, prev, pad);
        state = gru_step(p.dec, x, state);
        hs.push_back(state);
        for (std::size_t b = 0; b < B; ++b) prev[b] = batch.at(b, t);
    }
    Var logits = add_bias(ag::matmul(stack_steps(hs), p.out_W), p.out_b);
    return softmax_cross_entropy(logits, batch.ids, batch.mask);
}

Var SentenceAutoencoder::encode(Tape& tape, const Batch& batch, bool training) {
    const Bound p = bind_all(tape, true);
    return encode_impl(tape, p, batch, training);
}

Var SentenceAutoencoder::decoder_loss(Tape& tape, Var embeddings, const Batch& batch) {
    const Bound p = bind_all(tape, true);
    return decoder_impl(tape, p, embeddings, batch);
}

Var SentenceAutoencoder::reconstruction_loss(Tape& tape, const Batch& batch, bool training) {
    const Bound p = bind_all(tape, true);
    Var e = encode_impl(tape, p, batch, training);
    return decoder_impl(tape, p, e, batch);
}

Matrix SentenceAutoencoder::encode_batch(const Batch& batch) const {
    Tape tape;
    const Bound p = bind_frozen(tape);
    // Eval mode leaves the normalization state untouched.
    auto* self = const_cast<SentenceAutoencoder*>(this);
    return self->encode_impl(tape, p, batch, false).value();
}

SentenceEmbedding SentenceAutoencoder::encode_sentence(const Sentence& sentence) const {
    if (sentence.token_ids.empty()) throw std::invalid_argument("encode_sentence: empty sentence");
    for (TokenId id : sentence.token_ids) {
        if (id >= vocab_size()) throw std::out_of_range("encode_sentence: token id outside vocabulary");
    }
    const Matrix e = encode_batch(make_batch({&sentence}));
    return {e.row(0).begin(), e.row(0).end()};
}

void SentenceAutoencoder::DecoderModel::step(const State& h, TokenId prev, State& next,
                                              std::vector<double>& log_probs) const {
    const auto emb = ae_->embedding_.value.row(prev);
    const Matrix x = Matrix::row_vector(emb);
    next = gru_step(ae_->dec_, x, h);
    Matrix logits;
    kernels::matmul(next, ae_->out_W_.value, logits);
    add_row_bias(logits, ae_->out_b_.value);
    log_probs = log_softmax(logits.row(0));
}

SentenceAutoencoder::DecoderModel SentenceAutoencoder::decoder(const SentenceEmbedding& e) const {
    if (e.size() != config_.hidden_dim) {
        throw std::invalid_argument("decoder: embedding has dimension " + std::to_string(e.size()));
    }
    return DecoderModel(*this, e);
}

std::vector<double> SentenceAutoencoder::token_log_probs(const Sentence& sentence, const SentenceEmbedding& e) const {
    const DecoderModel model = decoder(e);
    std::vector<double> out;
    Matrix h = model.initial(), next;
    std::vector<double> lp;
    TokenId prev = Vocabulary::sos;
    for (TokenId tok : sentence.token_ids) {
        model.step(h, prev, next, lp);
        out.push_back(lp[tok]);
        h = std::move(next);
        prev = tok;
    }
    return out;
}

std::vector<double> SentenceAutoencoder::token_log_probs(const Sentence& sentence) const {
    return token_log_probs(sentence, encode_sentence(sentence));
}

Sentence SentenceAutoencoder::decode_greedy(const SentenceEmbedding& e, std::size_t max_len) const {
    return Sentence{greedy_search(decoder(e), max_len).tokens};
}

Sentence SentenceAutoencoder::decode_beam(const SentenceEmbedding& e, std::size_t beam, std::size_t max_len) const {
    return Sentence{beam_search(decoder(e), beam, max_len).tokens};
}

double SentenceAutoencoder::train_epoch(const std::vector<Batch>& batches, Adam& opt, double lr, double clip_norm,
                                        double* max_grad_norm) {
    double total = 0.0, tokens = 0.0;
    const auto params = opt.params();
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const Batch& batch = batches[i];
        opt.zero_grad();
        Tape tape;
        Var loss = reconstruction_loss(tape, batch, true);
        const double value = loss.scalar();
        if (!std::isfinite(value)) {
            throw NumericalError("sentence autoencoder: non-finite loss on batch " + std::to_string(i) + " (" +
                                 std::to_string(batch.batch_size) + " sentences)");
        }
        tape.backward(loss);
        const double norm = clip_grad_norm(params, clip_norm);
        if (!std::isfinite(norm)) {
            throw NumericalError("sentence autoencoder: non-finite gradient norm on batch " + std::to_string(i));
        }
        if (max_grad_norm) *max_grad_norm = std::max(*max_grad_norm, norm);
        opt.step(lr);
        double n = 0.0;
        for (double m : batch.mask) n += m;
        total += value * n;
        tokens += n;
    }
    return tokens > 0.0 ? total / tokens : 0.0;
}

TrainHistory SentenceAutoencoder::train(const std::vector<Sentence>& sentences, const SeqTrainConfig& cfg) {
    if (sentences.empty()) throw std::invalid_argument("train: empty corpus");
    TrainHistory hist;
    Adam opt(parameters());
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = halving_lr(cfg.learning_rate, epoch, cfg.halve_every);
        const auto batches = make_batches(sentences, cfg.batch_size, cfg.seed + static_cast<std::uint64_t>(epoch));
        double max_norm = 0.0;
        const double loss = train_epoch(batches, opt, lr, cfg.clip_norm, &max_norm);
        hist.epoch_loss.push_back(loss);
        hist.learning_rate.push_back(lr);
        hist.max_grad_norm.push_back(max_norm);
        if (cfg.on_epoch) cfg.on_epoch(epoch, loss);
    }
    return hist;
}

void SentenceAutoencoder::save(Checkpoint& ckpt) const {
    auto* self = const_cast<SentenceAutoencoder*>(this);
    for (const Parameter* p : self->parameters()) ckpt.put(*p);
    if (!config_.use_attention) {
        ckpt.put(bn_gamma_);
        ckpt.put(bn_beta_);
    }
    ckpt.put("sentence.bn.running_mean", bn_state_.running_mean);
    ckpt.put("sentence.bn.running_var", bn_state_.running_var);
    ckpt.meta["sentence"] = {{"vocab_size", vocab_size()},
                             {"embed_dim", config_.embed_dim},
                             {"hidden_dim", config_.hidden_dim},
                             {"max_len", config_.max_len},
                             {"attention_clip", config_.attention_clip},
                             {"use_attention", config_.use_attention},
                             {"init_range", config_.init_range}};
}

SentenceAutoencoder SentenceAutoencoder::load(const Checkpoint& ckpt) {
    if (!ckpt.meta.contains("sentence")) throw InputError("checkpoint has no sentence autoencoder");
    const auto& m = ckpt.meta["sentence"];
    SeqConfig cfg;
    cfg.embed_dim = m.at("embed_dim").get<std::size_t>();
    cfg.hidden_dim = m.at("hidden_dim").get<std::size_t>();
    cfg.max_len = m.at("max_len").get<std::size_t>();
    cfg.attention_clip = m.at("attention_clip").get<std::size_t>();
    cfg.use_attention = m.at("use_attention").get<bool>();
    cfg.init_range = m.at("init_range").get<double>();
    SentenceAutoencoder ae(m.at("vocab_size").get<std::size_t>(), cfg, 0);
    for (Parameter* p : ae.parameters()) ckpt.restore(*p);
    ckpt.restore(ae.bn_gamma_);
    ckpt.restore(ae.bn_beta_);
    const std::size_t w = 2 * cfg.hidden_dim;
    ae.bn_state_.running_mean = ckpt.get("sentence.bn.running_mean", 1, w);
    ae.bn_state_.running_var = ckpt.get("sentence.bn.running_var", 1, w);
    return ae;
}

double reconstruction_accuracy(const SentenceAutoencoder& ae, const std::vector<Sentence>& sentences) {
    std::size_t hit = 0, total = 0;
    for (const auto& s : sentences) {
        const Sentence out = ae.decode_greedy(ae.encode_sentence(s), ae.config().max_len);
        for (std::size_t t = 0; t < s.token_ids.size(); ++t) {
            if (t < out.token_ids.size() && out.token_ids[t] == s.token_ids[t]) ++hit;
        }
        total += s.token_ids.size();
    }
    return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace revgan
