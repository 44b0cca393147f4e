#include "revgan/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace revgan {

const Matrix& Var::value() const { return tape->value_of(id); }

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
    Node n;
    n.external = &p.value;
    n.param = &p;
    n.needs_grad = true;
    if (!p.grad.same_shape(p.value)) p.zero_grad();
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::frozen(const Matrix& value) {
    Node n;
    n.external = &value;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Matrix value, bool needs_grad, std::function<void()> backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

const Matrix& Tape::value_of(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
}

Matrix& Tape::grad_of(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.param) return n.param->grad;
    if (n.grad.empty()) {
        const Matrix& v = value_of(id);
        n.grad.resize_zero(v.rows(), v.cols());
    }
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape != this) throw std::invalid_argument("backward: variable from another tape");
    const Matrix& rv = value_of(root.id);
    if (rv.size() != 1) throw std::invalid_argument("backward: root must be 1x1");
    if (!needs_grad(root.id)) return;
    grad_of(root.id)[0] += 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || !n.backward) continue;
        if (n.grad.empty()) continue;
        n.backward();
    }
    for (Node& n : nodes_) {
        if (n.param && n.param->frozen_row >= 0) {
            auto r = n.param->grad.row(static_cast<std::size_t>(n.param->frozen_row));
            std::fill(r.begin(), r.end(), 0.0);
        }
    }
}

namespace ag {

namespace {

Tape& tape_of(Var a) {
    if (!a.tape) throw std::invalid_argument("autograd: variable without tape");
    return *a.tape;
}

void same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw std::invalid_argument("autograd: mixing tapes");
}

void require_same(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() +
                                    " vs " + b.shape_string());
    }
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
    Tape& t = tape_of(a);
    const Matrix& av = a.value();
    Matrix out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    const int aid = a.id;
    const int rid = static_cast<int>(t.size());
    Tape* tp = &t;
    return t.record(std::move(out), t.needs_grad(aid), [tp, aid, rid, deriv]() {
        const Matrix& x = tp->value_of(aid);
        const Matrix& y = tp->value_of(rid);
        const Matrix& g = tp->grad_of(rid);
        Matrix& ga = tp->grad_of(aid);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
    });
}

}  // namespace

Var matmul(Var a, Var b) {
    same_tape(a, b);
    Tape& t = tape_of(a);
    Matrix out;
    kernels::matmul(a.value(), b.value(), out);
    const bool ng = t.needs_grad(a.id) || t.needs_grad(b.id);
    Tape* tp = &t;
    const int aid = a.id, bid = b.id;
    const int rid = static_cast<int>(t.size());
    return t.record(std::move(out), ng, [tp, aid, bid, rid]() {
        const Matrix& g = tp->grad_of(rid);
        if (tp->needs_grad(aid)) kernels::matmul_nt(g, tp->value_of(bid), tp->grad_of(aid), true);
        if (tp->needs_grad(bid)) kernels::matmul_tn(tp->value_of(aid), g, tp->grad_of(bid), true);
    });
}

Var add(Var a, Var b) {
    same_tape(a, b);
    Tape& t = tape_of(a);
    require_same(a.value(), b.value(), "add");
    Matrix out = a.value();
    const Matrix& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    Tape* tp = &t;
    const int aid = a.id, bid = b.id, rid = static_cast<int>(t.size());
    return t.record(std::move(out), t.needs_grad(aid) || t.needs_grad(bid), [tp, aid, bid, rid]() {
        const Matrix& g = tp->grad_of(rid);
        for (int id : {aid, bid}) {
            if (!tp->needs_grad(id)) continue;
            Matrix& gi = tp->grad_of(id);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    same_tape(a, b);
    Tape& t = tape_of(a);
    require_same(a.value(), b.value(), "sub");
    Matrix out = a.value();
    const Matrix& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    Tape* tp = &t;
    const int aid = a.id, bid = b.id, rid = static_cast<int>(t.size());
    return t.record(std::move(out), t.needs_grad(aid) || t.needs_grad(bid), [tp, aid, bid, rid]() {
        const Matrix& g = tp->grad_of(rid);
        if (tp->needs_grad(aid)) {
            Matrix& ga = tp->grad_of(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp->needs_grad(bid)) {
            Matrix& gb = tp->grad_of(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    same_tape(a, b);
    Tape& t = tape_of(a);
    require_same(a.value(), b.value(), "mul");
    Matrix out = a.value();
    const Matrix& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    Tape* tp = &t;
    const int aid = a.id, bid = b.id, rid = static_cast<int>(t.size());
    return t.record(std::move(out), t.needs_grad(aid) || t.needs_grad(bid), [tp, aid, bid, rid]() {
        const Matrix& g = tp->grad_of(rid);
        if (tp->needs_grad(aid)) {
            Matrix& ga = tp->grad_of(aid);
            const Matrix& bv = tp->value_of(bid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tp->needs_grad(bid)) {
            Matrix& gb = tp->grad_of(bid);
            const Matrix& av = tp->value_of(aid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var add_bias(Var a, Var bias) {
    same_tape(a, bias);
    Tape& t = tape_of(a);
    const Matrix& bv = bias.value();
    require_shape(bv, 1, a.cols(), "add_bias");
    Matrix out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < out.cols(); ++c) row[c] += bv[c];
    }
    Tape* tp = &t;
    const int aid = a.id, bid = bias.id, rid = static_cast<int>(t.size());
    return t.record(std::move(out), t.needs_grad(aid) || t.needs_grad(bid), [tp, aid, bid, rid]() {
        const Matrix& g = tp->grad_of(rid);
        if (tp->needs_grad(aid)) {
            Matrix& ga = tp->grad_of(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp->needs_grad(bid)) {
            Matrix& gb = tp->grad_of(bid);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                const auto row = g.row(r);
                for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += row[c];
            }
        }
    });
}

Var scale(Var a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var one_minus(Var a) {
    return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var sigmoid(Var a) {
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
    return unary(
        a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var concat_cols(Var a, Var b) {
    same_tape(a, b);
    Tape& t = tape_of(a);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.rows() != bv.rows()) throw std::invalid_argument("concat_cols: row mismatch");
    const std::size_t ca = av.cols(), cb = bv.cols();
    Matrix out(av.rows(), ca + cb);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto o = out.row(r);
        std::copy(av.row(r).begin(), av.row(r).end(), o.begin());
        std::copy(bv.row(r).begin(), bv.row(r).end(), o.begin() + static_cast<long>(ca));
    }
    Tape* tp = &t;
    const int aid = a.id, bid = b.id, rid = static_cast<int>(t.size());
    return t.record(std::move(out), t.needs_grad(aid) || t.needs_grad(bid),
                    [tp, aid, bid, rid, ca, cb]() {
                        const Matrix& g = tp->grad_of(rid);
                        for (std::size_t r = 0; r < g.rows(); ++r) {
                            const auto gr = g.row(r);
                            if (tp->needs_grad(aid)) {
                                auto ga = tp->grad_of(aid).row(r);
                                for (std::size_t c = 0; c < ca; ++c) ga[c] += gr[c];
                            }
                            if (tp->needs_grad(bid)) {
                                auto gb = tp->grad_of(bid).row(r);
                                for (std::size_t c = 0; c < cb; ++c) gb[c] += gr[ca + c];
                            }
                        }
                    });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
    Tape& t = tape_of(a);
    const Matrix& av = a.value();
    if (start + count > av.cols()) throw std::invalid_argument("slice_cols: out of range");
    Matrix out(av.rows(), count);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        const auto ar = av.row(r);
        std::copy(ar.begin() + static_cast<long>(start), ar.begin() + static_cast<long>(start + count),
                  out.row(r).begin());
    }
    Tape* tp = &t;
    const int aid = a.id, rid = static_cast<int>(t.size());
    return t.record(std::move(out), t.needs_grad(aid), [tp, aid, rid, start, count]() {
        const Matrix& g = tp->grad_of(rid);
        Matrix& ga = tp->grad_of(aid);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < count; ++c) ga(r, start + c) += g(r, c);
        }
    });
}

Var gather_rows(Var a, const std::vector<std::size_t>& index, long skip_grad_row) {
    Tape& t = tape_of(a);
    const Matrix& av = a.value();
    Matrix out(index.size(), av.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= av.rows()) throw std::out_of_range("gather_rows: index out of range");
        const auto src = av.row(index[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    Tape* tp = &t;
    const int aid = a.id, rid = static_cast<int>(t.size());
    return t.record(std::move(out), t.needs_grad(aid), [tp, aid, rid, index, skip_grad_row]() {
        const Matrix& g = tp->grad_of(rid);
        Matrix& ga = tp->grad_of(aid);
        for (std::size_t r = 0; r < index.size(); ++r) {
            if (static_cast<long>(index[r]) == skip_grad_row) continue;
            auto dst = ga.row(index[r]);
            const auto src = g.row(r);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
    });
}

Var mul_rows(Var a, const std::vector<double>& factors) {
    Tape& t = tape_of(a);
    const Matrix& av = a.value();
    if (factors.size() != av.rows()) throw std::invalid_argument("mul_rows: size mismatch");
    Matrix out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (double& x : out.row(r)) x *= factors[r];
    }
    Tape* tp = &t;
    const int aid = a.id, rid = static_cast<int>(t.size());
    return t.record(std::move(out), t.needs_grad(aid), [tp, aid, rid, factors]() {
        const Matrix& g = tp->grad_of(rid);
        Matrix& ga = tp->grad_of(aid);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * factors[r];
        }
    });
}

Var stack_steps(const std::vector<Var>& steps) {
    if (steps.empty()) throw std::invalid_argument("stack_steps: no steps");
    Tape& t = tape_of(steps.front());
    const std::size_t batch = steps.front().rows();
    const std::size_t h = steps.front().cols();
    const std::size_t n = steps.size();
    Matrix out(batch * n, h);
    bool ng = false;
    std::vector<int> ids;
    ids.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        const Matrix& v = steps[s].value();
        require_shape(v, batch, h, "stack_steps");
        for (std::size_t b = 0; b < batch; ++b) {
            std::copy(v.row(b).begin(), v.row(b).end(), out.row(b * n + s).begin());
        }
        ng = ng || t.needs_grad(steps[s].id);
        ids.push_back(steps[s].id);
    }
    Tape* tp = &t;
    const int rid = static_cast<int>(t.size());
    return t.record(std::move(out), ng, [tp, ids, rid, batch, n]() {
        const Matrix& g = tp->grad_of(rid);
        for (std::size_t s = 0; s < n; ++s) {
            if (!tp->needs_grad(ids[s])) continue;
            Matrix& gs = tp->grad_of(ids[s]);
            for (std::size_t b = 0; b < batch; ++b) {
                const auto src = g.row(b * n + s);
                auto dst = gs.row(b);
                for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
            }
        }
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double x : a.value().values()) s += x;
    Tape* tp = &t;
    const int aid = a.id, rid = static_cast<int>(t.size());
    return t.record(Matrix(1, 1, s), t.needs_grad(aid), [tp, aid, rid]() {
        const double g = tp->grad_of(rid)[0];
        for (double& x : tp->grad_of(aid).values()) x += g;
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw std::invalid_argument("mean: empty");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var masked_mean(Var a, const std::vector<double>& row_weights) {
    Tape& t = tape_of(a);
    const Matrix& av = a.value();
    if (row_weights.size() != av.rows()) throw std::invalid_argument("masked_mean: size mismatch");
    std::size_t count = 0;
    double s = 0.0;
    for (std::size_t r = 0; r < av.rows(); ++r) {
        if (row_weights[r] == 0.0) continue;
        for (double x : av.row(r)) s += x;
        count += av.cols();
    }
    if (count == 0) throw std::invalid_argument("masked_mean: no selected rows");
    const double inv = 1.0 / static_cast<double>(count);
    Tape* tp = &t;
    const int aid = a.id, rid = static_cast<int>(t.size());
    return t.record(Matrix(1, 1, s * inv), t.needs_grad(aid), [tp, aid, rid, row_weights, inv]() {
        const double g = tp->grad_of(rid)[0] * inv;
        Matrix& ga = tp->grad_of(aid);
        for (std::size_t r = 0; r < ga.rows(); ++r) {
            if (row_weights[r] == 0.0) continue;
            for (double& x : ga.row(r)) x += g;
        }
    });
}

Var mse(Var a, Var b) {
    Var d = sub(a, b);
    return mean(mul(d, d));
}

Var softmax_cross_entropy(Var logits, const std::vector<std::size_t>& targets,
                          const std::vector<double>& mask) {
    Tape& t = tape_of(logits);
    const Matrix& z = logits.value();
    if (targets.size() != z.rows() || mask.size() != z.rows()) {
        throw std::invalid_argument("softmax_cross_entropy: size mismatch");
    }
    Matrix probs(z.rows(), z.cols());
    double loss = 0.0;
    double count = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) {
        const auto zr = z.row(r);
        double mx = zr[0];
        for (double x : zr) mx = std::max(mx, x);
        double denom = 0.0;
        auto pr = probs.row(r);
        for (std::size_t c = 0; c < zr.size(); ++c) {
            pr[c] = std::exp(zr[c] - mx);
            denom += pr[c];
        }
        for (double& p : pr) p /= denom;
        if (mask[r] == 0.0) continue;
        if (targets[r] >= z.cols()) throw std::out_of_range("softmax_cross_entropy: target");
        loss -= (zr[targets[r]] - mx - std::log(denom));
        count += 1.0;
    }
    if (count == 0.0) throw std::invalid_argument("softmax_cross_entropy: empty mask");
    Tape* tp = &t;
    const int lid = logits.id, rid = static_cast<int>(t.size());
    return t.record(Matrix(1, 1, loss / count), t.needs_grad(lid),
                    [tp, lid, rid, probs = std::move(probs), targets, mask, count]() {
                        const double g = tp->grad_of(rid)[0] / count;
                        Matrix& gl = tp->grad_of(lid);
                        for (std::size_t r = 0; r < probs.rows(); ++r) {
                            if (mask[r] == 0.0) continue;
                            auto gr = gl.row(r);
                            const auto pr = probs.row(r);
                            for (std::size_t c = 0; c < pr.size(); ++c) gr[c] += g * pr[c];
                            gr[targets[r]] -= g;
                        }
                    });
}

Var batch_norm(Var x, Var gamma, Var beta, const std::vector<double>& mask, BatchNormState& state,
               bool training) {
    Tape& t = tape_of(x);
    const Matrix& xv = x.value();
    const std::size_t n = xv.rows(), c = xv.cols();
    if (mask.size() != n) throw std::invalid_argument("batch_norm: mask size mismatch");
    require_shape(gamma.value(), 1, c, "batch_norm gamma");
    require_shape(beta.value(), 1, c, "batch_norm beta");
    if (state.running_mean.empty()) {
        state.running_mean = Matrix(1, c, 0.0);
        state.running_var = Matrix(1, c, 1.0);
    }

    Matrix mu(1, c), var(1, c);
    double m = 0.0;
    if (training) {
        for (std::size_t r = 0; r < n; ++r) {
            if (mask[r] == 0.0) continue;
            m += 1.0;
            for (std::size_t j = 0; j < c; ++j) mu[j] += xv(r, j);
        }
        if (m == 0.0) throw std::invalid_argument("batch_norm: empty mask");
        for (std::size_t j = 0; j < c; ++j) mu[j] /= m;
        for (std::size_t r = 0; r < n; ++r) {
            if (mask[r] == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j) {
                const double d = xv(r, j) - mu[j];
                var[j] += d * d;
            }
        }
        for (std::size_t j = 0; j < c; ++j) {
            var[j] /= m;
            state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mu[j];
            state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j];
        }
    } else {
        mu = state.running_mean;
        var = state.running_var;
    }

    Matrix inv_std(1, c);
    for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
    Matrix xhat(n, c), out(n, c);
    const Matrix& gv = gamma.value();
    const Matrix& bv = beta.value();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
            xhat(r, j) = (xv(r, j) - mu[j]) * inv_std[j];
            out(r, j) = gv[j] * xhat(r, j) + bv[j];
        }
    }

    const bool ng = t.needs_grad(x.id) || t.needs_grad(gamma.id) || t.needs_grad(beta.id);
    Tape* tp = &t;
    const int xid = x.id, gid = gamma.id, bid = beta.id, rid = static_cast<int>(t.size());
    return t.record(std::move(out), ng,
                    [tp, xid, gid, bid, rid, xhat = std::move(xhat), inv_std, mask, m, training]() {
                        const Matrix& g = tp->grad_of(rid);
                        const std::size_t n = g.rows(), c = g.cols();
                        const Matrix& gv = tp->value_of(gid);
                        if (tp->needs_grad(gid) || tp->needs_grad(bid)) {
                            for (std::size_t r = 0; r < n; ++r) {
                                for (std::size_t j = 0; j < c; ++j) {
                                    if (tp->needs_grad(gid)) tp->grad_of(gid)[j] += g(r, j) * xhat(r, j);
                                    if (tp->needs_grad(bid)) tp->grad_of(bid)[j] += g(r, j);
                                }
                            }
                        }
                        if (!tp->needs_grad(xid)) return;
                        Matrix& gx = tp->grad_of(xid);
                        if (!training) {
                            for (std::size_t r = 0; r < n; ++r) {
                                for (std::size_t j = 0; j < c; ++j) gx(r, j) += g(r, j) * gv[j] * inv_std[j];
                            }
                            return;
                        }
                        Matrix sum_d(1, c), sum_dx(1, c);
                        // Masked rows do not shape the statistics but their outputs still depend on them.
                        for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                                const double d = g(r, j) * gv[j];
                                sum_d[j] += d;
                                sum_dx[j] += d * xhat(r, j);
                            }
                        }
                        for (std::size_t r = 0; r < n; ++r) {
                            for (std::size_t j = 0; j < c; ++j) {
                                const double d = g(r, j) * gv[j];
                                if (mask[r] == 0.0) {
                                    gx(r, j) += d * inv_std[j];
                                } else {
                                    gx(r, j) += inv_std[j] / m * (m * d - sum_d[j] - xhat(r, j) * sum_dx[j]);
                                }
                            }
                        }
                    });
}

Var attention(Var q, Var k, Var v, Var rel, std::size_t clip, const kernels::SequenceLayout& layout,
              const std::vector<double>& key_mask, Matrix* alpha_out) {
    Tape& t = tape_of(q);
    const double sc = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Matrix out, alpha;
    kernels::attention_forward(q.value(), k.value(), v.value(), rel.value(), clip, layout, key_mask, sc,
                               out, alpha);
    if (alpha_out) *alpha_out = alpha;
    const bool ng = t.needs_grad(q.id) || t.needs_grad(k.id) || t.needs_grad(v.id) ||
                    t.needs_grad(rel.id);
    Tape* tp = &t;
    const int qid = q.id, kid = k.id, vid = v.id, aid = rel.id, rid = static_cast<int>(t.size());
    return t.record(
        std::move(out), ng, [tp, qid, kid, vid, aid, rid, clip, layout, alpha = std::move(alpha), sc]() {
            const Matrix& g = tp->grad_of(rid);
            const Matrix& qv = tp->value_of(qid);
            const Matrix& kv = tp->value_of(kid);
            const Matrix& vv = tp->value_of(vid);
            const Matrix& av = tp->value_of(aid);
            const std::size_t steps = layout.steps, h = qv.cols(), hv = vv.cols();
            Matrix gq(qv.rows(), h), gk(kv.rows(), h), gv(vv.rows(), hv), ga(av.rows(), h);
            std::vector<double> dalpha(steps), de(steps);
            for (std::size_t row = 0; row < alpha.rows(); ++row) {
                const std::size_t b = row / steps, i = row % steps;
                const auto gr = g.row(row);
                double dot_sum = 0.0;
                for (std::size_t j = 0; j < steps; ++j) {
                    const double a = alpha(row, j);
                    dalpha[j] = 0.0;
                    if (a == 0.0) continue;
                    const std::size_t vr = b * steps + j;
                    double s = 0.0;
                    for (std::size_t p = 0; p < hv; ++p) {
                        s += gr[p] * vv(vr, p);
                        gv(vr, p) += a * gr[p];
                    }
                    dalpha[j] = s;
                    dot_sum += a * s;
                }
                const auto qi = qv.row(row);
                for (std::size_t j = 0; j < steps; ++j) {
                    const double a = alpha(row, j);
                    if (a == 0.0) continue;
                    const double d = a * (dalpha[j] - dot_sum) * sc;
                    const std::size_t kr = b * steps + j;
                    const std::size_t ri = kernels::relative_index(i, j, clip);
                    for (std::size_t p = 0; p < h; ++p) {
                        gq(row, p) += d * (kv(kr, p) + av(ri, p));
                        gk(kr, p) += d * qi[p];
                        ga(ri, p) += d * qi[p];
                    }
                }
            }
            auto acc = [tp](int id, const Matrix& src) {
                if (!tp->needs_grad(id)) return;
                Matrix& dst = tp->grad_of(id);
                for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
            };
            acc(qid, gq);
            acc(kid, gk);
            acc(vid, gv);
            acc(aid, ga);
        });
}

}  // namespace ag
}  // namespace revgan
