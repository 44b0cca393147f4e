#pragma once

// Minimal reverse-mode differentiation over Matrix values.
//
// A Tape records every operation of one forward pass. Parameter leaves write
// their gradients straight into Parameter::grad, so several uses of the same
// parameter accumulate. A tape is single-use: build, call backward once, drop.

#include <functional>
#include <string>
#include <vector>

#include "revgan/kernels.hpp"
#include "revgan/tensor.hpp"

namespace revgan {

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    /// Row that stays at zero and never receives gradient (embedding pad row).
    long frozen_row = -1;

    Parameter() = default;
    Parameter(std::string n, std::size_t rows, std::size_t cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

    void zero_grad() { grad.resize_zero(value.rows(), value.cols()); }
};

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double scalar() const { return value()[0]; }
};

class Tape {
public:
    Var constant(Matrix value);
    Var param(Parameter& p);
    /// Leaf that reads `value` in place and never receives gradient.
    Var frozen(const Matrix& value);

    /// Record an op result. `backward` runs once during the reverse sweep and
    /// may read grad_of(result) and accumulate into grad_of(inputs).
    Var record(Matrix value, bool needs_grad, std::function<void()> backward);

    const Matrix& value_of(int id) const;
    Matrix& grad_of(int id);
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    /// Seeds d(root)/d(root) = 1 for a 1x1 root and sweeps in reverse.
    void backward(Var root);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        const Matrix* external = nullptr;
        Parameter* param = nullptr;
        bool needs_grad = false;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
};

namespace ag {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (n x m) + bias (1 x m) broadcast over rows.
Var add_bias(Var a, Var bias);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// 1 - a
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var log(Var a);
/// Clamp into [lo, hi]; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Rows of `a` picked by index. Rows equal to `skip_grad_row` get no gradient.
Var gather_rows(Var a, const std::vector<std::size_t>& index, long skip_grad_row = -1);
/// Each row i scaled by the constant factors[i].
Var mul_rows(Var a, const std::vector<double>& factors);
/// Stack per-step (batch x h) values into (batch*steps) x h with row b*steps + t.
Var stack_steps(const std::vector<Var>& steps);
Var sum(Var a);
Var mean(Var a);
/// Mean of the rows whose weight is nonzero, over all entries of those rows.
Var masked_mean(Var a, const std::vector<double>& row_weights);
/// Mean squared error over all entries.
Var mse(Var a, Var b);
/// Mean over rows with mask != 0 of -log softmax(logits)[target].
Var softmax_cross_entropy(Var logits, const std::vector<std::size_t>& targets,
                          const std::vector<double>& mask);

struct BatchNormState {
    Matrix running_mean;
    Matrix running_var;
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Batch normalization over the rows with mask != 0. In training mode the
/// statistics come from the batch and the running averages are updated;
/// otherwise the running averages are used.
Var batch_norm(Var x, Var gamma, Var beta, const std::vector<double>& mask, BatchNormState& state,
               bool training);

/// Relative-position self-attention; see kernels::attention_forward.
/// When `alpha_out` is non-null the attention weights are copied there.
Var attention(Var q, Var k, Var v, Var rel, std::size_t clip, const kernels::SequenceLayout& layout,
              const std::vector<double>& key_mask, Matrix* alpha_out = nullptr);

}  // namespace ag

inline Var operator+(Var a, Var b) { return ag::add(a, b); }
inline Var operator-(Var a, Var b) { return ag::sub(a, b); }
inline Var operator*(Var a, Var b) { return ag::mul(a, b); }

}  // namespace revgan
