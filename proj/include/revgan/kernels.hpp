#pragma once

// Dense kernels used by training and inference.
//
// Every kernel exists twice: `serial::` is the plain reference loop kept for
// testing, `omp::` parallelizes over output rows. Both visit each output
// element's reduction in the same order, so their results are bit-identical
// and a run is reproducible regardless of thread count.

#include "revgan/tensor.hpp"

namespace revgan::kernels {

namespace serial {
/// out = a * b (out += when accumulate).
void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
/// out = a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
/// out = a^T * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
/// out(i, j) = ||a_i - b_j||_2
void pairwise_euclidean(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace serial

namespace omp {
void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void pairwise_euclidean(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace omp

inline void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false) {
    omp::matmul(a, b, out, accumulate);
}
inline void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false) {
    omp::matmul_nt(a, b, out, accumulate);
}
inline void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false) {
    omp::matmul_tn(a, b, out, accumulate);
}
inline void pairwise_euclidean(const Matrix& a, const Matrix& b, Matrix& out) {
    omp::pairwise_euclidean(a, b, out);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul(a, b, out);
    return out;
}

/// Geometry of a batch of padded sequences laid out as rows b * steps + t.
struct SequenceLayout {
    std::size_t batch = 0;
    std::size_t steps = 0;
};

/// Relative-position self-attention over padded sequences.
///
/// q, k, v: (batch*steps) x h. rel: (2*clip+1) x h offset embeddings.
/// key_mask: one entry per row, 0 marks padding that receives zero weight.
/// logits e_ij = q_i . (k_j + rel[clamp(j-i)]) * scale; out_i = sum_j alpha_ij v_j.
/// alpha is written as (batch*steps) x steps.
void attention_forward(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& rel,
                       std::size_t clip, const SequenceLayout& layout,
                       std::span<const double> key_mask, double scale, Matrix& out,
                       Matrix& alpha);

inline std::size_t relative_index(std::size_t i, std::size_t j, std::size_t clip) {
    const long offset = static_cast<long>(j) - static_cast<long>(i);
    const long c = static_cast<long>(clip);
    const long clamped = offset < -c ? -c : (offset > c ? c : offset);
    return static_cast<std::size_t>(clamped + c);
}

}  // namespace revgan::kernels
