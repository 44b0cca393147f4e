#include "revgan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace revgan::kernels {

namespace {

void prepare(Matrix& out, std::size_t rows, std::size_t cols, bool accumulate, const char* what) {
    if (accumulate) {
        require_shape(out, rows, cols, what);
    } else {
        out.resize_zero(rows, cols);
    }
}

void check_inner(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": inner dimension mismatch");
}

}  // namespace

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    check_inner(a.cols(), b.rows(), "matmul");
    prepare(out, a.rows(), b.cols(), accumulate, "matmul");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            const double* br = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += aip * br[j];
        }
    }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    check_inner(a.cols(), b.cols(), "matmul_nt");
    prepare(out, a.rows(), b.rows(), accumulate, "matmul_nt");
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ar = a.data() + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* br = b.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
            out(i, j) += s;
        }
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    check_inner(a.rows(), b.rows(), "matmul_tn");
    prepare(out, a.cols(), b.cols(), accumulate, "matmul_tn");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < k; ++i) {
        double* o = out.data() + i * m;
        for (std::size_t r = 0; r < n; ++r) {
            const double ari = a(r, i);
            const double* br = b.data() + r * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += ari * br[j];
        }
    }
}

void pairwise_euclidean(const Matrix& a, const Matrix& b, Matrix& out) {
    check_inner(a.cols(), b.cols(), "pairwise_euclidean");
    out.resize_zero(a.rows(), b.rows());
    const std::size_t d = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < d; ++p) {
                const double diff = a(i, p) - b(j, p);
                s += diff * diff;
            }
            out(i, j) = std::sqrt(s);
        }
    }
}

}  // namespace serial

namespace omp {

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    check_inner(a.cols(), b.rows(), "matmul");
    prepare(out, a.rows(), b.cols(), accumulate, "matmul");
    const long n = static_cast<long>(a.rows());
    const std::size_t k = a.cols(), m = b.cols();
#pragma omp parallel for schedule(static) if (n * static_cast<long>(k * m) > 32768)
    for (long i = 0; i < n; ++i) {
        double* o = out.data() + i * m;
        const double* ar = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ar[p];
            const double* br = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += aip * br[j];
        }
    }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    check_inner(a.cols(), b.cols(), "matmul_nt");
    prepare(out, a.rows(), b.rows(), accumulate, "matmul_nt");
    const long n = static_cast<long>(a.rows());
    const std::size_t k = a.cols(), m = b.rows();
#pragma omp parallel for schedule(static) if (n * static_cast<long>(k * m) > 32768)
    for (long i = 0; i < n; ++i) {
        const double* ar = a.data() + i * k;
        double* o = out.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* br = b.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
            o[j] += s;
        }
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    check_inner(a.rows(), b.rows(), "matmul_tn");
    prepare(out, a.cols(), b.cols(), accumulate, "matmul_tn");
    const std::size_t n = a.rows(), m = b.cols();
    const long k = static_cast<long>(a.cols());
#pragma omp parallel for schedule(static) if (k * static_cast<long>(n * m) > 32768)
    for (long i = 0; i < k; ++i) {
        double* o = out.data() + i * m;
        for (std::size_t r = 0; r < n; ++r) {
            const double ari = a.data()[r * a.cols() + i];
            const double* br = b.data() + r * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += ari * br[j];
        }
    }
}

void pairwise_euclidean(const Matrix& a, const Matrix& b, Matrix& out) {
    check_inner(a.cols(), b.cols(), "pairwise_euclidean");
    out.resize_zero(a.rows(), b.rows());
    const std::size_t d = a.cols(), m = b.rows();
    const long n = static_cast<long>(a.rows());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < d; ++p) {
                const double diff = a.data()[i * d + p] - b(j, p);
                s += diff * diff;
            }
            out.data()[i * m + j] = std::sqrt(s);
        }
    }
}

}  // namespace omp

void attention_forward(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& rel,
                       std::size_t clip, const SequenceLayout& layout,
                       std::span<const double> key_mask, double scale, Matrix& out,
                       Matrix& alpha) {
    const std::size_t rows = layout.batch * layout.steps;
    const std::size_t h = q.cols();
    require_shape(q, rows, h, "attention q");
    require_shape(k, rows, h, "attention k");
    require_shape(v, rows, v.cols(), "attention v");
    require_shape(rel, 2 * clip + 1, h, "attention rel");
    if (key_mask.size() != rows) throw std::invalid_argument("attention: mask size mismatch");

    const std::size_t steps = layout.steps;
    const std::size_t hv = v.cols();
    out.resize_zero(rows, hv);
    alpha.resize_zero(rows, steps);

#pragma omp parallel for schedule(static)
    for (long row = 0; row < static_cast<long>(rows); ++row) {
        const std::size_t b = static_cast<std::size_t>(row) / steps;
        const std::size_t i = static_cast<std::size_t>(row) % steps;
        const auto qi = q.row(static_cast<std::size_t>(row));
        std::vector<double> logits(steps, -std::numeric_limits<double>::infinity());
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < steps; ++j) {
            const std::size_t kr = b * steps + j;
            if (key_mask[kr] == 0.0) continue;
            const auto kj = k.row(kr);
            const auto aij = rel.row(relative_index(i, j, clip));
            double e = 0.0;
            for (std::size_t p = 0; p < h; ++p) e += qi[p] * (kj[p] + aij[p]);
            logits[j] = e * scale;
            best = std::max(best, logits[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < steps; ++j) {
            if (key_mask[b * steps + j] == 0.0) continue;
            const double w = std::exp(logits[j] - best);
            alpha(static_cast<std::size_t>(row), j) = w;
            denom += w;
        }
        auto orow = out.row(static_cast<std::size_t>(row));
        for (std::size_t j = 0; j < steps; ++j) {
            double& a = alpha(static_cast<std::size_t>(row), j);
            if (a == 0.0) continue;
            a /= denom;
            const auto vj = v.row(b * steps + j);
            for (std::size_t p = 0; p < hv; ++p) orow[p] += a * vj[p];
        }
    }
}

}  // namespace revgan::kernels
