#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sail/matrix.hpp"
#include "sail/parallel.hpp"

namespace sail {

// All reductions accumulate in double with a fixed order per output element,
// and parallel kernels split over output rows only, so results are bitwise
// identical for any worker count.

/// Dot product with four interleaved double accumulators combined as (a0+a1)+(a2+a3).
template <class A, class B>
double dot(std::span<const A> a, std::span<const B> b) noexcept {
    const std::size_t n = a.size();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += static_cast<double>(a[k]) * static_cast<double>(b[k]);
        s1 += static_cast<double>(a[k + 1]) * static_cast<double>(b[k + 1]);
        s2 += static_cast<double>(a[k + 2]) * static_cast<double>(b[k + 2]);
        s3 += static_cast<double>(a[k + 3]) * static_cast<double>(b[k + 3]);
    }
    for (; k < n; ++k) s0 += static_cast<double>(a[k]) * static_cast<double>(b[k]);
    return (s0 + s1) + (s2 + s3);
}

/// C = A * B^T. A: m x k, B: n x k.
template <class T, class U>
Matrix<T> matmul_abt(const Matrix<T>& a, const Matrix<U>& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_abt: " + shape_str(a) + " * (" + shape_str(b) + ")^T");
    Matrix<T> c(a.rows(), b.rows());
    parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto ai = a.row(i);
            auto ci = c.row(i);
            for (std::size_t j = 0; j < b.rows(); ++j) ci[j] = static_cast<T>(dot(ai, b.row(j)));
        }
    });
    return c;
}

/// C = A * B. A: m x k, B: k x n.
template <class T, class U>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<U>& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    const std::size_t n = b.cols();
    Matrix<T> c(a.rows(), n);
    parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> acc(n);
        for (std::size_t i = begin; i < end; ++i) {
            std::fill(acc.begin(), acc.end(), 0.0);
            auto ai = a.row(i);
            for (std::size_t k = 0; k < ai.size(); ++k) {
                const double s = static_cast<double>(ai[k]);
                if (s == 0.0) continue;
                auto bk = b.row(k);
                for (std::size_t j = 0; j < n; ++j) acc[j] += s * static_cast<double>(bk[j]);
            }
            auto ci = c.row(i);
            for (std::size_t j = 0; j < n; ++j) ci[j] = static_cast<T>(acc[j]);
        }
    });
    return c;
}

/// C = A^T * B. A: k x m, B: k x n. Output m x n.
template <class T, class U>
Matrix<T> matmul_atb(const Matrix<T>& a, const Matrix<U>& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_atb: (" + shape_str(a) + ")^T * " + shape_str(b));
    const std::size_t n = b.cols();
    Matrix<T> c(a.cols(), n);
    parallel_for(a.cols(), [&](std::size_t begin, std::size_t end) {
        std::vector<double> acc(n);
        for (std::size_t o = begin; o < end; ++o) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t k = 0; k < a.rows(); ++k) {
                const double s = static_cast<double>(a(k, o));
                if (s == 0.0) continue;
                auto bk = b.row(k);
                for (std::size_t j = 0; j < n; ++j) acc[j] += s * static_cast<double>(bk[j]);
            }
            auto co = c.row(o);
            for (std::size_t j = 0; j < n; ++j) co[j] = static_cast<T>(acc[j]);
        }
    });
    return c;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
    Matrix<T> t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

/// Column-wise sum over rows (sequential in row order).
template <class T>
std::vector<double> sum_rows(const Matrix<T>& a) {
    std::vector<double> s(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) s[j] += static_cast<double>(r[j]);
    }
    return s;
}

template <class T>
std::vector<double> row_norms(const Matrix<T>& a) {
    std::vector<double> n(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) n[i] = std::sqrt(dot(a.row(i), a.row(i)));
    return n;
}

template <class T>
struct Normalized {
    Matrix<T> rows;
    std::size_t zero_rows = 0;
};

/// Scales every row to unit Euclidean norm. Zero rows stay zero and are counted.
template <class T>
Normalized<T> l2_normalize(const Matrix<T>& a) {
    Normalized<T> out{Matrix<T>(a.rows(), a.cols()), 0};
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double n = std::sqrt(dot(a.row(i), a.row(i)));
        if (n == 0.0) {
            ++out.zero_rows;
            continue;
        }
        auto src = a.row(i);
        auto dst = out.rows.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) dst[j] = static_cast<T>(static_cast<double>(src[j]) / n);
    }
    return out;
}

enum class Side { image, text };

inline const char* side_name(Side s) { return s == Side::image ? "image" : "text"; }

struct SimilarityMatrix {
    Matrix<double> values;
    Side row_side = Side::image;
    Side col_side = Side::text;
};

/// Entry (i, j) = a_i . b_j / (|a_i| |b_j|); 0 when either row is zero.
template <class T, class U>
SimilarityMatrix cosine_matrix(const Matrix<T>& a, const Matrix<U>& b, Side row_side = Side::image,
                               Side col_side = Side::text) {
    if (a.cols() != b.cols()) throw ShapeError("cosine_matrix: dim mismatch " + shape_str(a) + " vs " + shape_str(b));
    const auto na = row_norms(a);
    const auto nb = row_norms(b);
    SimilarityMatrix s{Matrix<double>(a.rows(), b.rows()), row_side, col_side};
    parallel_for(a.rows(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < b.rows(); ++j) {
                const double denom = na[i] * nb[j];
                s.values(i, j) = denom == 0.0 ? 0.0 : dot(a.row(i), b.row(j)) / denom;
            }
        }
    });
    return s;
}

} // namespace sail
