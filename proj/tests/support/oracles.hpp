#pragma once

// Test-only reference implementations. Everything here is written the slow,
// obvious way (scalar loops, full sorts) and must not call the library's
// kernels it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <vector>

#include "sail/matrix.hpp"
#include "sail/rng.hpp"

namespace oracle {

template <class T>
sail::Matrix<T> random_matrix(std::size_t r, std::size_t c, sail::SplitMix64& g, double scale = 1.0) {
    sail::Matrix<T> m(r, c);
    for (auto& v : m.values()) v = static_cast<T>(g.normal() * scale);
    return m;
}

/// Central difference of f with respect to one scalar, restored afterwards.
template <class F>
double central_diff(F&& f, double& x, double h = 1e-3) {
    const double saved = x;
    x = saved + h;
    const double up = f();
    x = saved - h;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * h);
}

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double den = std::sqrt(std::max(na, nb));
    return den < 1e-300 ? 0.0 : std::sqrt(diff) / den;
}

/// Finite-difference gradient over every entry of m, in place.
template <class F>
std::vector<double> fd_gradient(sail::Matrix<double>& m, F&& f, double h = 1e-3) {
    std::vector<double> g(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) g[i] = central_diff(f, m.data()[i], h);
    return g;
}

inline std::vector<double> as_vector(const sail::Matrix<double>& m) { return {m.values().begin(), m.values().end()}; }

inline sail::Matrix<double> naive_matmul(const sail::Matrix<double>& a, const sail::Matrix<double>& b) {
    sail::Matrix<double> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

template <class T>
double naive_cos(const sail::Matrix<T>& a, std::size_t i, const sail::Matrix<T>& b, std::size_t j) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) {
        ab += double(a(i, k)) * double(b(j, k));
        aa += double(a(i, k)) * double(a(i, k));
        bb += double(b(j, k)) * double(b(j, k));
    }
    return (aa == 0.0 || bb == 0.0) ? 0.0 : ab / (std::sqrt(aa) * std::sqrt(bb));
}

/// Gallery order for one query: full stable sort by similarity descending.
inline std::vector<std::size_t> ranked(const std::vector<double>& sims) {
    std::vector<std::size_t> idx(sims.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    return idx;
}

template <class T>
std::vector<std::vector<double>> naive_sims(const sail::Matrix<T>& q, const sail::Matrix<T>& g) {
    std::vector<std::vector<double>> s(q.rows(), std::vector<double>(g.rows()));
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t j = 0; j < g.rows(); ++j) s[i][j] = naive_cos(q, i, g, j);
    return s;
}

inline double naive_recall(const std::vector<std::vector<double>>& sims, const std::vector<std::vector<std::size_t>>& gt,
                           std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < sims.size(); ++q) {
        const auto order = ranked(sims[q]);
        bool hit = false;
        for (std::size_t r = 0; r < k; ++r) hit = hit || std::find(gt[q].begin(), gt[q].end(), order[r]) != gt[q].end();
        hits += hit;
    }
    return double(hits) / double(sims.size());
}

/// mIoU by explicit index sets.
inline double set_miou(const std::vector<std::uint32_t>& pred, const std::vector<std::uint32_t>& gt, std::uint32_t n_classes) {
    double sum = 0.0;
    int n = 0;
    for (std::uint32_t c = 0; c < n_classes; ++c) {
        std::set<std::size_t> P, G;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (gt[i] == 255) continue;
            if (pred[i] == c) P.insert(i);
            if (gt[i] == c) G.insert(i);
        }
        if (G.empty()) continue;
        std::vector<std::size_t> inter, uni;
        std::set_intersection(P.begin(), P.end(), G.begin(), G.end(), std::back_inserter(inter));
        std::set_union(P.begin(), P.end(), G.begin(), G.end(), std::back_inserter(uni));
        sum += double(inter.size()) / double(uni.size());
        ++n;
    }
    return sum / n;
}

} // namespace oracle
