#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "sail/linalg.hpp"
#include "sail/matrix.hpp"

namespace sail {

enum class LossKind { sigmoid, infonce };
enum class Normalization { batch, batch_squared };

inline std::string_view loss_kind_name(LossKind k) { return k == LossKind::sigmoid ? "sigmoid" : "infonce"; }
inline std::string_view normalization_name(Normalization n) {
    return n == Normalization::batch ? "batch" : "batch_squared";
}

inline LossKind parse_loss_kind(std::string_view s) {
    if (s == "sigmoid") return LossKind::sigmoid;
    if (s == "infonce") return LossKind::infonce;
    throw ConfigError("unknown loss kind \"" + std::string(s) + "\" (expected sigmoid or infonce)");
}

inline Normalization parse_normalization(std::string_view s) {
    if (s == "batch") return Normalization::batch;
    if (s == "batch_squared") return Normalization::batch_squared;
    throw ConfigError("unknown normalization \"" + std::string(s) + "\" (expected batch or batch_squared)");
}

struct LossConfig {
    LossKind kind = LossKind::sigmoid;
    Normalization normalization = Normalization::batch_squared;
    double t_log = std::log(20.0);  ///< effective temperature is exp(t_log)
    double bias = -10.0;
    double t_fixed_infonce = 100.0;
    bool multi_positive = false;

    void validate() const {
        if (!std::isfinite(t_log) || !std::isfinite(std::exp(t_log))) throw ConfigError("loss t_log must give a finite exp(t_log)");
        if (!std::isfinite(bias)) throw ConfigError("loss bias must be finite");
        if (!(t_fixed_infonce > 0.0)) throw ConfigError("t_fixed_infonce must be > 0");
    }

    friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Gradients are w.r.t. the raw (pre-normalization) projected batches.
template <class T>
struct LossOutput {
    double value = 0.0;
    Matrix<T> d_x;
    Matrix<T> d_y;
    double d_t_log = 0.0;
    double d_b = 0.0;
};

template <class T>
struct MultiPositiveOutput {
    double value = 0.0;
    Matrix<T> d_x;
    Matrix<T> d_y;
    Matrix<T> d_y_hq;
    double d_t_log = 0.0;
    double d_b = 0.0;
};

/// log(1 + e^u) without overflow.
inline double softplus(double u) noexcept { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

inline double sigmoid(double u) noexcept {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

namespace detail {

struct UnitRows {
    Matrix<double> unit;
    std::vector<double> norm;
};

template <class T>
UnitRows unit_rows(const Matrix<T>& a) {
    UnitRows u{Matrix<double>(a.rows(), a.cols()), row_norms(a)};
    for (std::size_t i = 0; i < a.rows(); ++i) {
        if (u.norm[i] == 0.0) continue;
        for (std::size_t j = 0; j < a.cols(); ++j) u.unit(i, j) = static_cast<double>(a(i, j)) / u.norm[i];
    }
    return u;
}

/// Pulls a gradient w.r.t. unit rows back through v -> v / |v|. Zero rows get zero gradient.
template <class T>
Matrix<T> normalize_backward(const UnitRows& u, const Matrix<double>& d_unit) {
    Matrix<T> d(u.unit.rows(), u.unit.cols());
    for (std::size_t i = 0; i < d.rows(); ++i) {
        if (u.norm[i] == 0.0) continue;
        const double proj = dot(u.unit.row(i), d_unit.row(i));
        for (std::size_t j = 0; j < d.cols(); ++j) {
            d(i, j) = static_cast<T>((d_unit(i, j) - u.unit(i, j) * proj) / u.norm[i]);
        }
    }
    return d;
}

template <class T>
void check_pair(const Matrix<T>& x, const Matrix<T>& y, const char* what) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw ShapeError(std::string(what) + ": batch shapes differ " + shape_str(x) + " vs " + shape_str(y));
    }
    if (x.rows() < 2) throw ShapeError(std::string(what) + ": batch size must be >= 2, got " + std::to_string(x.rows()));
}

} // namespace detail

/// Pairwise sigmoid loss with logits t*(x^_i . y^_j) + b, t = exp(t_log), label +1 on the diagonal
/// and -1 elsewhere. value = (1/N) sum_ij softplus(-z_ij * logit_ij), N = B or B^2.
template <class T>
LossOutput<T> sigmoid_loss(const Matrix<T>& x, const Matrix<T>& y, const LossConfig& cfg) {
    detail::check_pair(x, y, "sigmoid_loss");
    const std::size_t B = x.rows();
    const double N = cfg.normalization == Normalization::batch ? static_cast<double>(B) : static_cast<double>(B * B);
    const double t = std::exp(cfg.t_log);

    const auto xu = detail::unit_rows(x);
    const auto yu = detail::unit_rows(y);
    const Matrix<double> sim = matmul_abt(xu.unit, yu.unit);

    Matrix<double> d_sim(B, B);
    std::vector<double> row_loss(B), row_db(B), row_dt(B);
    parallel_for(B, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double l = 0.0, db = 0.0, dt = 0.0;
            for (std::size_t j = 0; j < B; ++j) {
                const double z = i == j ? 1.0 : -1.0;
                const double logit = t * sim(i, j) + cfg.bias;
                l += softplus(-z * logit);
                const double d_logit = -z * sigmoid(-z * logit) / N;
                db += d_logit;
                dt += d_logit * sim(i, j);
                d_sim(i, j) = t * d_logit;
            }
            row_loss[i] = l;
            row_db[i] = db;
            row_dt[i] = dt;
        }
    });

    LossOutput<T> out;
    for (std::size_t i = 0; i < B; ++i) {
        out.value += row_loss[i];
        out.d_b += row_db[i];
        out.d_t_log += row_dt[i];
    }
    out.value /= N;
    out.d_t_log *= t;
    out.d_x = detail::normalize_backward<T>(xu, matmul(d_sim, yu.unit));
    out.d_y = detail::normalize_backward<T>(yu, matmul_atb(d_sim, xu.unit));
    return out;
}

/// Symmetric InfoNCE over logits t_fixed * x^ y^T with diagonal targets:
/// value = (CE over rows + CE over columns) / 2, each averaged over B. Temperature is not learned.
template <class T>
LossOutput<T> infonce_loss(const Matrix<T>& x, const Matrix<T>& y, const LossConfig& cfg) {
    detail::check_pair(x, y, "infonce_loss");
    const std::size_t B = x.rows();
    const double t = cfg.t_fixed_infonce;
    const auto xu = detail::unit_rows(x);
    const auto yu = detail::unit_rows(y);
    Matrix<double> logits = matmul_abt(xu.unit, yu.unit);
    for (auto& v : logits.values()) v *= t;

    // Row softmax (image -> text) and column softmax (text -> image).
    Matrix<double> p_row(B, B), p_col(B, B);
    std::vector<double> row_ce(B), col_ce(B);
    for (std::size_t i = 0; i < B; ++i) {
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < B; ++j) mx = std::max(mx, logits(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < B; ++j) s += std::exp(logits(i, j) - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < B; ++j) p_row(i, j) = std::exp(logits(i, j) - lse);
        row_ce[i] = lse - logits(i, i);
    }
    for (std::size_t j = 0; j < B; ++j) {
        double mx = logits(0, j);
        for (std::size_t i = 1; i < B; ++i) mx = std::max(mx, logits(i, j));
        double s = 0.0;
        for (std::size_t i = 0; i < B; ++i) s += std::exp(logits(i, j) - mx);
        const double lse = mx + std::log(s);
        for (std::size_t i = 0; i < B; ++i) p_col(i, j) = std::exp(logits(i, j) - lse);
        col_ce[j] = lse - logits(j, j);
    }

    LossOutput<T> out;
    double rows = 0.0, cols = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        rows += row_ce[i];
        cols += col_ce[i];
    }
    const double inv = 1.0 / static_cast<double>(B);
    out.value = 0.5 * (rows * inv + cols * inv);

    Matrix<double> d_sim(B, B);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) {
            const double delta = i == j ? 1.0 : 0.0;
            d_sim(i, j) = t * 0.5 * inv * ((p_row(i, j) - delta) + (p_col(i, j) - delta));
        }
    }
    out.d_x = detail::normalize_backward<T>(xu, matmul(d_sim, yu.unit));
    out.d_y = detail::normalize_backward<T>(yu, matmul_atb(d_sim, xu.unit));
    return out;
}

template <class T>
LossOutput<T> contrastive_loss(const Matrix<T>& x, const Matrix<T>& y, const LossConfig& cfg) {
    return cfg.kind == LossKind::sigmoid ? sigmoid_loss(x, y, cfg) : infonce_loss(x, y, cfg);
}

/// L(x, y) + L(x, y_hq) with shared (t, b); y and y_hq gradients are kept apart.
template <class T>
MultiPositiveOutput<T> multi_positive_loss(const Matrix<T>& x, const Matrix<T>& y, const Matrix<T>& y_hq,
                                           const LossConfig& cfg) {
    if (y.rows() != y_hq.rows() || y.cols() != y_hq.cols()) {
        throw ShapeError("multi_positive_loss: y is " + shape_str(y) + " but y_hq is " + shape_str(y_hq));
    }
    auto a = contrastive_loss(x, y, cfg);
    auto b = contrastive_loss(x, y_hq, cfg);
    MultiPositiveOutput<T> out;
    out.value = a.value + b.value;
    out.d_x = std::move(a.d_x);
    for (std::size_t i = 0; i < out.d_x.size(); ++i) out.d_x.data()[i] += b.d_x.data()[i];
    out.d_y = std::move(a.d_y);
    out.d_y_hq = std::move(b.d_y);
    out.d_t_log = a.d_t_log + b.d_t_log;
    out.d_b = a.d_b + b.d_b;
    return out;
}

} // namespace sail
