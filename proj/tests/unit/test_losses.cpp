#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"
#include "sail/losses.hpp"

using namespace sail;

namespace {

LossConfig sig(Normalization n, double t_log, double b) {
    LossConfig c;
    c.kind = LossKind::sigmoid;
    c.normalization = n;
    c.t_log = t_log;
    c.bias = b;
    return c;
}

LossConfig nce(double t) {
    LossConfig c;
    c.kind = LossKind::infonce;
    c.t_fixed_infonce = t;
    return c;
}

/// Direct transcription of the loss definitions, used as the value oracle.
double reference_sigmoid(const Matrix<double>& x, const Matrix<double>& y, const LossConfig& c) {
    const std::size_t B = x.rows();
    double s = 0.0;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) {
            const double z = i == j ? 1.0 : -1.0;
            const double l = std::exp(c.t_log) * oracle::naive_cos(x, i, y, j) + c.bias;
            s += -std::log(1.0 / (1.0 + std::exp(-z * l)));
        }
    return s / (c.normalization == Normalization::batch ? double(B) : double(B * B));
}

double reference_infonce(const Matrix<double>& x, const Matrix<double>& y, double t) {
    const std::size_t B = x.rows();
    double rows = 0.0, cols = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double sr = 0.0, sc = 0.0;
        for (std::size_t j = 0; j < B; ++j) {
            sr += std::exp(t * oracle::naive_cos(x, i, y, j));
            sc += std::exp(t * oracle::naive_cos(x, j, y, i));
        }
        rows += -std::log(std::exp(t * oracle::naive_cos(x, i, y, i)) / sr);
        cols += -std::log(std::exp(t * oracle::naive_cos(x, i, y, i)) / sc);
    }
    return 0.5 * (rows / double(B) + cols / double(B));
}

struct FdResult {
    double dx, dy, dt, db;
};

FdResult check_fd(Matrix<double> x, Matrix<double> y, LossConfig cfg) {
    auto f = [&] { return contrastive_loss(x, y, cfg).value; };
    const auto out = contrastive_loss(x, y, cfg);
    FdResult r{};
    r.dx = oracle::rel_err(oracle::as_vector(out.d_x), oracle::fd_gradient(x, f));
    r.dy = oracle::rel_err(oracle::as_vector(out.d_y), oracle::fd_gradient(y, f));
    r.dt = oracle::rel_err({out.d_t_log}, {oracle::central_diff(f, cfg.t_log)});
    r.db = oracle::rel_err({out.d_b}, {oracle::central_diff(f, cfg.bias)});
    return r;
}

} // namespace

TEST(SigmoidLoss, OrthogonalBatchAnchors) {
    // every image row orthogonal to every text row
    Matrix<double> x4(2, 4, std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0});
    Matrix<double> y4(2, 4, std::vector<double>{0, 0, 1, 0, 0, 0, 0, 1});
    const auto batch = sigmoid_loss(x4, y4, sig(Normalization::batch, 0.0, 0.0));
    const auto sq = sigmoid_loss(x4, y4, sig(Normalization::batch_squared, 0.0, 0.0));
    EXPECT_NEAR(batch.value, 2.0 * std::numbers::ln2, 1e-12);
    EXPECT_NEAR(sq.value, std::numbers::ln2, 1e-12);
}

TEST(SigmoidLoss, SeparatedDiagonalIsTiny) {
    const std::size_t B = 4;
    Matrix<double> e(B, B);
    for (std::size_t i = 0; i < B; ++i) e(i, i) = 1.0;
    const auto out = sigmoid_loss(e, e, sig(Normalization::batch, std::log(20.0), -10.0));
    const double per_term = std::log1p(std::exp(-10.0));  // softplus(-10) ~= 4.54e-5
    EXPECT_NEAR(per_term, 4.54e-5, 1e-7);
    // B positives at logit +10 and B(B-1) negatives at logit -10, each contributing softplus(-10).
    EXPECT_NEAR(out.value, double(B * B) * per_term / double(B), 1e-12);
}

TEST(SigmoidLoss, MatchesReferenceValue) {
    sail::SplitMix64 g(1);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = oracle::random_matrix<double>(5, 7, g);
        const auto y = oracle::random_matrix<double>(5, 7, g);
        for (auto n : {Normalization::batch, Normalization::batch_squared}) {
            const auto c = sig(n, 0.3 * g.normal() + 1.0, g.normal());
            EXPECT_NEAR(sigmoid_loss(x, y, c).value, reference_sigmoid(x, y, c), 1e-10);
        }
    }
}

TEST(SigmoidLoss, GradientsMatchFiniteDifferences) {
    sail::SplitMix64 g(2);
    const auto x = oracle::random_matrix<double>(4, 8, g);
    const auto y = oracle::random_matrix<double>(4, 8, g);
    for (auto n : {Normalization::batch, Normalization::batch_squared}) {
        const auto r = check_fd(x, y, sig(n, std::log(3.0), -1.0));
        EXPECT_LT(r.dx, 1e-4);
        EXPECT_LT(r.dy, 1e-4);
        EXPECT_LT(r.dt, 1e-4);
        EXPECT_LT(r.db, 1e-4);
    }
}

TEST(SigmoidLoss, RejectsBadBatches) {
    EXPECT_THROW(sigmoid_loss(Matrix<double>(1, 3, 1.0), Matrix<double>(1, 3, 1.0), LossConfig{}), ShapeError);
    EXPECT_THROW(sigmoid_loss(Matrix<double>(2, 3, 1.0), Matrix<double>(2, 4, 1.0), LossConfig{}), ShapeError);
    EXPECT_THROW(sigmoid_loss(Matrix<double>(2, 3, 1.0), Matrix<double>(3, 3, 1.0), LossConfig{}), ShapeError);
}

TEST(SigmoidLoss, BatchSquaredIsBatchOverB) {
    sail::SplitMix64 g(3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t B = 2 + g.next() % 7;
        const auto x = oracle::random_matrix<double>(B, 5, g);
        const auto y = oracle::random_matrix<double>(B, 5, g);
        const double a = sigmoid_loss(x, y, sig(Normalization::batch, 1.0, -2.0)).value;
        const double b = sigmoid_loss(x, y, sig(Normalization::batch_squared, 1.0, -2.0)).value;
        EXPECT_NEAR(b, a / double(B), 1e-15 * a);
    }
}

TEST(Losses, PermutationEquivariance) {
    sail::SplitMix64 g(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t B = 2 + g.next() % 7;
        const auto x = oracle::random_matrix<double>(B, 6, g);
        const auto y = oracle::random_matrix<double>(B, 6, g);
        std::vector<std::size_t> perm(B);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = B - 1; i > 0; --i) std::swap(perm[i], perm[g.next() % (i + 1)]);
        const auto xp = gather_rows(x, std::span<const std::size_t>(perm));
        const auto yp = gather_rows(y, std::span<const std::size_t>(perm));
        for (const auto& c : {sig(Normalization::batch, 1.5, -3.0), nce(10.0)}) {
            EXPECT_NEAR(contrastive_loss(x, y, c).value, contrastive_loss(xp, yp, c).value, 1e-9);
        }
    }
}

TEST(Losses, InvariantToPositiveRowScaling) {
    sail::SplitMix64 g(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = oracle::random_matrix<double>(4, 6, g);
        const auto y = oracle::random_matrix<double>(4, 6, g);
        auto xs = x;
        const std::size_t r = g.next() % 4;
        const double lambda = 0.01 + 50.0 * g.uniform_open();
        for (auto& v : xs.row(r)) v *= lambda;
        for (const auto& c : {sig(Normalization::batch_squared, 2.0, -5.0), nce(30.0)}) {
            EXPECT_NEAR(contrastive_loss(x, y, c).value, contrastive_loss(xs, y, c).value, 1e-6);
        }
    }
}

TEST(SigmoidLoss, StableForHugeLogits) {
    sail::SplitMix64 g(6);
    const auto x = oracle::random_matrix<double>(6, 4, g);
    const auto y = oracle::random_matrix<double>(6, 4, g);
    for (double b : {-1e4, 0.0, 1e4}) {
        const auto out = sigmoid_loss(x, y, sig(Normalization::batch, std::log(1e4), b));
        EXPECT_TRUE(std::isfinite(out.value));
        EXPECT_TRUE(out.d_x.all_finite());
        EXPECT_TRUE(out.d_y.all_finite());
        EXPECT_TRUE(std::isfinite(out.d_t_log));
        EXPECT_TRUE(std::isfinite(out.d_b));
    }
    EXPECT_EQ(softplus(1e4), 1e4);
    EXPECT_EQ(softplus(-1e4), 0.0);
}

TEST(InfoNce, UniformTwoWayIsLogTwo) {
    Matrix<double> x(2, 2, std::vector<double>{1, 0, 1, 0});
    Matrix<double> y(2, 2, std::vector<double>{1, 0, 1, 0});
    EXPECT_NEAR(infonce_loss(x, y, nce(100.0)).value, std::numbers::ln2, 1e-12);
}

TEST(InfoNce, MatchesReferenceValue) {
    sail::SplitMix64 g(7);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = oracle::random_matrix<double>(5, 4, g);
        const auto y = oracle::random_matrix<double>(5, 4, g);
        EXPECT_NEAR(infonce_loss(x, y, nce(7.0)).value, reference_infonce(x, y, 7.0), 1e-10);
    }
}

TEST(InfoNce, DecreasesAlongSeparatingPath) {
    // Orthonormal pairs: logits are t on the diagonal, 0 elsewhere; raising t separates further.
    Matrix<double> e(3, 3);
    for (int i = 0; i < 3; ++i) e(i, i) = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (double t : {0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0}) {
        const double v = infonce_loss(e, e, nce(t)).value;
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, prev);
        prev = v;
    }
    EXPECT_LT(prev, 1e-12);
}

TEST(InfoNce, GradientsMatchFiniteDifferences) {
    sail::SplitMix64 g(8);
    const auto x = oracle::random_matrix<double>(3, 5, g);
    const auto y = oracle::random_matrix<double>(3, 5, g);
    const auto r = check_fd(x, y, nce(4.0));
    EXPECT_LT(r.dx, 1e-4);
    EXPECT_LT(r.dy, 1e-4);
    const auto out = infonce_loss(x, y, nce(4.0));
    EXPECT_EQ(out.d_t_log, 0.0);
    EXPECT_EQ(out.d_b, 0.0);
}

TEST(MultiPositive, DuplicateCaptionDoublesLoss) {
    sail::SplitMix64 g(9);
    const auto x = oracle::random_matrix<double>(4, 6, g);
    const auto y = oracle::random_matrix<double>(4, 6, g);
    const auto c = sig(Normalization::batch_squared, std::log(20.0), -10.0);
    const auto mp = multi_positive_loss(x, y, y, c);
    const auto single = sigmoid_loss(x, y, c);
    EXPECT_NEAR(mp.value, 2.0 * single.value, 1e-12);
}

TEST(MultiPositive, GradientsAreAdditive) {
    sail::SplitMix64 g(10);
    const auto x = oracle::random_matrix<double>(4, 6, g);
    const auto y = oracle::random_matrix<double>(4, 6, g);
    const auto yh = oracle::random_matrix<double>(4, 6, g);
    const auto c = sig(Normalization::batch, 1.0, -1.0);
    const auto mp = multi_positive_loss(x, y, yh, c);
    const auto a = sigmoid_loss(x, y, c);
    const auto b = sigmoid_loss(x, yh, c);
    EXPECT_EQ(mp.d_t_log, a.d_t_log + b.d_t_log);
    EXPECT_EQ(mp.d_b, a.d_b + b.d_b);
    EXPECT_EQ(mp.d_y, a.d_y);
    EXPECT_EQ(mp.d_y_hq, b.d_y);
}

TEST(MultiPositive, MatchesFiniteDifferences) {
    sail::SplitMix64 g(11);
    auto x = oracle::random_matrix<double>(3, 5, g);
    auto y = oracle::random_matrix<double>(3, 5, g);
    auto yh = oracle::random_matrix<double>(3, 5, g);
    auto c = sig(Normalization::batch_squared, 0.7, -0.5);
    auto f = [&] { return multi_positive_loss(x, y, yh, c).value; };
    const auto out = multi_positive_loss(x, y, yh, c);
    EXPECT_LT(oracle::rel_err(oracle::as_vector(out.d_x), oracle::fd_gradient(x, f)), 1e-4);
    EXPECT_LT(oracle::rel_err(oracle::as_vector(out.d_y), oracle::fd_gradient(y, f)), 1e-4);
    EXPECT_LT(oracle::rel_err(oracle::as_vector(out.d_y_hq), oracle::fd_gradient(yh, f)), 1e-4);
    EXPECT_LT(oracle::rel_err({out.d_t_log}, {oracle::central_diff(f, c.t_log)}), 1e-4);
    EXPECT_LT(oracle::rel_err({out.d_b}, {oracle::central_diff(f, c.bias)}), 1e-4);
}

TEST(MultiPositive, ShapeMismatch) {
    EXPECT_THROW(multi_positive_loss(Matrix<double>(2, 2, 1.0), Matrix<double>(2, 2, 1.0), Matrix<double>(3, 2, 1.0), LossConfig{}),
                 ShapeError);
}
