#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sail/heads.hpp"

using namespace sail;

namespace {

/// Scalar-loop evaluation of every head kind, independent of the matmul kernels.
Matrix<double> reference_forward(const HeadParams<double>& p, const Matrix<double>& x) {
    const auto& c = p.config;
    const std::size_t h = c.hidden_dim();
    Matrix<double> y(x.rows(), c.out_dim);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::vector<double> hidden;
        if (c.kind == HeadKind::linear) {
            for (std::size_t o = 0; o < c.out_dim; ++o) {
                double s = p[1](0, o);
                for (std::size_t i = 0; i < c.in_dim; ++i) s += p[0](o, i) * x(r, i);
                y(r, o) = s;
            }
            continue;
        }
        for (std::size_t k = 0; k < h; ++k) {
            double a = 0.0, u = 0.0;
            for (std::size_t i = 0; i < c.in_dim; ++i) {
                a += p[0](k, i) * x(r, i);
                if (c.kind == HeadKind::glu) u += p[1](k, i) * x(r, i);
            }
            if (c.kind == HeadKind::mlp) hidden.push_back(std::max(0.0, a + p[1](0, k)));
            else hidden.push_back(std::max(0.0, a) * u);
        }
        for (std::size_t o = 0; o < c.out_dim; ++o) {
            double s = p[3](0, o);
            for (std::size_t k = 0; k < h; ++k) s += p[2](o, k) * hidden[k];
            y(r, o) = s;
        }
    }
    return y;
}

HeadParams<double> random_head(HeadKind kind, std::size_t in, std::size_t n, std::size_t out, std::uint64_t seed) {
    auto p = init_head<double>(HeadConfig{kind, in, out, n, seed});
    sail::SplitMix64 g(seed + 99);
    for (auto& t : p.tensors)
        if (t.value.rows() == 1)
            for (auto& v : t.value.values()) v = 0.3 * g.normal();  // nonzero biases
    return p;
}

/// Pre-activations closer than this to zero would put the finite difference across a ReLU kink.
bool near_kink(const HeadParams<double>& p, const Matrix<double>& x) {
    if (p.config.kind == HeadKind::linear) return false;
    const auto f = head_forward(p, x);
    for (double v : f.cache.pre.values())
        if (std::abs(v) < 2e-2) return true;
    return false;
}

/// Checks dL/d(params) and dL/dx for L = sum(R * head(x)) against central differences.
double max_fd_error(HeadParams<double> p, Matrix<double> x, const Matrix<double>& R) {
    auto loss = [&] {
        const auto y = head_forward(p, x).output;
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += R.data()[i] * y.data()[i];
        return s;
    };
    const auto f = head_forward(p, x);
    const auto g = head_backward(p, f.cache, R);
    double worst = 0.0;
    for (std::size_t t = 0; t < p.tensors.size(); ++t) {
        const auto fd = oracle::fd_gradient(p[t], loss);
        worst = std::max(worst, oracle::rel_err(oracle::as_vector(g.tensors[t].value), fd));
    }
    const auto fdx = oracle::fd_gradient(x, loss);
    worst = std::max(worst, oracle::rel_err(oracle::as_vector(g.d_input), fdx));
    return worst;
}

} // namespace

TEST(InitHead, DeterministicPerSeed) {
    const HeadConfig c{HeadKind::glu, 6, 4, 2, 11};
    EXPECT_EQ(init_head<float>(c), init_head<float>(c));
    auto other = c;
    other.init_seed = 12;
    EXPECT_NE(init_head<float>(c), init_head<float>(other));
}

TEST(InitHead, LinearFanInBound) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto p = init_head<float>(HeadConfig{HeadKind::linear, 4, 4, 1, s});
        for (float w : p[0].values()) EXPECT_LT(std::abs(w), 0.5f);
        for (float b : p[1].values()) EXPECT_EQ(b, 0.0f);
    }
}

TEST(InitHead, GluTimesEightShapes) {
    const auto p = init_head<float>(HeadConfig{HeadKind::glu, 1024, 1024, 8, 0});
    ASSERT_EQ(p.tensors.size(), 4u);
    EXPECT_EQ(p.tensors[0].name, "W_gate");
    EXPECT_EQ(shape_str(p[0]), "8192x1024");
    EXPECT_EQ(shape_str(p[1]), "8192x1024");
    EXPECT_EQ(shape_str(p[2]), "1024x8192");
    EXPECT_EQ(shape_str(p[3]), "1x1024");
}

TEST(InitHead, MlpShapes) {
    const auto p = init_head<float>(HeadConfig{HeadKind::mlp, 3, 5, 4, 0});
    EXPECT_EQ(shape_str(p[0]), "12x3");
    EXPECT_EQ(shape_str(p[1]), "1x12");
    EXPECT_EQ(shape_str(p[2]), "5x12");
    EXPECT_EQ(shape_str(p[3]), "1x5");
}

TEST(HeadForward, LinearIdentity) {
    auto p = init_head<double>(HeadConfig{HeadKind::linear, 3, 3, 1, 0});
    p[0] = Matrix<double>(3, 3);
    for (int i = 0; i < 3; ++i) p[0](i, i) = 1.0;
    sail::SplitMix64 g(1);
    const auto x = oracle::random_matrix<double>(4, 3, g);
    EXPECT_EQ(head_forward(p, x).output, x);
}

TEST(HeadForward, ClosedGateOutputsBias) {
    auto p = init_head<double>(HeadConfig{HeadKind::glu, 3, 2, 2, 0});
    for (auto& v : p[0].values()) v = -1.0;  // x >= 0 below, so every gate pre-activation is negative
    p[3](0, 0) = 0.25;
    p[3](0, 1) = -4.0;
    Matrix<double> x(3, 3, std::vector<double>{1, 2, 3, 0.5, 0.1, 0.2, 4, 0, 1});
    const auto y = head_forward(p, x).output;
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_EQ(y(r, 0), 0.25);
        EXPECT_EQ(y(r, 1), -4.0);
    }
}

TEST(HeadForward, MatchesScalarReference) {
    for (auto kind : {HeadKind::glu, HeadKind::mlp, HeadKind::linear}) {
        auto p = random_head(kind, 8, 2, 4, 3);
        sail::SplitMix64 g(4);
        const auto x = oracle::random_matrix<double>(3, 8, g);
        const auto y = head_forward(p, x).output;
        const auto ref = reference_forward(p, x);
        for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], ref.data()[i], 1e-6) << head_kind_name(kind);
    }
}

TEST(HeadForward, DimMismatch) {
    const auto p = init_head<float>(HeadConfig{HeadKind::linear, 3, 2, 1, 0});
    EXPECT_THROW(head_forward(p, EmbeddingMatrix(2, 4)), ShapeError);
}

TEST(HeadForward, LinearScalesWithInput) {
    auto p = random_head(HeadKind::linear, 5, 1, 3, 8);
    p[1] = Matrix<double>(1, 3);
    sail::SplitMix64 g(9);
    const auto x = oracle::random_matrix<double>(4, 5, g);
    auto x2 = x;
    for (auto& v : x2.values()) v *= 2.0;  // power of two: exact in floating point
    const auto y = head_forward(p, x).output;
    const auto y2 = head_forward(p, x2).output;
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t o = 0; o < 3; ++o) EXPECT_EQ(y2(r, o), 2.0 * y(r, o));
}

TEST(HeadForward, BitwiseDeterministic) {
    const auto p = init_head<float>(HeadConfig{HeadKind::glu, 32, 16, 4, 5});
    sail::SplitMix64 g(6);
    const auto x = oracle::random_matrix<float>(50, 32, g);
    set_num_threads(1);
    const auto a = head_forward(p, x).output;
    set_num_threads(5);
    const auto b = head_forward(p, x).output;
    set_num_threads(0);
    EXPECT_EQ(a, b);
}

TEST(HeadBackward, ZeroUpstreamGivesZeroGradients) {
    auto p = random_head(HeadKind::glu, 4, 2, 3, 1);
    sail::SplitMix64 g(2);
    const auto x = oracle::random_matrix<double>(5, 4, g);
    const auto f = head_forward(p, x);
    const auto grads = head_backward(p, f.cache, Matrix<double>(5, 3));
    for (const auto& t : grads.tensors)
        for (double v : t.value.values()) EXPECT_EQ(v, 0.0);
    for (double v : grads.d_input.values()) EXPECT_EQ(v, 0.0);
}

TEST(HeadBackward, LinearClosedForm) {
    auto p = random_head(HeadKind::linear, 3, 1, 2, 1);
    sail::SplitMix64 g(3);
    const auto x = oracle::random_matrix<double>(4, 3, g);
    const auto dy = oracle::random_matrix<double>(4, 2, g);
    const auto grads = head_backward(p, head_forward(p, x).cache, dy);
    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t i = 0; i < 3; ++i) {
            double s = 0.0;
            for (std::size_t r = 0; r < 4; ++r) s += dy(r, o) * x(r, i);
            EXPECT_NEAR(grads.tensors[0].value(o, i), s, 1e-12);
        }
}

TEST(HeadBackward, CacheMismatch) {
    const auto glu = random_head(HeadKind::glu, 3, 1, 2, 1);
    const auto lin = random_head(HeadKind::linear, 3, 1, 2, 1);
    const auto f = head_forward(lin, Matrix<double>(2, 3, 1.0));
    EXPECT_THROW(head_backward(glu, f.cache, Matrix<double>(2, 2)), ShapeError);
    EXPECT_THROW(head_backward(lin, f.cache, Matrix<double>(3, 2)), ShapeError);
}

TEST(HeadBackward, GluMatchesFiniteDifferences) {
    auto p = random_head(HeadKind::glu, 6, 2, 3, 21);
    sail::SplitMix64 g(22);
    auto x = oracle::random_matrix<double>(4, 6, g);
    while (near_kink(p, x)) x = oracle::random_matrix<double>(4, 6, g);
    const auto R = oracle::random_matrix<double>(4, 3, g);
    EXPECT_LT(max_fd_error(p, x, R), 1e-4);
}

TEST(HeadBackward, FiniteDifferencePropertyAllKinds) {
    for (auto kind : {HeadKind::linear, HeadKind::mlp, HeadKind::glu}) {
        int checked = 0;
        for (std::uint64_t seed = 0; checked < 50; ++seed) {
            sail::SplitMix64 g(seed * 7919 + static_cast<std::uint64_t>(kind));
            const std::size_t in = 2 + g.next() % 7, n = 1 + g.next() % 3, out = 1 + g.next() % 6, B = 1 + g.next() % 6;
            auto p = random_head(kind, in, n, out, seed);
            auto x = oracle::random_matrix<double>(B, in, g);
            if (near_kink(p, x)) continue;
            const auto R = oracle::random_matrix<double>(B, out, g);
            const double err = max_fd_error(p, x, R);
            EXPECT_LT(err, 1e-4) << head_kind_name(kind) << " seed " << seed;
            ++checked;
        }
    }
}
