#include <gtest/gtest.h>

#include <limits>

#include "sail/optim.hpp"

using namespace sail;

namespace {

LionState<double> state(double lr, double b1, double b2, double wd) {
    LionState<double> s;
    s.config = LionConfig{lr, b1, b2, wd};
    return s;
}

void step1(double& p, double g, LionState<double>& s, const std::string& name = "p", bool decay = true) {
    std::vector<ParamRef<double>> refs{{name, std::span(&p, 1), std::span(&g, 1), decay}};
    lion_step(std::span(refs), s);
}

} // namespace

TEST(Lion, HandComputedStep) {
    auto s = state(0.1, 0.9, 0.99, 0.0);
    s.momentum["p"] = {0.5};
    double p = 1.0;
    step1(p, -1.0, s);
    // beta1 m + (1 - beta1) g = 0.45 - 0.1 > 0, so the step goes down despite the negative gradient
    EXPECT_NEAR(p, 0.9, 1e-12);
    EXPECT_NEAR(s.momentum["p"][0], 0.485, 1e-12);
    EXPECT_EQ(s.step, 1u);
}

TEST(Lion, StepMagnitudeIsLr) {
    auto s = state(0.125, 0.5, 0.5, 0.0);
    double p = 2.0;
    step1(p, 3.0, s);
    EXPECT_EQ(p, 1.875);
    step1(p, -0.25, s);  // 0.5 * 1.5 - 0.125 > 0: still moves down
    EXPECT_EQ(p, 1.75);
}

TEST(Lion, ZeroGradientOnlyDecays) {
    auto s = state(0.5, 0.9, 0.99, 0.25);
    double p = 4.0;
    step1(p, 0.0, s);
    EXPECT_EQ(p, 4.0 - 0.5 * 0.25 * 4.0);
    EXPECT_EQ(s.momentum["p"][0], 0.0);
}

TEST(Lion, NoDecayWhenDisabled) {
    auto s = state(0.5, 0.9, 0.99, 0.25);
    double p = 4.0;
    step1(p, 0.0, s, "loss.b", false);
    EXPECT_EQ(p, 4.0);
}

TEST(Lion, MomentumClosedForm) {
    const double b2 = 0.99, g = 0.7;
    auto s = state(1e-3, 0.9, b2, 0.0);
    double p = 0.0;
    for (int k = 1; k <= 40; ++k) {
        step1(p, g, s);
        EXPECT_NEAR(s.momentum["p"][0], g * (1.0 - std::pow(b2, k)), 1e-12);
    }
}

TEST(Lion, BitIdenticalRuns) {
    auto run = [] {
        auto s = state(0.01, 0.9, 0.99, 1e-3);
        std::vector<double> p{0.1, -0.2, 0.3, 0.0}, g(4);
        for (int k = 0; k < 100; ++k) {
            for (std::size_t i = 0; i < 4; ++i) g[i] = std::sin(0.37 * k + double(i)) - 0.3 * p[i];
            std::vector<ParamRef<double>> refs{{"w", p, g, true}};
            lion_step(std::span(refs), s);
        }
        return std::make_pair(p, s);
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
}

TEST(Lion, NonFiniteGradientRejectedBeforeAnyMutation) {
    auto s = state(0.1, 0.9, 0.99, 0.0);
    std::vector<double> a{1.0, 2.0}, ga{0.5, 0.5};
    std::vector<double> b{3.0}, gb{std::numeric_limits<double>::quiet_NaN()};
    std::vector<ParamRef<double>> refs{{"head.image.W", a, ga, true}, {"head.text.W", b, gb, true}};
    try {
        lion_step(std::span(refs), s);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("head.text.W"), std::string::npos);
    }
    EXPECT_EQ(a, (std::vector<double>{1.0, 2.0}));
    EXPECT_TRUE(s.momentum.empty());
    EXPECT_EQ(s.step, 0u);
}

TEST(Lion, ShapeMismatch) {
    auto s = state(0.1, 0.9, 0.99, 0.0);
    std::vector<double> a{1.0, 2.0}, g{0.5};
    std::vector<ParamRef<double>> refs{{"w", a, g, true}};
    EXPECT_THROW(lion_step(std::span(refs), s), ShapeError);
    s.momentum["w"] = {0.0, 0.0, 0.0};
    std::vector<double> g2{0.5, 0.5};
    std::vector<ParamRef<double>> refs2{{"w", a, g2, true}};
    EXPECT_THROW(lion_step(std::span(refs2), s), ShapeError);
}

TEST(Lion, InvalidConfig) {
    auto s = state(0.1, 1.0, 0.99, 0.0);
    double p = 0.0;
    EXPECT_THROW(step1(p, 1.0, s), ConfigError);
}

TEST(Lion, SignOfZeroIsZero) {
    EXPECT_EQ(sign_of(0.0), 0.0);
    EXPECT_EQ(sign_of(-0.0), 0.0);
    EXPECT_EQ(sign_of(-3.0f), -1.0f);
}
