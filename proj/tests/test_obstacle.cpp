#include <gtest/gtest.h>

#include <random>

#include "dynkin/obstacle.hpp"
#include "dynkin/payoffs.hpp"
#include "oracles.hpp"

using namespace dynkin;

namespace {

JetPoint jet1(double v, double v_t, double grad, double hess, double x = 0.0) {
    JetPoint j;
    j.x = {x};
    j.v = v;
    j.v_t = v_t;
    j.grad = {grad};
    j.hess = Matrix(1, 1, hess);
    return j;
}

SdeModel constant_model(double b, double s) {
    return models::scalar("const", [b](double, double) { return b; }, [s](double, double) { return s; });
}

ObstacleProblem constant_problem(double l, double u, double g) {
    ObstacleProblem p;
    p.lower = payoffs::constant(l);
    p.upper = payoffs::constant(u);
    p.terminal = [g](std::span<const double>) { return g; };
    return p;
}

}  // namespace

TEST(Generator, DriftOnly) {
    EXPECT_DOUBLE_EQ(generator_apply(constant_model(2.0, 0.0), jet1(0, 0, 3.0, 7.0)), 6.0);
}

TEST(Generator, DiffusionOnQuadratic) {
    const double s0 = 0.7;
    const double x = 1.3;
    EXPECT_DOUBLE_EQ(generator_apply(constant_model(0.0, s0), jet1(0, 0, 2 * x, 2.0, x)), s0 * s0);
}

TEST(Generator, TwoDimensional) {
    const auto model = models::brownian(2, 1.0, {1.0, -1.0});
    JetPoint j;
    j.x = {0.0, 0.0};
    j.grad = {4.0, 4.0};
    j.hess = Matrix::diagonal(std::vector<double>{2.0, 6.0});
    EXPECT_DOUBLE_EQ(generator_apply(model, j), 4.0);
}

TEST(Generator, DimensionMismatchAndAsymmetry) {
    const auto model = models::brownian(2, 1.0);
    EXPECT_THROW(generator_apply(model, jet1(0, 0, 1, 1)), ArgumentError);
    JetPoint j;
    j.x = {0.0, 0.0};
    j.grad = {0.0, 0.0};
    j.hess = Matrix(2, 2);
    j.hess(0, 1) = 1.0;
    EXPECT_THROW(generator_apply(model, j), ArgumentError);
}

TEST(Isaacs, WorkedExamples) {
    const auto model = constant_model(0.0, 0.0);
    // h = -v_t - Lv = -v_t with zero dynamics.
    EXPECT_EQ(isaacs_residual(model, constant_problem(0, 2, 1), jet1(1.0, 3.0, 0, 0)), -1.0);
    EXPECT_EQ(isaacs_dual_residual(model, constant_problem(0, 2, 1), jet1(1.0, 3.0, 0, 0)), -1.0);
    EXPECT_EQ(isaacs_residual(model, constant_problem(0, 2, 1), jet1(2.0, 0.0, 0, 0)), 0.0);
    EXPECT_EQ(isaacs_residual(model, constant_problem(0, 2, 1), jet1(3.0, -5.0, 0, 0)), 3.0);
    // v = l: min{0, .} <= 0 and both forms agree.
    for (double vt : {-4.0, 0.0, 4.0}) {
        const double f = isaacs_residual(model, constant_problem(0, 2, 1), jet1(0.0, vt, 0, 0));
        EXPECT_LE(f, 0.0);
        EXPECT_EQ(f, isaacs_dual_residual(model, constant_problem(0, 2, 1), jet1(0.0, vt, 0, 0)));
    }
}

TEST(Isaacs, RequiresTimeBeforeHorizon) {
    const auto model = constant_model(0.0, 0.0);
    auto jet = jet1(0, 0, 0, 0);
    jet.t = 1.0;
    EXPECT_THROW(isaacs_residual(model, constant_problem(0, 1, 0), jet), ArgumentError);
}

TEST(Isaacs, SingleObstacleDropsUpperTerm) {
    const auto model = constant_model(0.0, 0.0);
    auto p = constant_problem(0, 2, 1);
    p.upper.reset();
    EXPECT_TRUE(p.single_obstacle());
    // Would be max{1, .} = 3 with u = 2; without an upper obstacle only min{5, 3} remains.
    EXPECT_EQ(isaacs_residual(model, p, jet1(3.0, -5.0, 0, 0)), 3.0);
    EXPECT_EQ(isaacs_residual(model, p, jet1(100.0, -5.0, 0, 0)), 5.0);
}

TEST(Isaacs, FormsAgreeWithCaseEnumeration) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (int n = 0; n < 20000; ++n) {
        double l = U(rng), u = U(rng);
        if (l > u) std::swap(l, u);
        const double v = U(rng), h = U(rng);
        const double maxmin = isaacs_combine(v, l, u, h);
        const double minmax = isaacs_dual_combine(v, l, u, h);
        EXPECT_EQ(maxmin, minmax);
        EXPECT_EQ(maxmin, oracles::isaacs_by_cases(v, l, u, h));
    }
    // Partition v <= l, l < v < u, v >= u with boundary ties.
    for (double v : {-1.0, 0.0, 0.5, 1.0, 2.0}) {
        for (double h : {-2.0, -1.0, 0.0, 0.5, 1.0, 2.0}) {
            EXPECT_EQ(isaacs_combine(v, 0.0, 1.0, h), isaacs_dual_combine(v, 0.0, 1.0, h));
            EXPECT_EQ(isaacs_combine(v, 0.0, 1.0, h), oracles::isaacs_by_cases(v, 0.0, 1.0, h));
        }
    }
}

TEST(Isaacs, FormsAgreeOnSignedZeroTies) {
    // A flat jet gives h = -0; on v = u or v = l the two orderings would otherwise pick different zeros.
    for (double v : {0.5, 1.0}) {
        for (double h : {-0.0, 0.0}) {
            const double a = isaacs_combine(v, 0.5, 1.0, h);
            const double b = isaacs_dual_combine(v, 0.5, 1.0, h);
            EXPECT_EQ(std::signbit(a), std::signbit(b)) << "v = " << v << " h = " << h;
            EXPECT_FALSE(std::signbit(a));
        }
    }
}

TEST(Isaacs, PlayerSwapNegates) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (int n = 0; n < 5000; ++n) {
        double l = U(rng), u = U(rng);
        if (l > u) std::swap(l, u);
        const double v = U(rng), h = U(rng);
        EXPECT_EQ(isaacs_combine(-v, -u, -l, -h), -isaacs_combine(v, l, u, h));
    }
}

TEST(Isaacs, MonotoneInValueAndResidual) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    std::uniform_real_distribution<double> step(0.0, 1.0);
    for (int n = 0; n < 5000; ++n) {
        double l = U(rng), u = U(rng);
        if (l > u) std::swap(l, u);
        const double v = U(rng), h = U(rng), dv = step(rng), dh = step(rng);
        EXPECT_LE(isaacs_combine(v, l, u, h), isaacs_combine(v + dv, l, u, h));
        EXPECT_LE(isaacs_combine(v, l, u, h), isaacs_combine(v, l, u, h + dh));
    }
}

TEST(ObstacleProblem, OrderingAndTerminalChecks) {
    auto p = constant_problem(0.0, 1.0, 0.5);
    const double x[] = {0.0};
    EXPECT_NO_THROW(p.check_point(0.2, x));
    EXPECT_NO_THROW(p.check_point(1.0, x));
    auto crossed = constant_problem(1.0, 0.0, 0.5);
    EXPECT_THROW(crossed.check_point(0.2, x), ProblemError);
    auto bad_terminal = constant_problem(0.0, 1.0, 2.0);
    EXPECT_NO_THROW(bad_terminal.check_point(0.2, x));
    EXPECT_THROW(bad_terminal.check_point(1.0, x), ProblemError);
}

TEST(ObstacleProblem, SwapAndBounds) {
    auto p = constant_problem(-1.0, 2.0, 0.5);
    p.bounds = std::make_pair(-1.0, 2.0);
    const auto q = p.swapped();
    const double x[] = {0.3};
    EXPECT_EQ(q.lower_at(0.1, x), -2.0);
    EXPECT_EQ(q.upper_at(0.1, x), 1.0);
    EXPECT_EQ(q.terminal_at(x), -0.5);
    EXPECT_EQ(q.bounds->first, -2.0);
    EXPECT_TRUE(verify_bounds(p, {{-5.0}, {5.0}}, 200, 1).passed);
    p.bounds = std::make_pair(0.0, 2.0);
    const auto r = verify_bounds(p, {{-5.0}, {5.0}}, 200, 1);
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.observed_min, -1.0);
}

TEST(Payoffs, BuiltinShapes) {
    const double x[] = {0.4};
    EXPECT_DOUBLE_EQ(payoffs::put(1.0)(0.0, x), 0.6);
    EXPECT_DOUBLE_EQ(payoffs::call(0.1)(0.0, x), 0.3);
    EXPECT_DOUBLE_EQ(payoffs::affine(1.0, {2.0}, 0.5)(2.0, x), 2.8);
    EXPECT_DOUBLE_EQ(payoffs::capped_quadratic({0.0}, 0.1)(0.0, x), 0.1);
    EXPECT_DOUBLE_EQ(payoffs::gaussian_bump(2.0, {0.4}, 1.0)(0.0, x), 2.0);
    EXPECT_DOUBLE_EQ(payoffs::scaled(payoffs::constant(1.0), -2.0, 0.5)(0.0, x), -1.5);
    const auto table = payoffs::tabulated({{0.0, 1.0}, {0.0, 2.0}}, {0.0, 2.0, 1.0, 3.0});
    const double y[] = {0.5, 1.0};
    EXPECT_DOUBLE_EQ(table(0.0, y), 1.5);
    const double outside[] = {5.0, -3.0};
    EXPECT_DOUBLE_EQ(table(0.0, outside), 1.0);
    EXPECT_THROW(payoffs::tabulated({{0.0, 1.0}}, {1.0}), ArgumentError);
}
