#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dynkin/payoffs.hpp"
#include "dynkin/pde_solver.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dynkin;
using namespace dynkin::fixtures;

namespace {

double max_heat_error(const GridFunction& v, double margin = 0.2) {
    double err = 0.0;
    std::vector<double> x(1);
    for (std::size_t k = 0; k < v.times.size(); ++k) {
        for (std::size_t j = 0; j < v.grid.size(); ++j) {
            v.grid.coords(j, x);
            if (!v.grid.inside_margin(x, margin)) continue;
            err = std::max(err, std::abs(v.at_node(k, j) - oracles::heat_cosine(v.times[k], x[0], 1.0)));
        }
    }
    return err;
}

void expect_sandwich(const GridFunction& v, const ObstacleProblem& p) {
    std::vector<double> x(v.grid.dim());
    for (std::size_t k = 0; k < v.times.size(); ++k) {
        for (std::size_t j = 0; j < v.grid.size(); ++j) {
            v.grid.coords(j, x);
            ASSERT_LE(p.lower_at(v.times[k], x), v.at_node(k, j));
            ASSERT_LE(v.at_node(k, j), p.upper_at(v.times[k], x));
        }
    }
}

}  // namespace

TEST(Solve, ZeroDynamicsKeepsTerminalPayoff) {
    const auto model = models::brownian(1, 0.0);
    ObstacleProblem p;
    p.lower = payoffs::constant(-1e6);
    p.terminal = payoffs::at_time(payoffs::gaussian_bump(1.0, {0.3}, 0.5), 1.0);
    const auto grid = SpatialGrid::uniform_1d(-2.0, 2.0, 41);
    for (Scheme scheme : {Scheme::explicit_euler, Scheme::implicit_psor}) {
        const auto v = solve(model, p, grid, TimeGrid::uniform(0.0, 1.0, 10), scheme);
        std::vector<double> x(1);
        for (std::size_t k = 0; k < v.times.size(); ++k) {
            for (std::size_t j = 0; j < grid.size(); ++j) {
                grid.coords(j, x);
                EXPECT_EQ(v.at_node(k, j), p.terminal_at(x));
            }
        }
    }
}

TEST(Solve, HeatEquationMatchesClosedForm) {
    const auto model = models::brownian(1, 1.0);
    const auto p = heat_problem();
    const auto grid = SpatialGrid::uniform_1d(-2 * kPi, 2 * kPi, 400);
    const auto v = solve(model, p, grid, TimeGrid::uniform(0.0, 1.0, 400), Scheme::implicit_psor);
    const double origin[] = {0.0};
    EXPECT_NEAR(v(0.0, origin), std::exp(-0.5), 1e-2);
    EXPECT_LE(max_heat_error(v), 1e-2);
}

TEST(Solve, ExplicitHeatWithinCfl) {
    const auto model = models::brownian(1, 1.0);
    const auto p = heat_problem();
    const auto grid = SpatialGrid::uniform_1d(-2 * kPi, 2 * kPi, 101, BoundaryPolicy::neumann_zero);
    const double limit = explicit_step_limit(model, grid, 0.0);
    const auto steps = static_cast<std::size_t>(std::ceil(1.0 / limit));
    const auto v = solve(model, p, grid, TimeGrid::uniform(0.0, 1.0, steps), Scheme::explicit_euler);
    EXPECT_LE(max_heat_error(v), 5e-3);
}

TEST(Solve, ExplicitRejectsCflViolation) {
    const auto model = models::brownian(1, 1.0);
    const auto grid = SpatialGrid::uniform_1d(-2 * kPi, 2 * kPi, 400);
    try {
        solve(model, heat_problem(), grid, TimeGrid::uniform(0.0, 1.0, 400), Scheme::explicit_euler);
        FAIL() << "expected CFL error";
    } catch (const CflError& e) {
        EXPECT_NE(std::string(e.what()).find("CFL"), std::string::npos);
        EXPECT_GT(e.dt, e.dt_max);
    }
}

TEST(Solve, AmericanPutMatchesBinomialTree) {
    const auto grid = SpatialGrid::uniform_1d(0.0, 4.0, 401);
    const auto tgrid = TimeGrid::uniform(0.0, 1.0, 400);
    const double x0[] = {1.0};
    for (double mu : {0.0, 0.1}) {
        const auto tree = oracles::binomial_american_put(1.0, 1.0, 1.0, mu, 0.2, 2000);
        const auto v = solve(models::gbm(1, mu, 0.2), american_put(), grid, tgrid, Scheme::implicit_psor);
        EXPECT_NEAR(v(0.0, x0), tree.price, 5e-3) << "mu = " << mu;
        expect_sandwich(v, american_put());
    }
}

TEST(Solve, GridRefinementConvergesAtFirstOrder) {
    const auto model = models::brownian(1, 1.0);
    double previous = 0.0;
    for (std::size_t n : {51, 101, 201}) {
        const auto grid = SpatialGrid::uniform_1d(-2 * kPi, 2 * kPi, n, BoundaryPolicy::neumann_zero);
        const auto v = solve(model, heat_problem(), grid, TimeGrid::uniform(0.0, 1.0, n - 1), Scheme::implicit_psor);
        const double err = max_heat_error(v);
        if (previous > 0.0) {
            EXPECT_GE(previous / err, 1.5) << "n = " << n;
        }
        previous = err;
    }
}

TEST(Solve, TwoDimensionalCorrelatedHeat) {
    // a = [[1, r], [r, 1]]: cos(x + y) decays at rate (1 + r).
    const double r = 0.5;
    SdeModel model;
    model.name = "correlated";
    model.dim = 2;
    model.noise_dim = 2;
    model.drift = [](double, std::span<const double>, std::span<double> out) { out[0] = out[1] = 0.0; };
    model.diffusion = [r](double, std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 0.0;
        out[2] = r;
        out[3] = std::sqrt(1.0 - r * r);
    };
    ObstacleProblem p;
    p.dim = 2;
    p.horizon = 0.5;
    p.lower = payoffs::constant(-5.0);
    p.upper = payoffs::constant(5.0);
    p.terminal = [](std::span<const double> x) { return std::cos(x[0] + x[1]); };
    const SpatialGrid grid({Axis{-kPi, kPi, 81}, Axis{-kPi, kPi, 81}}, BoundaryPolicy::dirichlet_from_payoff);
    const auto v = solve(model, p, grid, TimeGrid::uniform(0.0, 0.5, 100), Scheme::implicit_psor);
    const double origin[] = {0.0, 0.0};
    EXPECT_NEAR(v(0.0, origin), std::exp(-(1.0 + r) * 0.5), 2e-2);
    const auto explicit_v = solve(model, p, grid, TimeGrid::uniform(0.0, 0.5, 400), Scheme::explicit_euler);
    EXPECT_NEAR(explicit_v(0.0, origin), std::exp(-(1.0 + r) * 0.5), 2e-2);
}

TEST(Solve, RejectsNonMonotoneCrossDiffusion) {
    SdeModel model = models::brownian(2, 1.0);
    model.diffusion = [](double, std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 0.0;
        out[2] = 0.95;
        out[3] = std::sqrt(1.0 - 0.95 * 0.95);
    };
    ObstacleProblem p;
    p.dim = 2;
    p.lower = payoffs::constant(-1.0);
    p.upper = payoffs::constant(1.0);
    p.terminal = [](std::span<const double>) { return 0.0; };
    const SpatialGrid grid({Axis{-1.0, 1.0, 11}, Axis{-1.0, 1.0, 41}});
    EXPECT_THROW(solve(model, p, grid, TimeGrid::uniform(0.0, 1.0, 10), Scheme::implicit_psor), ArgumentError);
}

TEST(Solve, PsorNonConvergenceCarriesResidual) {
    SolverOptions opts;
    opts.max_iter = 1;
    try {
        solve(models::brownian(1, 1.0), heat_problem(), SpatialGrid::uniform_1d(-3.0, 3.0, 101),
              TimeGrid::uniform(0.0, 1.0, 10), Scheme::implicit_psor, opts);
        FAIL() << "expected convergence error";
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.residual, opts.psor_tol);
        EXPECT_EQ(e.iterations, 1u);
    }
}

TEST(Solve, RejectsCrossedObstacles) {
    ObstacleProblem p = heat_problem();
    p.upper = [](double, std::span<const double> x) { return x[0] > 1.0 ? -20.0 : 10.0; };
    EXPECT_THROW(solve(models::brownian(1, 1.0), p, SpatialGrid::uniform_1d(-2.0, 2.0, 21),
                       TimeGrid::uniform(0.0, 1.0, 5), Scheme::implicit_psor),
                 ProblemError);
}

TEST(Solve, DeterministicAcrossThreadCounts) {
    const auto model = models::brownian(1, 1.0);
    const auto grid = SpatialGrid::uniform_1d(-3.0, 3.0, 61);
    SolverOptions one, four;
    four.threads = 4;
    for (Scheme scheme : {Scheme::explicit_euler, Scheme::implicit_psor}) {
        const auto tg = TimeGrid::uniform(0.0, 1.0, 400);
        const auto a = solve(model, twin_bump_game(), grid, tg, scheme, one);
        const auto b = solve(model, twin_bump_game(), grid, tg, scheme, four);
        EXPECT_EQ(a.values, b.values);
    }
}

TEST(Solve, PlayerSwapNegatesExactly) {
    const auto model = models::brownian(1, 1.0, {0.3});
    const auto grid = SpatialGrid::uniform_1d(-3.0, 3.0, 61);
    const auto tg = TimeGrid::uniform(0.0, 1.0, 400);
    const auto game = twin_bump_game();
    for (Scheme scheme : {Scheme::explicit_euler, Scheme::implicit_psor}) {
        const auto v = solve(model, game, grid, tg, scheme);
        const auto w = solve(model, game.swapped(), grid, tg, scheme);
        for (std::size_t i = 0; i < v.values.size(); ++i) ASSERT_EQ(w.values[i], -v.values[i]);
    }
}

TEST(Solve, DiscreteComparisonUnderBumps) {
    const auto model = models::brownian(1, 1.0);
    const auto grid = SpatialGrid::uniform_1d(-3.0, 3.0, 61);
    const auto tg = TimeGrid::uniform(0.0, 1.0, 400);
    const auto base = twin_bump_game();
    const auto v_exp = solve(model, base, grid, tg, Scheme::explicit_euler);
    const auto v_imp = solve(model, base, grid, tg, Scheme::implicit_psor);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        auto bumped = base;
        const double c = -3.0 + 6.0 * U(rng), h = 0.05 * U(rng), w = 0.1 + 0.5 * U(rng);
        const auto bump = payoffs::gaussian_bump(h, {c}, w);
        const int which = trial % 3;
        if (which == 0) {
            bumped.terminal = [g = base.terminal, bump](std::span<const double> x) { return g(x) + bump(1.0, x); };
            bumped.upper = [u = *base.upper, bump](double t, std::span<const double> x) { return u(t, x) + bump(t, x); };
        } else if (which == 1) {
            bumped.upper = [u = *base.upper, bump](double t, std::span<const double> x) { return u(t, x) + bump(t, x); };
        } else {
            // Raising l alone must keep l(T) <= g; bump l away from the horizon only.
            bumped.lower = [l = *base.lower, bump](double t, std::span<const double> x) {
                return l(t, x) + (t < 0.5 ? bump(t, x) : 0.0);
            };
        }
        const auto w_exp = solve(model, bumped, grid, tg, Scheme::explicit_euler);
        const auto w_imp = solve(model, bumped, grid, tg, Scheme::implicit_psor);
        for (std::size_t i = 0; i < v_exp.values.size(); ++i) {
            ASSERT_GE(w_exp.values[i], v_exp.values[i]);
            ASSERT_GE(w_imp.values[i], v_imp.values[i] - 1e-8);
        }
    }
}

TEST(Complementarity, HeatCaseIsClean) {
    const auto model = models::brownian(1, 1.0);
    const auto p = heat_problem();
    const auto v = solve(model, p, SpatialGrid::uniform_1d(-2 * kPi, 2 * kPi, 400), TimeGrid::uniform(0.0, 1.0, 400),
                         Scheme::implicit_psor);
    const auto r = complementarity_report(v, model, p, 1e-5);
    EXPECT_TRUE(r.clean());
    EXPECT_EQ(r.region_sign_violations, 0u);
    EXPECT_LE(r.max_interior_residual, 1e-5);
}

TEST(Complementarity, InjectedFaultIsFlagged) {
    const auto model = models::brownian(1, 1.0);
    const auto p = heat_problem();
    const auto tg = TimeGrid::uniform(0.0, 1.0, 100);
    auto v = solve(model, p, SpatialGrid::uniform_1d(-2 * kPi, 2 * kPi, 101), tg, Scheme::implicit_psor);
    v.at_node(40, 50) += 0.1;
    const auto r = complementarity_report(v, model, p, 1e-5);
    EXPECT_FALSE(r.clean());
    EXPECT_EQ(r.witness_time, 40u);
    EXPECT_EQ(r.witness_node, 50u);
    // 0.1 / dt plus the stencil's own response to the bump.
    EXPECT_GE(r.max_interior_residual, 0.1 / tg.dt(0));
    EXPECT_LE(r.max_interior_residual, 0.1 / tg.dt(0) + 0.1 * 2.0 / std::pow(4 * kPi / 100, 2) + 1.0);
}

TEST(Complementarity, AmericanPutContactSigns) {
    const auto model = models::gbm(1, 0.1, 0.2);
    const auto p = american_put();
    const auto v = solve(model, p, SpatialGrid::uniform_1d(0.0, 4.0, 401), TimeGrid::uniform(0.0, 1.0, 400),
                         Scheme::implicit_psor);
    const auto r = complementarity_report(v, model, p, 1e-5);
    EXPECT_EQ(r.region_sign_violations, 0u);
    EXPECT_TRUE(r.clean());
}

TEST(Regions, SingleObstacleHasNoUpperRegion) {
    const auto model = models::gbm(1, 0.1, 0.2);
    const auto tg = TimeGrid::uniform(0.0, 1.0, 100);
    const auto v = solve(model, american_put(), SpatialGrid::uniform_1d(0.0, 4.0, 101), tg, Scheme::implicit_psor);
    const auto r = extract_regions(v, american_put(), default_contact_tolerance({}, tg));
    EXPECT_TRUE(r.upper_empty());
    EXPECT_FALSE(r.lower_empty());
}

TEST(Regions, CoincidentObstaclesFillBothMasks) {
    ObstacleProblem p;
    p.lower = payoffs::constant(0.25);
    p.upper = payoffs::constant(0.25);
    p.terminal = [](std::span<const double>) { return 0.25; };
    const auto tg = TimeGrid::uniform(0.0, 1.0, 10);
    const auto v = solve(models::brownian(1, 1.0), p, SpatialGrid::uniform_1d(-1.0, 1.0, 11), tg, Scheme::implicit_psor);
    const auto r = extract_regions(v, p, 1e-8);
    EXPECT_TRUE(std::all_of(r.upper_mask.begin(), r.upper_mask.end(), [](auto b) { return b; }));
    EXPECT_TRUE(std::all_of(r.lower_mask.begin(), r.lower_mask.end(), [](auto b) { return b; }));
}

TEST(Regions, AmericanPutBoundaryMatchesTree) {
    const auto model = models::gbm(1, 0.1, 0.2);
    const auto grid = SpatialGrid::uniform_1d(0.0, 4.0, 401);
    const auto tg = TimeGrid::uniform(0.0, 1.0, 400);
    const auto v = solve(model, american_put(), grid, tg, Scheme::implicit_psor);
    const auto regions = extract_regions(v, american_put(), default_contact_tolerance({}, tg));
    const auto tree = oracles::binomial_american_put(1.0, 1.0, 1.0, 0.1, 0.2, 2000);
    const double cell = grid.axis(0).step();
    for (double t : {0.25, 0.5, 0.75, 0.9, 0.99}) {
        const std::size_t k = tg.index_at_or_before(t);
        double pde_boundary = std::nan("");
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const double x = grid.axis(0).node(j);
            if (regions.lower(k, j) && x < 1.0) pde_boundary = x;
        }
        const double tree_boundary = tree.boundary[static_cast<std::size_t>(std::lround(t * 2000))];
        EXPECT_NEAR(pde_boundary, tree_boundary, cell) << "t = " << t;
    }
}

TEST(GridFunction, InterpolationIsExactOnAffineData) {
    const SpatialGrid grid({Axis{-1.0, 1.0, 5}, Axis{0.0, 2.0, 9}});
    GridFunction f(grid, TimeGrid::uniform(0.0, 1.0, 2));
    std::vector<double> x(2);
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t j = 0; j < grid.size(); ++j) {
            grid.coords(j, x);
            f.at_node(k, j) = 1.0 + 2.0 * x[0] - 0.5 * x[1] + static_cast<double>(k);
        }
    }
    const double p[] = {0.37, 1.21};
    EXPECT_NEAR(f(0.0, p), 1.0 + 0.74 - 0.605, 1e-14);
    // Piecewise constant from the left in time.
    EXPECT_NEAR(f(0.49, p), 1.0 + 0.74 - 0.605, 1e-14);
    EXPECT_NEAR(f(0.5, p), 2.0 + 0.74 - 0.605, 1e-14);
    // Clamped outside the box.
    const double outside[] = {5.0, 1.0};
    EXPECT_NEAR(f(0.0, outside), 1.0 + 2.0 - 0.5, 1e-14);
}

TEST(SpatialGrid, Validation) {
    EXPECT_THROW(SpatialGrid({Axis{0.0, 1.0, 2}}), ArgumentError);
    EXPECT_THROW(SpatialGrid({Axis{1.0, 1.0, 5}}), ArgumentError);
    EXPECT_THROW(SpatialGrid({Axis{0, 1, 3}, Axis{0, 1, 3}, Axis{0, 1, 3}, Axis{0, 1, 3}}), ArgumentError);
}
