#pragma once

// Problem setups shared by several suites.

#include <algorithm>
#include <cmath>

#include "dynkin/obstacle.hpp"
#include "dynkin/payoffs.hpp"
#include "dynkin/sde.hpp"

namespace dynkin::fixtures {

constexpr double kPi = 3.14159265358979323846;

/// Obstacles far away, g = cos(x): the linear heat problem.
inline ObstacleProblem heat_problem(double T = 1.0) {
    ObstacleProblem p;
    p.horizon = T;
    p.lower = payoffs::constant(-10.0);
    p.upper = payoffs::constant(10.0);
    p.terminal = payoffs::at_time(payoffs::cosine(1.0), T);
    return p;
}

/// Undiscounted American put (K - x)^+; single obstacle.
inline ObstacleProblem american_put(double strike = 1.0) {
    ObstacleProblem p;
    p.lower = payoffs::put(strike);
    p.terminal = payoffs::at_time(payoffs::put(strike), 1.0);
    return p;
}

/// l = -0.5 - min(x^2, 1), u = -l, g = 0.
inline ObstacleProblem symmetric_game() {
    ObstacleProblem p;
    const auto phi = payoffs::scaled(payoffs::capped_quadratic({0.0}, 1.0), 1.0, 0.5);
    p.lower = payoffs::scaled(phi, -1.0, 0.0);
    p.upper = phi;
    p.terminal = [](std::span<const double>) { return 0.0; };
    return p;
}

/// l = b(x + 0.6) - 0.3, u = 0.3 - b(x - 0.6), g = (l + u) / 2 with b a Gaussian bump
/// of height 0.5 and width 0.4. Paired with reverting_model() each player has a
/// contact interval on the inner flank of its own peak.
inline ObstacleProblem twin_bump_game() {
    ObstacleProblem p;
    const auto left = payoffs::gaussian_bump(0.5, {-0.6}, 0.4);
    const auto right = payoffs::gaussian_bump(0.5, {0.6}, 0.4);
    p.lower = payoffs::scaled(left, 1.0, -0.3);
    p.upper = payoffs::scaled(right, -1.0, 0.3);
    p.terminal = [left, right](std::span<const double> x) { return 0.5 * (left(1.0, x) - right(1.0, x)); };
    return p;
}

/// dX = -2 X dt + dW.
inline SdeModel reverting_model() { return models::ornstein_uhlenbeck(1, 2.0, 0.0, 1.0); }

}  // namespace dynkin::fixtures
