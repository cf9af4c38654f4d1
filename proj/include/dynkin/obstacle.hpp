#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynkin/core.hpp"
#include "dynkin/sde.hpp"

namespace dynkin {

using SpaceTimeFn = std::function<double(double t, std::span<const double> x)>;
using SpaceFn = std::function<double(std::span<const double> x)>;

/// Game data: lower obstacle l, upper obstacle u, terminal payoff g on [0,T] x R^d.
///
/// An absent obstacle is the exact sentinel for -inf (lower) or +inf (upper).
/// Absent upper obstacle is the single-obstacle (optimal stopping) mode.
struct ObstacleProblem {
    double horizon = 1.0;
    std::size_t dim = 1;
    std::optional<SpaceTimeFn> lower;
    std::optional<SpaceTimeFn> upper;
    SpaceFn terminal;
    /// Declared (m, M) with m <= l, u, g <= M wherever finite.
    std::optional<std::pair<double, double>> bounds;

    bool single_obstacle() const { return !upper.has_value(); }
    bool has_lower() const { return lower.has_value(); }
    bool has_upper() const { return upper.has_value(); }

    double lower_at(double t, std::span<const double> x) const {
        return lower ? (*lower)(t, x) : -std::numeric_limits<double>::infinity();
    }
    double upper_at(double t, std::span<const double> x) const {
        return upper ? (*upper)(t, x) : std::numeric_limits<double>::infinity();
    }
    double terminal_at(std::span<const double> x) const { return terminal(x); }

    /// Throws ProblemError unless l <= u at (t, x), and l(T) <= g <= u(T) when t == T.
    void check_point(double t, std::span<const double> x) const {
        const double l = lower_at(t, x);
        const double u = upper_at(t, x);
        if (!(l <= u)) {
            throw ProblemError("obstacles out of order: l = " + std::to_string(l) + " > u = " + std::to_string(u) +
                               " at " + format_point(t, x));
        }
        if (t >= horizon) {
            const double g = terminal_at(x);
            if (!(l <= g && g <= u)) {
                throw ProblemError("terminal payoff g = " + std::to_string(g) + " outside [l(T), u(T)] at " +
                                   format_point(t, x));
            }
        }
    }

    /// Player-swapped game (g, l, u) -> (-g, -u, -l).
    ObstacleProblem swapped() const {
        ObstacleProblem p;
        p.horizon = horizon;
        p.dim = dim;
        if (upper) p.lower = [f = *upper](double t, std::span<const double> x) { return -f(t, x); };
        if (lower) p.upper = [f = *lower](double t, std::span<const double> x) { return -f(t, x); };
        p.terminal = [f = terminal](std::span<const double> x) { return -f(x); };
        if (bounds) p.bounds = std::make_pair(-bounds->second, -bounds->first);
        return p;
    }
};

struct BoundsReport {
    double observed_min = std::numeric_limits<double>::infinity();
    double observed_max = -std::numeric_limits<double>::infinity();
    bool passed = true;
    double witness_t = 0.0;
    std::vector<double> witness;
};

/// Samples l, u, g over [0,T] x box and checks them against the declared bounds.
inline BoundsReport verify_bounds(const ObstacleProblem& problem, const Box& box, std::size_t n_samples,
                                  std::uint64_t seed) {
    if (!problem.bounds) throw ArgumentError("verify_bounds: problem declares no bounds");
    box.validate(problem.dim);
    const auto [m, M] = *problem.bounds;
    BoundsReport report;
    std::mt19937_64 rng(derive_seed(seed, 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> x(problem.dim);
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double t = problem.horizon * unit(rng);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unit(rng);
        for (double value : {problem.lower_at(t, x), problem.upper_at(t, x), problem.terminal_at(x)}) {
            if (!std::isfinite(value)) continue;
            report.observed_min = std::min(report.observed_min, value);
            report.observed_max = std::max(report.observed_max, value);
            if ((value < m || value > M) && report.passed) {
                report.passed = false;
                report.witness_t = t;
                report.witness = x;
            }
        }
    }
    return report;
}

/// Arguments (v, v_t, grad v, hess v) of the Isaacs operator at one point.
struct JetPoint {
    double t = 0.0;
    std::vector<double> x;
    double v = 0.0;
    double v_t = 0.0;
    std::vector<double> grad;
    Matrix hess;

    std::size_t dim() const { return x.size(); }

    void validate() const {
        const std::size_t d = x.size();
        if (grad.size() != d || hess.rows != d || hess.cols != d) {
            throw ArgumentError("jet: gradient/hessian dimension does not match the point");
        }
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i + 1; j < d; ++j) {
                const double a = hess(i, j);
                const double b = hess(j, i);
                const double scale = std::max({std::abs(a), std::abs(b), 1.0});
                if (std::abs(a - b) > 1e-12 * scale) throw ArgumentError("jet: hessian is not symmetric");
            }
        }
    }
};

/// L_t v = <b, grad v> + 1/2 Tr(sigma sigma^T hess v).
inline double generator_apply(const SdeModel& model, const JetPoint& jet) {
    if (jet.dim() != model.dim) throw ArgumentError("generator_apply: jet dimension does not match model");
    jet.validate();
    const std::size_t d = model.dim;
    const std::size_t dn = model.noise_dim;
    std::vector<double> b(d), s(d * dn);
    model.drift(jet.t, jet.x, b);
    model.diffusion(jet.t, jet.x, s);

    double first = 0.0;
    for (std::size_t i = 0; i < d; ++i) first += b[i] * jet.grad[i];
    double second = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double a = 0.0;
            for (std::size_t k = 0; k < dn; ++k) a += s[i * dn + k] * s[j * dn + k];
            second += a * jet.hess(j, i);
        }
    }
    return first + 0.5 * second;
}

/// max{v - u, min{h, v - l}} with h = -v_t - L v.
/// Absent obstacles drop their term instead of going through infinities.
inline double isaacs_combine(double v, double lower, double upper, double linear_residual, bool has_lower = true,
                             bool has_upper = true) {
    double inner = has_lower ? std::min(linear_residual, v - lower) : linear_residual;
    // Adding +0 maps -0 to +0, so both forms agree bit for bit on ties.
    return (has_upper ? std::max(v - upper, inner) : inner) + 0.0;
}

/// min{v - l, max{h, v - u}}.
inline double isaacs_dual_combine(double v, double lower, double upper, double linear_residual,
                                  bool has_lower = true, bool has_upper = true) {
    double inner = has_upper ? std::max(linear_residual, v - upper) : linear_residual;
    return (has_lower ? std::min(v - lower, inner) : inner) + 0.0;
}

/// -v_t - L_t v at the jet.
inline double linear_residual(const SdeModel& model, const JetPoint& jet) {
    return -jet.v_t - generator_apply(model, jet);
}

/// F = max{v - u, min{-v_t - L_t v, v - l}} (max-min form).
inline double isaacs_residual(const SdeModel& model, const ObstacleProblem& problem, const JetPoint& jet) {
    if (!(jet.t < problem.horizon)) throw ArgumentError("isaacs_residual: requires t < T");
    const double h = linear_residual(model, jet);
    const double l = problem.has_lower() ? problem.lower_at(jet.t, jet.x) : 0.0;
    const double u = problem.has_upper() ? problem.upper_at(jet.t, jet.x) : 0.0;
    return isaacs_combine(jet.v, l, u, h, problem.has_lower(), problem.has_upper());
}

/// F = min{v - l, max{-v_t - L_t v, v - u}} (min-max form).
inline double isaacs_dual_residual(const SdeModel& model, const ObstacleProblem& problem, const JetPoint& jet) {
    if (!(jet.t < problem.horizon)) throw ArgumentError("isaacs_dual_residual: requires t < T");
    const double h = linear_residual(model, jet);
    const double l = problem.has_lower() ? problem.lower_at(jet.t, jet.x) : 0.0;
    const double u = problem.has_upper() ? problem.upper_at(jet.t, jet.x) : 0.0;
    return isaacs_dual_combine(jet.v, l, u, h, problem.has_lower(), problem.has_upper());
}

}  // namespace dynkin
