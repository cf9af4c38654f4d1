#pragma once

// Independent reference computations used only by the test suites.

#include <algorithm>
#include <cmath>
#include <vector>

namespace dynkin::oracles {

/// Undiscounted American put max(K - X, 0) on dX = mu X dt + sigma X dW,
/// priced on a Cox-Ross-Rubinstein tree.
struct BinomialPut {
    double price = 0.0;
    double expected_stop_time = 0.0;       // E[tau] of the tree's optimal exercise rule (T if never)
    std::vector<double> boundary;          // per step: largest exercised spot, or NaN if none
    std::vector<double> times;
};

inline BinomialPut binomial_american_put(double x0, double strike, double T, double mu, double sigma,
                                         std::size_t steps) {
    const double dt = T / static_cast<double>(steps);
    const double up = std::exp(sigma * std::sqrt(dt));
    const double down = 1.0 / up;
    const double p = (std::exp(mu * dt) - down) / (up - down);

    std::vector<double> value(steps + 1), stop(steps + 1);
    auto spot = [&](std::size_t step, std::size_t ups) {
        return x0 * std::pow(up, static_cast<double>(ups)) * std::pow(down, static_cast<double>(step - ups));
    };
    for (std::size_t i = 0; i <= steps; ++i) {
        value[i] = std::max(strike - spot(steps, i), 0.0);
        stop[i] = T;
    }
    BinomialPut out;
    out.boundary.assign(steps + 1, std::nan(""));
    out.times.resize(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) out.times[k] = k * dt;
    for (std::size_t i = 0; i <= steps; ++i) {
        if (strike - spot(steps, i) > 0.0) {
            const double s = spot(steps, i);
            if (std::isnan(out.boundary[steps]) || s > out.boundary[steps]) out.boundary[steps] = s;
        }
    }
    for (std::size_t step = steps; step-- > 0;) {
        for (std::size_t i = 0; i <= step; ++i) {
            const double cont = p * value[i + 1] + (1.0 - p) * value[i];
            const double cont_stop = p * stop[i + 1] + (1.0 - p) * stop[i];
            const double s = spot(step, i);
            const double exercise = std::max(strike - s, 0.0);
            if (exercise > 0.0 && exercise > cont + 1e-13) {
                value[i] = exercise;
                stop[i] = step * dt;
                if (std::isnan(out.boundary[step]) || s > out.boundary[step]) out.boundary[step] = s;
            } else {
                value[i] = cont;
                stop[i] = cont_stop;
            }
        }
    }
    out.price = value[0];
    out.expected_stop_time = stop[0];
    return out;
}

/// v(t, x) = exp(-sigma^2 w^2 (T - t) / 2) cos(w x) solves v_t + sigma^2/2 v_xx = 0 with v(T) = cos(w x).
inline double heat_cosine(double t, double x, double T, double sigma = 1.0, double w = 1.0) {
    return std::exp(-0.5 * sigma * sigma * w * w * (T - t)) * std::cos(w * x);
}

/// E[cos(x + sigma W_tau)] = exp(-sigma^2 tau / 2) cos(x): the Gaussian integral of the cosine.
inline double gaussian_cosine_mean(double x, double sigma, double tau) {
    return std::exp(-0.5 * sigma * sigma * tau) * std::cos(x);
}

/// Isaacs operator by explicit case analysis on where h = -v_t - L v falls
/// relative to [v - u, v - l]; valid for l <= u.
inline double isaacs_by_cases(double v, double l, double u, double h) {
    const double a = v - u;
    const double b = v - l;
    if (h < a) return a;
    if (h > b) return b;
    return h;
}

}  // namespace dynkin::oracles
