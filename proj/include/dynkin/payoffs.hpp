#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "dynkin/core.hpp"
#include "dynkin/obstacle.hpp"

// Built-in obstacle and payoff shapes. Each returns a SpaceTimeFn; terminal
// payoffs use the same shapes evaluated at t = T through `at_time`.
namespace dynkin::payoffs {

inline SpaceTimeFn constant(double c) {
    return [c](double, std::span<const double>) { return c; };
}

/// intercept + <slope, x> + time_slope * t
inline SpaceTimeFn affine(double intercept, std::vector<double> slope, double time_slope = 0.0) {
    return [=](double t, std::span<const double> x) {
        double acc = intercept + time_slope * t;
        for (std::size_t i = 0; i < slope.size() && i < x.size(); ++i) acc += slope[i] * x[i];
        return acc;
    };
}

/// max(K - x_coord, 0)
inline SpaceTimeFn put(double strike, std::size_t coord = 0) {
    return [=](double, std::span<const double> x) { return std::max(strike - x[coord], 0.0); };
}

/// max(x_coord - K, 0)
inline SpaceTimeFn call(double strike, std::size_t coord = 0) {
    return [=](double, std::span<const double> x) { return std::max(x[coord] - strike, 0.0); };
}

/// height * exp(-|x - center|^2 / (2 width^2))
inline SpaceTimeFn gaussian_bump(double height, std::vector<double> center, double width) {
    if (!(width > 0.0)) throw ArgumentError("gaussian_bump: width must be positive");
    return [=](double, std::span<const double> x) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double dx = x[i] - (i < center.size() ? center[i] : 0.0);
            r2 += dx * dx;
        }
        return height * std::exp(-r2 / (2.0 * width * width));
    };
}

/// min(|x - center|^2, cap)
inline SpaceTimeFn capped_quadratic(std::vector<double> center, double cap) {
    return [=](double, std::span<const double> x) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double dx = x[i] - (i < center.size() ? center[i] : 0.0);
            r2 += dx * dx;
        }
        return std::min(r2, cap);
    };
}

/// cos(frequency * x_coord + phase)
inline SpaceTimeFn cosine(double frequency, double phase = 0.0, std::size_t coord = 0) {
    return [=](double, std::span<const double> x) { return std::cos(frequency * x[coord] + phase); };
}

/// offset + scale * f
inline SpaceTimeFn scaled(SpaceTimeFn f, double scale, double offset) {
    if (scale == 1.0 && offset == 0.0) return f;
    return [=](double t, std::span<const double> x) { return offset + scale * f(t, x); };
}

inline SpaceTimeFn sum(std::vector<SpaceTimeFn> terms) {
    return [terms = std::move(terms)](double t, std::span<const double> x) {
        double acc = 0.0;
        for (const auto& f : terms) acc += f(t, x);
        return acc;
    };
}

/// Values on a tensor grid with arbitrary increasing nodes per axis, interpolated
/// multilinearly and held constant outside the grid.
class Tabulated {
public:
    Tabulated(std::vector<std::vector<double>> axes, std::vector<double> values)
        : axes_(std::move(axes)), values_(std::move(values)) {
        std::size_t total = 1;
        for (const auto& a : axes_) {
            if (a.size() < 2) throw ArgumentError("tabulated: every axis needs at least two nodes");
            for (std::size_t i = 1; i < a.size(); ++i) {
                if (!(a[i - 1] < a[i])) throw ArgumentError("tabulated: axis nodes must be increasing");
            }
            total *= a.size();
        }
        if (axes_.empty() || total != values_.size()) throw ArgumentError("tabulated: value count does not match axes");
    }

    double operator()(std::span<const double> x) const {
        const std::size_t d = axes_.size();
        std::vector<std::size_t> cell(d);
        std::vector<double> w(d);
        for (std::size_t i = 0; i < d; ++i) {
            const auto& a = axes_[i];
            const double xi = std::clamp(x[i], a.front(), a.back());
            std::size_t c = static_cast<std::size_t>(std::upper_bound(a.begin(), a.end(), xi) - a.begin());
            c = std::clamp<std::size_t>(c, 1, a.size() - 1) - 1;
            cell[i] = c;
            w[i] = (xi - a[c]) / (a[c + 1] - a[c]);
        }
        double acc = 0.0;
        for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
            double weight = 1.0;
            std::size_t flat = 0;
            for (std::size_t i = 0; i < d; ++i) {
                const bool up = (corner >> i) & 1U;
                weight *= up ? w[i] : 1.0 - w[i];
                flat = flat * axes_[i].size() + cell[i] + (up ? 1 : 0);
            }
            if (weight != 0.0) acc += weight * values_[flat];
        }
        return acc;
    }

private:
    std::vector<std::vector<double>> axes_;
    std::vector<double> values_;
};

inline SpaceTimeFn tabulated(std::vector<std::vector<double>> axes, std::vector<double> values) {
    auto table = std::make_shared<const Tabulated>(std::move(axes), std::move(values));
    return [table](double, std::span<const double> x) { return (*table)(x); };
}

/// Freezes the time argument, turning an obstacle shape into a terminal payoff.
inline SpaceFn at_time(SpaceTimeFn f, double t) {
    return [f = std::move(f), t](std::span<const double> x) { return f(t, x); };
}

}  // namespace dynkin::payoffs
