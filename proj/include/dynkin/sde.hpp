#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynkin/core.hpp"

namespace dynkin {

/// Coefficient callback: writes b(t,x) (length d) or sigma(t,x) (row-major d x d') into `out`.
using CoefficientFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

/// Diffusion dX = b(t,X) dt + sigma(t,X) dW with X in R^d and W in R^{d'}.
///
/// Both callbacks must be safe to call concurrently; the library never mutates
/// a model after construction.
struct SdeModel {
    std::string name = "custom";
    std::size_t dim = 1;
    std::size_t noise_dim = 1;
    CoefficientFn drift;
    CoefficientFn diffusion;
    std::optional<double> growth_bound;

    void drift_at(double t, std::span<const double> x, std::span<double> out) const { drift(t, x, out); }
    void diffusion_at(double t, std::span<const double> x, std::span<double> out) const { diffusion(t, x, out); }

    Matrix diffusion_matrix(double t, std::span<const double> x) const {
        Matrix m(dim, noise_dim);
        diffusion(t, x, m.data);
        return m;
    }
    std::vector<double> drift_vector(double t, std::span<const double> x) const {
        std::vector<double> b(dim);
        drift(t, x, b);
        return b;
    }
};

namespace models {

/// Scalar model from b(t,x) and sigma(t,x).
inline SdeModel scalar(std::string name, std::function<double(double, double)> b,
                       std::function<double(double, double)> s) {
    SdeModel m;
    m.name = std::move(name);
    m.drift = [b](double t, std::span<const double> x, std::span<double> out) { out[0] = b(t, x[0]); };
    m.diffusion = [s](double t, std::span<const double> x, std::span<double> out) { out[0] = s(t, x[0]); };
    return m;
}

/// mu dt + sigma dW in d dimensions with isotropic noise.
inline SdeModel brownian(std::size_t dim = 1, double sigma = 1.0, std::vector<double> mu = {}) {
    if (mu.empty()) mu.assign(dim, 0.0);
    if (mu.size() != dim) throw ArgumentError("brownian: drift vector has wrong length");
    SdeModel m;
    m.name = "brownian";
    m.dim = dim;
    m.noise_dim = dim;
    m.drift = [mu](double, std::span<const double>, std::span<double> out) {
        std::copy(mu.begin(), mu.end(), out.begin());
    };
    m.diffusion = [dim, sigma](double, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < dim; ++i) out[i * dim + i] = sigma;
    };
    return m;
}

/// Ornstein-Uhlenbeck: theta (mean - x) dt + sigma dW, componentwise.
inline SdeModel ornstein_uhlenbeck(std::size_t dim, double theta, double mean, double sigma) {
    SdeModel m;
    m.name = "ou";
    m.dim = dim;
    m.noise_dim = dim;
    m.drift = [theta, mean](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = theta * (mean - x[i]);
    };
    m.diffusion = [dim, sigma](double, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < dim; ++i) out[i * dim + i] = sigma;
    };
    return m;
}

/// Geometric Brownian motion, independent per coordinate: mu x dt + sigma x dW.
inline SdeModel gbm(std::size_t dim, double mu, double sigma) {
    SdeModel m;
    m.name = "gbm";
    m.dim = dim;
    m.noise_dim = dim;
    m.drift = [mu](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = mu * x[i];
    };
    m.diffusion = [dim, sigma](double, std::span<const double> x, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < dim; ++i) out[i * dim + i] = sigma * x[i];
    };
    return m;
}

/// Diagonal model with per-axis polynomial coefficients in x_i:
/// b_i = sum_k drift[i][k] x_i^k, sigma_ii = sum_k diffusion[i][k] x_i^k.
inline SdeModel polynomial(std::vector<std::vector<double>> drift, std::vector<std::vector<double>> diffusion) {
    if (drift.empty() || drift.size() != diffusion.size()) {
        throw ArgumentError("polynomial model: drift and diffusion tables need one row per axis");
    }
    const std::size_t dim = drift.size();
    auto horner = [](const std::vector<double>& c, double x) {
        double acc = 0.0;
        for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
        return acc;
    };
    SdeModel m;
    m.name = "custom";
    m.dim = dim;
    m.noise_dim = dim;
    m.drift = [drift, horner](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = horner(drift[i], x[i]);
    };
    m.diffusion = [diffusion, horner, dim](double, std::span<const double> x, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < dim; ++i) out[i * dim + i] = horner(diffusion[i], x[i]);
    };
    return m;
}

}  // namespace models

/// Discretization s = t_0 < t_1 < ... < t_N = T of the time interval.
class TimeGrid {
public:
    TimeGrid() = default;

    static TimeGrid uniform(double s, double T, std::size_t n_steps) {
        if (n_steps == 0) throw ArgumentError("time grid needs at least one step");
        if (!(s < T)) throw ArgumentError("time grid needs s < T");
        TimeGrid g;
        g.nodes_.resize(n_steps + 1);
        const double dt = (T - s) / static_cast<double>(n_steps);
        for (std::size_t k = 0; k < n_steps; ++k) g.nodes_[k] = s + static_cast<double>(k) * dt;
        g.nodes_[n_steps] = T;
        g.uniform_ = true;
        return g;
    }

    static TimeGrid from_nodes(std::vector<double> nodes) {
        if (nodes.size() < 2) throw ArgumentError("time grid needs at least two nodes");
        for (std::size_t k = 1; k < nodes.size(); ++k) {
            if (!(nodes[k - 1] < nodes[k])) throw ArgumentError("time grid nodes must be strictly increasing");
        }
        TimeGrid g;
        g.nodes_ = std::move(nodes);
        g.uniform_ = false;
        return g;
    }

    double start() const { return nodes_.front(); }
    double horizon() const { return nodes_.back(); }
    std::size_t n_steps() const { return nodes_.size() - 1; }
    std::size_t size() const { return nodes_.size(); }
    bool is_uniform() const { return uniform_; }
    std::span<const double> nodes() const { return nodes_; }
    double operator[](std::size_t k) const { return nodes_[k]; }
    double dt(std::size_t k) const { return nodes_[k + 1] - nodes_[k]; }
    double max_dt() const {
        double m = 0.0;
        for (std::size_t k = 0; k + 1 < nodes_.size(); ++k) m = std::max(m, dt(k));
        return m;
    }

    /// Sub-grid t_{k0} < ... < t_N.
    TimeGrid tail(std::size_t k0) const {
        if (k0 + 1 >= nodes_.size()) throw ArgumentError("time grid tail is empty");
        TimeGrid g;
        g.nodes_.assign(nodes_.begin() + static_cast<std::ptrdiff_t>(k0), nodes_.end());
        g.uniform_ = uniform_;
        return g;
    }

    /// Largest k with t_k <= t (up to rounding); 0 for t below the grid.
    std::size_t index_at_or_before(double t) const {
        const double slack = 1e-12 * std::max(1.0, std::abs(horizon()));
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t + slack);
        if (it == nodes_.begin()) return 0;
        return static_cast<std::size_t>(it - nodes_.begin()) - 1;
    }

    /// Smallest k with t_k >= t (up to rounding); N for t past the horizon.
    std::size_t index_at_or_after(double t) const {
        const double slack = 1e-12 * std::max(1.0, std::abs(horizon()));
        auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - slack);
        if (it == nodes_.end()) return n_steps();
        return static_cast<std::size_t>(it - nodes_.begin());
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    std::vector<double> nodes_;
    bool uniform_ = true;
};

/// Seeded ensemble of Euler-Maruyama trajectories, states laid out [path][node][coordinate].
struct PathBundle {
    std::string model_name;
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::size_t dim = 0;
    std::uint64_t seed = 0;
    std::vector<double> states;

    std::size_t path_stride() const { return grid.size() * dim; }
    std::span<const double> path(std::size_t p) const {
        return std::span<const double>(states).subspan(p * path_stride(), path_stride());
    }
    double state(std::size_t p, std::size_t k, std::size_t i) const { return states[p * path_stride() + k * dim + i]; }
};

/// Scratch space reused across paths by one worker.
struct EulerWorkspace {
    std::vector<double> drift;
    std::vector<double> diffusion;
    std::vector<double> noise;

    explicit EulerWorkspace(const SdeModel& model)
        : drift(model.dim), diffusion(model.dim * model.noise_dim), noise(model.noise_dim) {}
};

namespace detail {

inline void require_finite(std::span<const double> values, const char* what, double t, std::span<const double> x) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw SimulationError(std::string("non-finite ") + what + " coefficient at " + format_point(t, x));
        }
    }
}

}  // namespace detail

/// Writes one trajectory of the Euler-Maruyama chain into `out` ((N+1) * d values).
///
/// The noise stream depends on (seed, path_index) only, so any partition of the
/// paths over workers reproduces the same bytes.
inline void simulate_path(const SdeModel& model, std::span<const double> x0, const TimeGrid& grid,
                          std::uint64_t seed, std::uint64_t path_index, std::span<double> out,
                          EulerWorkspace& ws) {
    const std::size_t d = model.dim;
    const std::size_t dn = model.noise_dim;
    std::mt19937_64 rng(derive_seed(seed, path_index));
    std::normal_distribution<double> normal(0.0, 1.0);

    std::copy(x0.begin(), x0.end(), out.begin());
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        const double t = grid[k];
        const double dt = grid.dt(k);
        const double sqrt_dt = std::sqrt(dt);
        std::span<const double> xk = out.subspan(k * d, d);
        std::span<double> xn = out.subspan((k + 1) * d, d);

        model.drift(t, xk, ws.drift);
        detail::require_finite(ws.drift, "drift", t, xk);
        model.diffusion(t, xk, ws.diffusion);
        detail::require_finite(ws.diffusion, "diffusion", t, xk);
        for (std::size_t j = 0; j < dn; ++j) ws.noise[j] = sqrt_dt * normal(rng);

        for (std::size_t i = 0; i < d; ++i) {
            double acc = xk[i] + ws.drift[i] * dt;
            for (std::size_t j = 0; j < dn; ++j) acc += ws.diffusion[i * dn + j] * ws.noise[j];
            xn[i] = acc;
        }
    }
}

/// Simulates `n_paths` trajectories started from (s, x) on `grid`.
inline PathBundle simulate_paths(const SdeModel& model, double s, std::span<const double> x, const TimeGrid& grid,
                                 std::size_t n_paths, std::uint64_t seed, std::size_t threads = 1) {
    if (n_paths == 0) throw ArgumentError("simulate_paths: n_paths must be positive");
    if (x.size() != model.dim) throw ArgumentError("simulate_paths: initial point has wrong dimension");
    if (grid.start() != s) throw ArgumentError("simulate_paths: grid must start at s");

    PathBundle bundle;
    bundle.model_name = model.name;
    bundle.grid = grid;
    bundle.n_paths = n_paths;
    bundle.dim = model.dim;
    bundle.seed = seed;
    bundle.states.resize(n_paths * bundle.path_stride());

    const std::size_t stride = bundle.path_stride();
    parallel_for(n_paths, threads, [&](std::size_t begin, std::size_t end) {
        EulerWorkspace ws(model);
        for (std::size_t p = begin; p < end; ++p) {
            simulate_path(model, x, grid, seed, p, std::span<double>(bundle.states).subspan(p * stride, stride), ws);
        }
    });
    return bundle;
}

/// Time window and state box sampled by verify_growth.
struct GrowthBox {
    Box space;
    double t_min = 0.0;
    double t_max = 1.0;
};

struct GrowthReport {
    double max_ratio = 0.0;
    double witness_t = 0.0;
    std::vector<double> witness;
    std::size_t n_samples = 0;
    bool passed = false;
};

/// Largest observed (|b| + |sigma|_F) / (C (1 + |x|)) over the box corners and
/// `n_samples` uniform draws. Passes iff the ratio never exceeds one.
inline GrowthReport verify_growth(const SdeModel& model, const GrowthBox& box, std::size_t n_samples,
                                  std::uint64_t seed) {
    if (!model.growth_bound) throw ArgumentError("verify_growth: model has no growth bound");
    box.space.validate(model.dim);
    const double C = *model.growth_bound;
    const std::size_t d = model.dim;

    std::vector<double> b(d), s(d * model.noise_dim), x(d);
    GrowthReport report;
    report.witness.assign(d, 0.0);
    report.max_ratio = -std::numeric_limits<double>::infinity();

    auto probe = [&](double t) {
        model.drift(t, x, b);
        model.diffusion(t, x, s);
        const double size = euclidean_norm(b) + euclidean_norm(s);
        const double ratio = C > 0.0 ? size / (C * (1.0 + euclidean_norm(x)))
                                     : (size > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        if (!std::isfinite(size)) throw SimulationError("non-finite coefficient at " + format_point(t, x));
        ++report.n_samples;
        if (ratio > report.max_ratio) {
            report.max_ratio = ratio;
            report.witness_t = t;
            report.witness = x;
        }
    };

    const std::size_t corners = d < 16 ? (std::size_t{1} << d) : 0;
    for (std::size_t c = 0; c < corners; ++c) {
        for (std::size_t i = 0; i < d; ++i) x[i] = (c >> i) & 1U ? box.space.hi[i] : box.space.lo[i];
        probe(box.t_min);
        probe(box.t_max);
    }
    std::mt19937_64 rng(derive_seed(seed, 0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double t = box.t_min + (box.t_max - box.t_min) * unit(rng);
        for (std::size_t i = 0; i < d; ++i) x[i] = box.space.lo[i] + (box.space.hi[i] - box.space.lo[i]) * unit(rng);
        probe(t);
    }
    report.passed = report.max_ratio <= 1.0;
    return report;
}

}  // namespace dynkin
