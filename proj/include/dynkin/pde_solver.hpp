#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynkin/core.hpp"
#include "dynkin/grid.hpp"
#include "dynkin/obstacle.hpp"
#include "dynkin/sde.hpp"

namespace dynkin {

struct SolverOptions {
    double omega = 1.5;
    double psor_tol = 1e-9;
    std::size_t max_iter = 10000;
    /// Residual tolerance used by complementarity checks and the default contact width.
    double tol_pde = 1e-5;
    std::size_t threads = 1;
};

/// Default contact width for region extraction: 10 * tol_pde * dt.
inline double default_contact_tolerance(const SolverOptions& opts, const TimeGrid& tgrid) {
    return 10.0 * opts.tol_pde * tgrid.max_dt();
}

namespace detail {

/// Monotone discretization of L_t at one time level:
/// (L_h v)_j = sum_n c_jn (v_n - v_j), every c_jn >= 0.
/// Drift is upwinded; a_ii uses central differences and a_ij (i != j) the
/// seven-point stencil whose diagonal pair follows the sign of a_ij.
struct Stencil {
    std::vector<std::size_t> row_begin;  // size n+1
    std::vector<std::size_t> cols;
    std::vector<double> coefs;
    std::vector<double> total;           // sum of coefs in row j
    std::vector<unsigned char> fixed;    // Dirichlet boundary node

    std::size_t size() const { return total.size(); }
};

inline std::size_t neighbor(const SpatialGrid& g, std::size_t flat, std::size_t axis, int dir) {
    const std::size_t n = g.axis(axis).n_nodes;
    const std::size_t k = g.axis_index(flat, axis);
    std::size_t target;
    if (dir > 0) {
        target = k + 1 < n ? k + 1 : n - 2;  // mirror for Neumann
    } else {
        target = k > 0 ? k - 1 : 1;
    }
    return flat - k * g.stride(axis) + target * g.stride(axis);
}

inline void build_stencil(const SdeModel& model, const SpatialGrid& grid, double t, Stencil& st,
                          std::size_t threads) {
    const std::size_t n = grid.size();
    const std::size_t d = grid.dim();
    const std::size_t dn = model.noise_dim;
    const bool dirichlet = grid.boundary_policy() == BoundaryPolicy::dirichlet_from_payoff;
    // Max neighbours: 2d axis + 2 per pair of axes.
    const std::size_t width = 2 * d + d * (d - 1);

    st.row_begin.assign(n + 1, 0);
    st.cols.assign(n * width, 0);
    st.coefs.assign(n * width, 0.0);
    st.total.assign(n, 0.0);
    st.fixed.assign(n, 0);
    for (std::size_t j = 0; j <= n; ++j) st.row_begin[j] = j * width;

    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(d), b(d), s(d * dn), a(d * d);
        for (std::size_t j = begin; j < end; ++j) {
            const std::size_t base = j * width;
            if (dirichlet && grid.is_boundary(j)) {
                st.fixed[j] = 1;
                continue;
            }
            grid.coords(j, x);
            model.drift(t, x, b);
            model.diffusion(t, x, s);
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t k = 0; k < d; ++k) {
                    double acc = 0.0;
                    for (std::size_t m = 0; m < dn; ++m) acc += s[i * dn + m] * s[k * dn + m];
                    a[i * d + k] = acc;
                }
            }
            for (double v : b) {
                if (!std::isfinite(v)) throw SimulationError("non-finite drift at " + format_point(t, x));
            }
            for (double v : a) {
                if (!std::isfinite(v)) throw SimulationError("non-finite diffusion at " + format_point(t, x));
            }

            std::size_t slot = base;
            double total = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double h = grid.axis(i).step();
                double diffusive = 0.5 * a[i * d + i] / (h * h);
                for (std::size_t k = 0; k < d; ++k) {
                    if (k == i) continue;
                    diffusive -= 0.5 * std::abs(a[i * d + k]) / (h * grid.axis(k).step());
                }
                if (diffusive < -1e-14 * (1.0 + std::abs(a[i * d + i]) / (h * h))) {
                    throw ArgumentError("diffusion is not diagonally dominant on this grid (axis " +
                                        std::to_string(i) + ") at " + format_point(t, x) +
                                        "; the stencil would not be monotone");
                }
                diffusive = std::max(diffusive, 0.0);
                const double up = diffusive + std::max(b[i], 0.0) / h;
                const double down = diffusive + std::max(-b[i], 0.0) / h;
                st.cols[slot] = neighbor(grid, j, i, +1);
                st.coefs[slot++] = up;
                st.cols[slot] = neighbor(grid, j, i, -1);
                st.coefs[slot++] = down;
                total += up + down;
            }
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t k = i + 1; k < d; ++k) {
                    const double aik = a[i * d + k];
                    const double c = 0.5 * std::abs(aik) / (grid.axis(i).step() * grid.axis(k).step());
                    const int sk = aik >= 0.0 ? +1 : -1;
                    st.cols[slot] = neighbor(grid, neighbor(grid, j, i, +1), k, sk);
                    st.coefs[slot++] = c;
                    st.cols[slot] = neighbor(grid, neighbor(grid, j, i, -1), k, -sk);
                    st.coefs[slot++] = c;
                    total += 2.0 * c;
                }
            }
            st.total[j] = total;
        }
    });
}

/// Obstacle values at time t on every node; absent obstacles become infinities.
inline void fill_obstacles(const ObstacleProblem& problem, const SpatialGrid& grid, double t,
                           std::span<double> lower, std::span<double> upper, std::size_t threads) {
    parallel_for(grid.size(), threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(grid.dim());
        for (std::size_t j = begin; j < end; ++j) {
            grid.coords(j, x);
            problem.check_point(t, x);
            lower[j] = problem.lower_at(t, x);
            upper[j] = problem.upper_at(t, x);
        }
    });
}

/// min(u, max(l, w)); ordered obstacles make this the median of (l, w, u).
inline double project(double w, double lower, double upper) { return std::min(upper, std::max(lower, w)); }

}  // namespace detail

/// Largest explicit step keeping every node's update a convex combination.
inline double explicit_step_limit(const SdeModel& model, const SpatialGrid& grid, double t) {
    detail::Stencil st;
    detail::build_stencil(model, grid, t, st, 1);
    double worst = 0.0;
    for (double c : st.total) worst = std::max(worst, c);
    return worst > 0.0 ? 1.0 / worst : std::numeric_limits<double>::infinity();
}

/// Backward induction for the double-obstacle problem on a truncated box.
///
/// Each step solves the monotone linear update for -v_t - L_t v = 0 and
/// projects nodewise onto [l, u]; the implicit variant projects inside every
/// SOR sweep. Returns the whole space-time surface.
inline GridFunction solve(const SdeModel& model, const ObstacleProblem& problem, const SpatialGrid& grid,
                          const TimeGrid& tgrid, Scheme scheme, const SolverOptions& opts = {}) {
    if (grid.dim() != model.dim || problem.dim != model.dim) {
        throw ArgumentError("solve: grid, problem and model dimensions differ");
    }
    if (std::abs(tgrid.horizon() - problem.horizon) > 1e-12 * std::max(1.0, problem.horizon)) {
        throw ArgumentError("solve: time grid must end at the problem horizon");
    }
    if (scheme == Scheme::implicit_psor && !(opts.omega > 0.0 && opts.omega < 2.0)) {
        throw ArgumentError("solve: relaxation parameter must lie in (0, 2)");
    }

    const std::size_t n = grid.size();
    const std::size_t N = tgrid.n_steps();
    const std::size_t threads = std::max<std::size_t>(opts.threads, 1);
    GridFunction v(grid, tgrid, scheme);

    std::vector<double> lower(n), upper(n), boundary(n, 0.0);
    // Terminal slice and the fixed boundary values clamp(g, l, u).
    detail::fill_obstacles(problem, grid, tgrid.horizon(), lower, upper, threads);
    {
        std::vector<double> x(grid.dim());
        auto last = v.slice(N);
        for (std::size_t j = 0; j < n; ++j) {
            grid.coords(j, x);
            boundary[j] = problem.terminal_at(x);
            last[j] = detail::project(boundary[j], lower[j], upper[j]);
        }
    }

    // Red-black sweep order for PSOR.
    std::vector<std::size_t> order;
    if (scheme == Scheme::implicit_psor) {
        order.reserve(n);
        for (int color = 0; color < 2; ++color) {
            for (std::size_t j = 0; j < n; ++j) {
                std::size_t parity = 0;
                for (std::size_t i = 0; i < grid.dim(); ++i) parity += grid.axis_index(j, i);
                if (static_cast<int>(parity % 2) == color) order.push_back(j);
            }
        }
    }

    detail::Stencil st;
    for (std::size_t step = N; step-- > 0;) {
        const double t = tgrid[step];
        const double dt = tgrid.dt(step);
        detail::build_stencil(model, grid, t, st, threads);
        detail::fill_obstacles(problem, grid, t, lower, upper, threads);
        std::span<const double> next = v.slice(step + 1);
        std::span<double> cur = v.slice(step);

        if (scheme == Scheme::explicit_euler) {
            double worst = 0.0;
            for (double c : st.total) worst = std::max(worst, c);
            if (dt * worst > 1.0) {
                const double limit = 1.0 / worst;
                throw CflError("CFL condition violated: dt = " + std::to_string(dt) + " exceeds the monotone limit " +
                                   std::to_string(limit) + " at t = " + std::to_string(t),
                               dt, limit);
            }
            parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
                for (std::size_t j = begin; j < end; ++j) {
                    double w;
                    if (st.fixed[j]) {
                        w = boundary[j];
                    } else {
                        w = (1.0 - dt * st.total[j]) * next[j];
                        for (std::size_t s = st.row_begin[j]; s < st.row_begin[j + 1]; ++s) {
                            if (st.coefs[s] != 0.0) w += (dt * st.coefs[s]) * next[st.cols[s]];
                        }
                    }
                    cur[j] = detail::project(w, lower[j], upper[j]);
                }
            });
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                cur[j] = detail::project(st.fixed[j] ? boundary[j] : next[j], lower[j], upper[j]);
            }
            double change = std::numeric_limits<double>::infinity();
            std::size_t iter = 0;
            while (change > opts.psor_tol) {
                if (iter == opts.max_iter) {
                    throw ConvergenceError("projected SOR did not converge at t = " + std::to_string(t) +
                                               " (last max update " + std::to_string(change) + ")",
                                           change, iter);
                }
                change = 0.0;
                for (std::size_t j : order) {
                    if (st.fixed[j]) continue;
                    double rhs = next[j];
                    for (std::size_t s = st.row_begin[j]; s < st.row_begin[j + 1]; ++s) {
                        if (st.coefs[s] != 0.0) rhs += (dt * st.coefs[s]) * cur[st.cols[s]];
                    }
                    const double y = rhs / (1.0 + dt * st.total[j]);
                    const double updated = detail::project(cur[j] + opts.omega * (y - cur[j]), lower[j], upper[j]);
                    change = std::max(change, std::abs(updated - cur[j]));
                    cur[j] = updated;
                }
                ++iter;
            }
        }
    }
    return v;
}

struct ComplementarityReport {
    double max_interior_residual = 0.0;  // over continuation nodes
    std::size_t region_sign_violations = 0;
    std::size_t continuation_violations = 0;
    std::size_t n_checked = 0;
    double worst_violation = 0.0;
    std::size_t witness_time = 0;
    std::size_t witness_node = 0;
    double tol_pde = 0.0;
    double eps_contact = 0.0;

    bool clean() const { return region_sign_violations == 0 && continuation_violations == 0; }
};

/// Discrete -v_t - L_t v at (k, j), using the same time level for L as the scheme that produced v.
inline double discrete_linear_residual(const GridFunction& v, const detail::Stencil& st, std::size_t k,
                                       std::size_t j) {
    const double dt = v.times.dt(k);
    std::span<const double> level = v.scheme == Scheme::explicit_euler ? v.slice(k + 1) : v.slice(k);
    double lv = 0.0;
    for (std::size_t s = st.row_begin[j]; s < st.row_begin[j + 1]; ++s) {
        if (st.coefs[s] != 0.0) lv += st.coefs[s] * (level[st.cols[s]] - level[j]);
    }
    return (v.at_node(k, j) - v.at_node(k + 1, j)) / dt - lv;
}

/// Classifies each interior node below the horizon by contact state and checks
/// the sign of the discrete linear residual required there.
inline ComplementarityReport complementarity_report(const GridFunction& v, const SdeModel& model,
                                                    const ObstacleProblem& problem, double tol_pde,
                                                    std::optional<double> eps_contact = std::nullopt) {
    ComplementarityReport r;
    r.tol_pde = tol_pde;
    r.eps_contact = eps_contact.value_or(10.0 * tol_pde * v.times.max_dt());
    const SpatialGrid& grid = v.grid;
    const std::size_t n = grid.size();
    std::vector<double> lower(n), upper(n);
    detail::Stencil st;
    auto record = [&](double excess, std::size_t k, std::size_t j) {
        if (excess > r.worst_violation) {
            r.worst_violation = excess;
            r.witness_time = k;
            r.witness_node = j;
        }
    };
    for (std::size_t k = 0; k < v.times.n_steps(); ++k) {
        const double t = v.times[k];
        detail::build_stencil(model, grid, t, st, 1);
        detail::fill_obstacles(problem, grid, t, lower, upper, 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (grid.is_boundary(j)) continue;
            const double val = v.at_node(k, j);
            const bool at_lower = val <= lower[j] + r.eps_contact;
            const bool at_upper = val >= upper[j] - r.eps_contact;
            if (at_lower && at_upper) continue;
            const double res = discrete_linear_residual(v, st, k, j);
            ++r.n_checked;
            if (at_lower) {
                if (res < -tol_pde) {
                    ++r.region_sign_violations;
                    record(-res - tol_pde, k, j);
                }
            } else if (at_upper) {
                if (res > tol_pde) {
                    ++r.region_sign_violations;
                    record(res - tol_pde, k, j);
                }
            } else {
                r.max_interior_residual = std::max(r.max_interior_residual, std::abs(res));
                if (std::abs(res) > tol_pde) {
                    ++r.continuation_violations;
                    record(std::abs(res) - tol_pde, k, j);
                }
            }
        }
    }
    return r;
}

/// Contact sets {v >= u - eps} and {v <= l + eps} on every (time node, space node).
struct StoppingRegions {
    std::vector<unsigned char> upper_mask;
    std::vector<unsigned char> lower_mask;
    std::size_t n_times = 0;
    std::size_t n_space = 0;
    double tolerance = 0.0;

    bool upper(std::size_t k, std::size_t j) const { return upper_mask[k * n_space + j] != 0; }
    bool lower(std::size_t k, std::size_t j) const { return lower_mask[k * n_space + j] != 0; }
    bool upper_empty() const { return std::none_of(upper_mask.begin(), upper_mask.end(), [](auto b) { return b; }); }
    bool lower_empty() const { return std::none_of(lower_mask.begin(), lower_mask.end(), [](auto b) { return b; }); }
};

inline StoppingRegions extract_regions(const GridFunction& v, const ObstacleProblem& problem, double eps_contact) {
    StoppingRegions r;
    r.n_times = v.times.size();
    r.n_space = v.grid.size();
    r.tolerance = eps_contact;
    r.upper_mask.assign(r.n_times * r.n_space, 0);
    r.lower_mask.assign(r.n_times * r.n_space, 0);
    std::vector<double> x(v.grid.dim());
    for (std::size_t k = 0; k < r.n_times; ++k) {
        const double t = v.times[k];
        for (std::size_t j = 0; j < r.n_space; ++j) {
            v.grid.coords(j, x);
            const double val = v.at_node(k, j);
            const double l = problem.lower_at(t, x);
            const double u = problem.upper_at(t, x);
            const bool up = problem.has_upper() && val >= u - eps_contact;
            const bool lo = problem.has_lower() && val <= l + eps_contact;
            if (up && lo && u - l > 2.0 * eps_contact) {
                throw InternalError("stopping regions overlap at " + format_point(t, x) +
                                    " although u - l exceeds twice the contact tolerance");
            }
            r.upper_mask[k * r.n_space + j] = up;
            r.lower_mask[k * r.n_space + j] = lo;
        }
    }
    return r;
}

}  // namespace dynkin
