#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dynkin/core.hpp"
#include "dynkin/grid.hpp"
#include "dynkin/obstacle.hpp"
#include "dynkin/sde.hpp"

// Statistical falsification tests for stochastic semi-solutions.
//
// A supersolution must dominate l and g, and along the diffusion it must be a
// supermartingale from any stopping time tau1 until the first later entry into
// {v >= u}. The checker samples a finite family of (tau1, tau2) pairs and tests
// the averaged inequality E[v(tau2 ^ rho+) - v(tau1)] <= 0 with a one-sided z-test.
// Subsolutions mirror this with {v <= l} and a submartingale.
namespace dynkin {

enum class CandidateRole { supersolution, subsolution, none };

inline std::string to_string(CandidateRole r) {
    switch (r) {
        case CandidateRole::supersolution: return "supersolution";
        case CandidateRole::subsolution: return "subsolution";
        default: return "none";
    }
}

/// Continuous candidate v(t, x): a closed form or a GridFunction interpolant.
struct CandidateFunction {
    SpaceTimeFn evaluator;
    CandidateRole declared_role = CandidateRole::none;
    std::string label = "candidate";

    double operator()(double t, std::span<const double> x) const { return evaluator(t, x); }

    static CandidateFunction constant(double c, CandidateRole role) {
        return {[c](double, std::span<const double>) { return c; }, role, "constant(" + std::to_string(c) + ")"};
    }

    static CandidateFunction from_grid(std::shared_ptr<const GridFunction> v, CandidateRole role) {
        return {[v](double t, std::span<const double> x) { return (*v)(t, x); }, role, "grid_function"};
    }

    CandidateFunction negated(CandidateRole role) const {
        return {[f = evaluator](double t, std::span<const double> x) { return -f(t, x); }, role, "-" + label};
    }
};

/// Pointwise minimum (supersolutions) or maximum (subsolutions) of two candidates.
inline CandidateFunction lattice_combine(const CandidateFunction& a, const CandidateFunction& b, CandidateRole role) {
    if (role == CandidateRole::supersolution) {
        return {[f = a.evaluator, g = b.evaluator](double t, std::span<const double> x) { return std::min(f(t, x), g(t, x)); },
                role, "min(" + a.label + ", " + b.label + ")"};
    }
    return {[f = a.evaluator, g = b.evaluator](double t, std::span<const double> x) { return std::max(f(t, x), g(t, x)); },
            role, "max(" + a.label + ", " + b.label + ")"};
}

struct MartingaleCheckConfig {
    std::size_t n_paths = 100000;
    std::size_t n_start_times = 8;
    std::uint64_t seed = 0;
    /// Grid on [0, T]; starts and stopping times live on its nodes.
    TimeGrid tgrid;
    double z_threshold = 4.0;
    /// Allowance for discretization bias, subtracted before the z-test.
    double abs_tolerance = 0.0;
    std::size_t n_pointwise = 2000;
    std::size_t threads = 1;
};

enum class StartKind { deterministic, region_entry };

struct StartDiagnostics {
    double s = 0.0;
    std::vector<double> x;
    StartKind kind = StartKind::deterministic;
    std::size_t tau1_offset = 0;       // deterministic starts: steps after s
    std::vector<double> region_lo;     // region-entry starts: test rectangle
    std::vector<double> region_hi;
    std::size_t horizon_steps = 0;     // tau2 = tau1 + horizon_steps (capped at N)
    double mean_increment = 0.0;       // signed so that positive is a violation
    double std_error = 0.0;
    double z_score = 0.0;
    std::size_t vacuous_paths = 0;     // contact already at tau1
};

struct MartingaleTestReport {
    CandidateRole role = CandidateRole::none;
    std::string label;
    std::size_t n_start_times = 0;
    double worst_violation = 0.0;
    double violation_z_score = -std::numeric_limits<double>::infinity();
    double z_threshold = 4.0;
    bool pointwise_passed = true;
    std::string pointwise_message;
    double pointwise_witness_t = 0.0;
    std::vector<double> pointwise_witness;
    bool skipped = false;
    std::string skip_reason;
    bool passed = false;
    std::vector<StartDiagnostics> starts;
};

namespace detail {

inline double z_statistic(double mean, double se, double tol) {
    const double excess = mean - tol;
    if (se > 0.0) return excess / se;
    if (excess > 0.0) return std::numeric_limits<double>::infinity();
    return excess < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0;
}

inline MartingaleTestReport run_check(const CandidateFunction& cand, CandidateRole role, const SdeModel& model,
                                      const ObstacleProblem& problem, const Box& box,
                                      const MartingaleCheckConfig& cfg) {
    box.validate(model.dim);
    if (cfg.n_paths < 2) throw ArgumentError("martingale check needs at least two paths per start");
    if (cfg.n_start_times == 0) throw ArgumentError("martingale check needs at least one start");
    if (std::abs(cfg.tgrid.horizon() - problem.horizon) > 1e-12 * std::max(1.0, problem.horizon)) {
        throw ArgumentError("martingale check grid must end at the problem horizon");
    }
    const bool super = role == CandidateRole::supersolution;
    const std::size_t d = model.dim;
    const std::size_t N = cfg.tgrid.n_steps();

    MartingaleTestReport r;
    r.role = role;
    r.label = cand.label;
    r.z_threshold = cfg.z_threshold;
    r.n_start_times = cfg.n_start_times;

    // (i) obstacle and terminal domination on sampled points.
    {
        std::mt19937_64 rng(derive_seed(cfg.seed, 0xB0B));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<double> x(d);
        auto fail = [&](double t, const std::string& what) {
            r.pointwise_passed = false;
            r.pointwise_message = what;
            r.pointwise_witness_t = t;
            r.pointwise_witness = x;
        };
        for (std::size_t n = 0; n < cfg.n_pointwise && r.pointwise_passed; ++n) {
            const double t = n % 4 == 0 ? problem.horizon : problem.horizon * unit(rng);
            for (std::size_t i = 0; i < d; ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unit(rng);
            const double c = cand(t, x);
            if (super) {
                if (c < problem.lower_at(t, x) - cfg.abs_tolerance) fail(t, "candidate below the lower obstacle");
                else if (n % 4 == 0 && c < problem.terminal_at(x) - cfg.abs_tolerance) {
                    fail(t, "candidate below the terminal payoff");
                }
            } else {
                if (c > problem.upper_at(t, x) + cfg.abs_tolerance) fail(t, "candidate above the upper obstacle");
                else if (n % 4 == 0 && c > problem.terminal_at(x) + cfg.abs_tolerance) {
                    fail(t, "candidate above the terminal payoff");
                }
            }
        }
    }
    if (!r.pointwise_passed) {
        r.passed = false;
        return r;
    }

    // (ii) averaged martingale inequality from each sampled start.
    r.starts.resize(cfg.n_start_times);
    for (std::size_t i = 0; i < cfg.n_start_times; ++i) {
        StartDiagnostics& sd = r.starts[i];
        std::mt19937_64 rng(derive_seed(cfg.seed, 0x5EED0000ULL + i));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const std::size_t k0 = static_cast<std::size_t>(unit(rng) * static_cast<double>(N)) % N;
        sd.s = cfg.tgrid[k0];
        sd.x.resize(d);
        for (std::size_t j = 0; j < d; ++j) sd.x[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * unit(rng);
        const std::size_t remaining = N - k0;
        sd.kind = i % 2 == 0 ? StartKind::deterministic : StartKind::region_entry;
        if (sd.kind == StartKind::deterministic) {
            sd.tau1_offset = static_cast<std::size_t>(unit(rng) * static_cast<double>(remaining)) % remaining;
        } else {
            sd.region_lo.resize(d);
            sd.region_hi.resize(d);
            for (std::size_t j = 0; j < d; ++j) {
                const double a = box.lo[j] + (box.hi[j] - box.lo[j]) * unit(rng);
                const double b = box.lo[j] + (box.hi[j] - box.lo[j]) * unit(rng);
                sd.region_lo[j] = std::min(a, b);
                sd.region_hi[j] = std::max(a, b);
            }
        }
        sd.horizon_steps = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(remaining)) % remaining;

        const TimeGrid sub = cfg.tgrid.tail(k0);
        const std::size_t M = sub.n_steps();
        const std::size_t stride = sub.size() * d;
        const std::uint64_t start_seed = derive_seed(cfg.seed, i);
        std::vector<double> increments(cfg.n_paths);
        std::vector<unsigned char> vacuous(cfg.n_paths, 0);

        parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
            EulerWorkspace ws(model);
            std::vector<double> buffer(stride);
            for (std::size_t p = begin; p < end; ++p) {
                simulate_path(model, sd.x, sub, start_seed, p, buffer, ws);
                auto state = [&](std::size_t k) { return std::span<const double>(buffer).subspan(k * d, d); };
                std::size_t tau1 = M;
                if (sd.kind == StartKind::deterministic) {
                    tau1 = std::min(M, sd.tau1_offset);
                } else {
                    for (std::size_t k = 0; k <= M; ++k) {
                        const auto xk = state(k);
                        bool inside = true;
                        for (std::size_t j = 0; j < d; ++j) {
                            inside = inside && xk[j] >= sd.region_lo[j] && xk[j] <= sd.region_hi[j];
                        }
                        if (inside) {
                            tau1 = k;
                            break;
                        }
                    }
                }
                const std::size_t tau2 = std::min(M, tau1 + sd.horizon_steps);
                // First contact with the opposing region at or after tau1.
                std::size_t contact = tau2;
                for (std::size_t k = tau1; k <= tau2; ++k) {
                    const double t = sub[k];
                    const auto xk = state(k);
                    const double c = cand(t, xk);
                    const bool hit = super ? c >= problem.upper_at(t, xk) : c <= problem.lower_at(t, xk);
                    if (hit) {
                        contact = k;
                        break;
                    }
                }
                vacuous[p] = contact == tau1;
                const double start_value = cand(sub[tau1], state(tau1));
                const double end_value = cand(sub[contact], state(contact));
                increments[p] = super ? end_value - start_value : start_value - end_value;
            }
        });

        double sum = 0.0;
        for (double v : increments) sum += v;
        const double n = static_cast<double>(cfg.n_paths);
        sd.mean_increment = sum / n;
        double ss = 0.0;
        for (double v : increments) ss += (v - sd.mean_increment) * (v - sd.mean_increment);
        sd.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
        sd.z_score = z_statistic(sd.mean_increment, sd.std_error, cfg.abs_tolerance);
        sd.vacuous_paths = static_cast<std::size_t>(std::count(vacuous.begin(), vacuous.end(), 1));
        r.worst_violation = i == 0 ? sd.mean_increment : std::max(r.worst_violation, sd.mean_increment);
        r.violation_z_score = std::max(r.violation_z_score, sd.z_score);
    }
    r.passed = r.violation_z_score <= cfg.z_threshold;
    return r;
}

}  // namespace detail

/// Tests the supersolution property of `cand` for the game (l, u, g).
inline MartingaleTestReport check_supersolution(const CandidateFunction& cand, const SdeModel& model,
                                                const ObstacleProblem& problem, const Box& box,
                                                const MartingaleCheckConfig& cfg) {
    return detail::run_check(cand, CandidateRole::supersolution, model, problem, box, cfg);
}

/// Mirror image of check_supersolution: cand <= u, cand(T) <= g, submartingale until {cand <= l}.
inline MartingaleTestReport check_subsolution(const CandidateFunction& cand, const SdeModel& model,
                                              const ObstacleProblem& problem, const Box& box,
                                              const MartingaleCheckConfig& cfg) {
    return detail::run_check(cand, CandidateRole::subsolution, model, problem, box, cfg);
}

/// Checks both candidates in their common role, then their min (supersolutions)
/// or max (subsolutions). A failing input skips the combined test.
inline MartingaleTestReport lattice_check(const CandidateFunction& v1, const CandidateFunction& v2,
                                          CandidateRole role, const SdeModel& model, const ObstacleProblem& problem,
                                          const Box& box, const MartingaleCheckConfig& cfg) {
    if (role == CandidateRole::none) throw ArgumentError("lattice_check: role must be super- or subsolution");
    for (const auto* c : {&v1, &v2}) {
        const auto pre = detail::run_check(*c, role, model, problem, box, cfg);
        if (!pre.passed) {
            MartingaleTestReport r = pre;
            r.skipped = true;
            r.skip_reason = "precondition violated: " + c->label + " fails the " + to_string(role) + " check";
            r.passed = false;
            r.starts.clear();
            return r;
        }
    }
    return detail::run_check(lattice_combine(v1, v2, role), role, model, problem, box, cfg);
}

struct DominationReport {
    CandidateRole role = CandidateRole::none;
    bool passed = true;
    double worst_margin = std::numeric_limits<double>::infinity();  // min of (cand - v) or (v - cand)
    double witness_t = 0.0;
    std::vector<double> witness;
    std::size_t n_samples = 0;
    double tolerance = 0.0;
};

/// Samples time nodes of `v_pde` and points of `box`: supersolutions must satisfy
/// cand >= v - tol, subsolutions cand <= v + tol.
inline DominationReport domination_check(const CandidateFunction& cand, const GridFunction& v_pde, const Box& box,
                                         double tol, std::size_t n_samples = 4000, std::uint64_t seed = 0) {
    if (cand.declared_role == CandidateRole::none) throw ArgumentError("domination_check: candidate has no role");
    box.validate(v_pde.grid.dim());
    DominationReport r;
    r.role = cand.declared_role;
    r.tolerance = tol;
    std::mt19937_64 rng(derive_seed(seed, 0xD0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> x(box.dim());
    const std::size_t nt = v_pde.times.size();
    for (std::size_t n = 0; n < n_samples; ++n) {
        const std::size_t k = static_cast<std::size_t>(unit(rng) * static_cast<double>(nt)) % nt;
        const double t = v_pde.times[k];
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unit(rng);
        const double v = v_pde.interpolate(k, x);
        const double c = cand(t, x);
        const double margin = cand.declared_role == CandidateRole::supersolution ? c - v : v - c;
        ++r.n_samples;
        if (margin < r.worst_margin) {
            r.worst_margin = margin;
            r.witness_t = t;
            r.witness = x;
        }
    }
    r.passed = r.worst_margin >= -tol;
    return r;
}

}  // namespace dynkin
