#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynkin/core.hpp"
#include "dynkin/grid.hpp"
#include "dynkin/obstacle.hpp"
#include "dynkin/pde_solver.hpp"
#include "dynkin/sde.hpp"

namespace dynkin {

/// rho belongs to the first player (pays, minimizes); tau to the second (receives, maximizes).
enum class Player { minimizer_rho, maximizer_tau };

enum class StrategyKind { hit_lower_region, hit_upper_region, fixed_time, threshold, never_stop, custom_mask };

enum class ThresholdSide { above, below };

inline std::string to_string(Player p) { return p == Player::minimizer_rho ? "minimizer" : "maximizer"; }

inline std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::hit_lower_region: return "hit_lower_region";
        case StrategyKind::hit_upper_region: return "hit_upper_region";
        case StrategyKind::fixed_time: return "fixed_time";
        case StrategyKind::threshold: return "threshold";
        case StrategyKind::never_stop: return "never_stop";
        case StrategyKind::custom_mask: return "custom_mask";
    }
    return "unknown";
}

/// Read-only view of one trajectory on its time grid.
struct PathView {
    const TimeGrid* grid = nullptr;
    std::span<const double> states;
    std::size_t dim = 1;

    std::size_t last() const { return grid->n_steps(); }
    double time(std::size_t k) const { return (*grid)[k]; }
    std::span<const double> state(std::size_t k) const { return states.subspan(k * dim, dim); }
};

/// First-entry stopping rule. Every built-in decides at node k from (t_k, X_k)
/// alone, so the rule never looks ahead along the path.
class Strategy {
public:
    static Strategy never_stop(Player p) { return Strategy(StrategyKind::never_stop, p); }

    /// First node with t_k >= t.
    static Strategy fixed_time(Player p, double t) {
        Strategy s(StrategyKind::fixed_time, p);
        s.time_ = t;
        return s;
    }

    /// First node where X_k[coord] crosses `level` on the given side.
    static Strategy threshold(Player p, std::size_t coord, double level, ThresholdSide side) {
        Strategy s(StrategyKind::threshold, p);
        s.coord_ = coord;
        s.level_ = level;
        s.side_ = side;
        return s;
    }

    /// First entry into the contact region of the player's obstacle, decided by
    /// comparing interpolated v with the obstacle itself. A positive `shift`
    /// widens the region: maximizer stops where v <= l + eps + shift, minimizer
    /// where v >= u - eps - shift.
    static Strategy hit_region(Player p, std::shared_ptr<const GridFunction> v,
                               std::shared_ptr<const ObstacleProblem> problem, double eps, double shift = 0.0) {
        Strategy s(p == Player::maximizer_tau ? StrategyKind::hit_lower_region : StrategyKind::hit_upper_region, p);
        s.value_ = std::move(v);
        s.problem_ = std::move(problem);
        s.eps_ = eps;
        s.shift_ = shift;
        return s;
    }

    /// Stops at the first node whose nearest grid node is flagged in `mask` ([time][space] of v's grids).
    /// Points outside the grid box never stop.
    static Strategy custom_mask(Player p, std::shared_ptr<const GridFunction> layout, std::vector<unsigned char> mask) {
        if (mask.size() != layout->values.size()) throw ArgumentError("custom_mask: mask size does not match grid");
        Strategy s(StrategyKind::custom_mask, p);
        s.value_ = std::move(layout);
        s.mask_ = std::make_shared<const std::vector<unsigned char>>(std::move(mask));
        return s;
    }

    StrategyKind kind() const { return kind_; }
    Player player() const { return player_; }
    double shift() const { return shift_; }

    Strategy with_player(Player p) const {
        Strategy s = *this;
        s.player_ = p;
        if (kind_ == StrategyKind::hit_lower_region || kind_ == StrategyKind::hit_upper_region) {
            s.kind_ = p == Player::maximizer_tau ? StrategyKind::hit_lower_region : StrategyKind::hit_upper_region;
        }
        return s;
    }

    std::string describe() const {
        std::string d = to_string(player_) + ":" + to_string(kind_);
        switch (kind_) {
            case StrategyKind::fixed_time: d += "(t=" + std::to_string(time_) + ")"; break;
            case StrategyKind::threshold:
                d += "(x" + std::to_string(coord_) + (side_ == ThresholdSide::above ? ">=" : "<=") +
                     std::to_string(level_) + ")";
                break;
            case StrategyKind::hit_lower_region:
            case StrategyKind::hit_upper_region:
                if (shift_ != 0.0) d += "(shift=" + std::to_string(shift_) + ")";
                break;
            default: break;
        }
        return d;
    }

    /// Stopping node index in [from, N]; N means "stop at the horizon".
    std::size_t stop_index(const PathView& path, std::size_t from = 0) const {
        const std::size_t N = path.last();
        switch (kind_) {
            case StrategyKind::never_stop: return N;
            case StrategyKind::fixed_time: return std::max(from, path.grid->index_at_or_after(time_));
            case StrategyKind::threshold:
                for (std::size_t k = from; k <= N; ++k) {
                    const double xk = path.state(k)[coord_];
                    if (side_ == ThresholdSide::above ? xk >= level_ : xk <= level_) return k;
                }
                return N;
            case StrategyKind::hit_lower_region:
            case StrategyKind::hit_upper_region: {
                const bool maximizer = kind_ == StrategyKind::hit_lower_region;
                if (maximizer ? !problem_->has_lower() : !problem_->has_upper()) return N;
                for (std::size_t k = from; k <= N; ++k) {
                    const double t = path.time(k);
                    const auto x = path.state(k);
                    const double val = (*value_)(t, x);
                    if (maximizer ? val <= problem_->lower_at(t, x) + eps_ + shift_
                                  : val >= problem_->upper_at(t, x) - eps_ - shift_) {
                        return k;
                    }
                }
                return N;
            }
            case StrategyKind::custom_mask:
                for (std::size_t k = from; k <= N; ++k) {
                    if (in_mask(path.time(k), path.state(k))) return k;
                }
                return N;
        }
        return N;
    }

private:
    Strategy(StrategyKind k, Player p) : kind_(k), player_(p) {}

    bool in_mask(double t, std::span<const double> x) const {
        const GridFunction& layout = *value_;
        const SpatialGrid& g = layout.grid;
        std::size_t flat = 0;
        for (std::size_t i = 0; i < g.dim(); ++i) {
            const Axis& a = g.axis(i);
            if (x[i] < a.lo || x[i] > a.hi) return false;
            const auto idx = static_cast<std::size_t>(std::lround((x[i] - a.lo) / a.step()));
            flat += std::min(idx, a.n_nodes - 1) * g.stride(i);
        }
        const std::size_t k = layout.times.index_at_or_before(t);
        return (*mask_)[k * g.size() + flat] != 0;
    }

    StrategyKind kind_;
    Player player_;
    double time_ = 0.0;
    std::size_t coord_ = 0;
    double level_ = 0.0;
    ThresholdSide side_ = ThresholdSide::above;
    std::shared_ptr<const GridFunction> value_;
    std::shared_ptr<const ObstacleProblem> problem_;
    std::shared_ptr<const std::vector<unsigned char>> mask_;
    double eps_ = 0.0;
    double shift_ = 0.0;
};

/// Realized payoff paid by the minimizer to the maximizer:
/// l at tau if tau < rho; u at rho if rho <= tau and rho < T; g(X_T) if both stop at T.
inline double payoff_on_path(const PathView& path, std::size_t tau_index, std::size_t rho_index,
                             const ObstacleProblem& problem) {
    const std::size_t N = path.last();
    if (tau_index > N || rho_index > N) throw ArgumentError("payoff_on_path: stopping index outside the grid");
    if (tau_index < rho_index) {
        if (!problem.has_lower()) throw InternalError("payoff_on_path: maximizer stopped early without a lower obstacle");
        return problem.lower_at(path.time(tau_index), path.state(tau_index));
    }
    if (rho_index < N) {
        if (!problem.has_upper()) {
            throw InternalError("payoff_on_path: minimizer stopped before T in single-obstacle mode");
        }
        return problem.upper_at(path.time(rho_index), path.state(rho_index));
    }
    return problem.terminal_at(path.state(N));
}

enum class Outcome : unsigned char { lower, upper, terminal };

inline Outcome classify_outcome(std::size_t tau_index, std::size_t rho_index, std::size_t N) {
    if (tau_index < rho_index) return Outcome::lower;
    if (rho_index < N) return Outcome::upper;
    return Outcome::terminal;
}

/// Optimal first-entry rule of one player built from the solved surface and its regions.
/// An empty contact mask yields never_stop.
inline Strategy hitting_strategy(const StoppingRegions& regions, std::shared_ptr<const GridFunction> v,
                                 std::shared_ptr<const ObstacleProblem> problem, Player side) {
    if (regions.n_times != v->times.size() || regions.n_space != v->grid.size()) {
        throw ArgumentError("hitting_strategy: regions were extracted from a different grid");
    }
    const bool empty = side == Player::maximizer_tau ? regions.lower_empty() : regions.upper_empty();
    if (empty) return Strategy::never_stop(side);
    return Strategy::hit_region(side, std::move(v), std::move(problem), regions.tolerance);
}

struct MonteCarloConfig {
    std::size_t n_paths = 10000;
    std::uint64_t seed = 0;
    TimeGrid tgrid;
    std::size_t threads = 1;
};

struct Breakdown {
    double lower = 0.0;
    double upper = 0.0;
    double terminal = 0.0;
};

struct PathSample {
    std::size_t tau_index;
    std::size_t rho_index;
    double payoff;
};

struct GameEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    Breakdown breakdown;
    double mean_tau_time = 0.0;
    double mean_rho_time = 0.0;
    std::vector<PathSample> samples;  // filled on request
};

/// Every strategy pair evaluated on one shared path ensemble (common random numbers).
struct PairEvaluation {
    std::vector<GameEstimate> estimates;
    std::vector<std::vector<double>> payoffs;  // [pair][path]
};

namespace detail {

inline GameEstimate summarize(std::span<const double> payoff, std::span<const std::size_t> taus,
                              std::span<const std::size_t> rhos, const TimeGrid& grid) {
    GameEstimate e;
    const std::size_t n = payoff.size();
    const std::size_t N = grid.n_steps();
    e.n_paths = n;
    double sum = 0.0;
    double tau_sum = 0.0;
    double rho_sum = 0.0;
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t p = 0; p < n; ++p) {
        sum += payoff[p];
        tau_sum += grid[taus[p]];
        rho_sum += grid[rhos[p]];
        ++counts[static_cast<int>(classify_outcome(taus[p], rhos[p], N))];
    }
    e.mean = sum / static_cast<double>(n);
    // Second-pass correction: constant samples give their value and a zero error exactly.
    double correction = 0.0;
    for (std::size_t p = 0; p < n; ++p) correction += payoff[p] - e.mean;
    e.mean += correction / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t p = 0; p < n; ++p) ss += (payoff[p] - e.mean) * (payoff[p] - e.mean);
    e.std_error = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n)) : 0.0;
    e.mean_tau_time = tau_sum / static_cast<double>(n);
    e.mean_rho_time = rho_sum / static_cast<double>(n);
    e.breakdown.lower = static_cast<double>(counts[0]) / static_cast<double>(n);
    e.breakdown.upper = static_cast<double>(counts[1]) / static_cast<double>(n);
    e.breakdown.terminal = static_cast<double>(counts[2]) / static_cast<double>(n);
    return e;
}

}  // namespace detail

/// Simulates one ensemble from (s, x) and evaluates J for each (tau, rho) pair of
/// strategy indices. Stop indices are computed once per strategy and path.
inline PairEvaluation evaluate_pairs(const SdeModel& model, const ObstacleProblem& problem, double s,
                                     std::span<const double> x, const std::vector<Strategy>& strategies,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                     const MonteCarloConfig& mc, bool keep_samples = false) {
    if (mc.n_paths == 0) throw ArgumentError("Monte Carlo needs at least one path");
    if (x.size() != model.dim) throw ArgumentError("start point has wrong dimension");
    if (mc.tgrid.start() != s) throw ArgumentError("Monte Carlo grid must start at s");
    if (std::abs(mc.tgrid.horizon() - problem.horizon) > 1e-12 * std::max(1.0, problem.horizon)) {
        throw ArgumentError("Monte Carlo grid must end at the problem horizon");
    }
    for (const auto& [ti, ri] : pairs) {
        if (ti >= strategies.size() || ri >= strategies.size()) throw ArgumentError("pair index out of range");
    }

    const std::size_t n = mc.n_paths;
    const std::size_t S = strategies.size();
    const std::size_t stride = mc.tgrid.size() * model.dim;
    std::vector<std::size_t> stops(S * n);
    PairEvaluation out;
    out.payoffs.assign(pairs.size(), std::vector<double>(n));

    parallel_for(n, mc.threads, [&](std::size_t begin, std::size_t end) {
        EulerWorkspace ws(model);
        std::vector<double> buffer(stride);
        for (std::size_t p = begin; p < end; ++p) {
            simulate_path(model, x, mc.tgrid, mc.seed, p, buffer, ws);
            PathView view{&mc.tgrid, buffer, model.dim};
            for (std::size_t i = 0; i < S; ++i) stops[i * n + p] = strategies[i].stop_index(view);
            for (std::size_t q = 0; q < pairs.size(); ++q) {
                const auto [ti, ri] = pairs[q];
                out.payoffs[q][p] = payoff_on_path(view, stops[ti * n + p], stops[ri * n + p], problem);
            }
        }
    });

    for (std::size_t q = 0; q < pairs.size(); ++q) {
        const auto [ti, ri] = pairs[q];
        std::span<const std::size_t> taus(stops.data() + ti * n, n);
        std::span<const std::size_t> rhos(stops.data() + ri * n, n);
        GameEstimate e = detail::summarize(out.payoffs[q], taus, rhos, mc.tgrid);
        if (keep_samples) {
            e.samples.resize(n);
            for (std::size_t p = 0; p < n; ++p) e.samples[p] = {taus[p], rhos[p], out.payoffs[q][p]};
        }
        out.estimates.push_back(std::move(e));
    }
    return out;
}

/// Sample mean of J(s, x, tau, rho) over a fresh ensemble.
inline GameEstimate estimate_value(const SdeModel& model, const ObstacleProblem& problem, double s,
                                   std::span<const double> x, const Strategy& tau, const Strategy& rho,
                                   const MonteCarloConfig& mc, bool keep_samples = false) {
    if (tau.player() != Player::maximizer_tau || rho.player() != Player::minimizer_rho) {
        throw ArgumentError("estimate_value: tau must belong to the maximizer and rho to the minimizer");
    }
    if (problem.single_obstacle() && rho.kind() != StrategyKind::never_stop && rho.kind() != StrategyKind::hit_upper_region) {
        throw ArgumentError("estimate_value: in single-obstacle mode the minimizer never stops before T");
    }
    auto eval = evaluate_pairs(model, problem, s, x, {tau, rho}, {{0, 1}}, mc, keep_samples);
    return std::move(eval.estimates.front());
}

/// Standard error of the paired difference a - b over a shared ensemble.
inline double paired_std_error(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (std::size_t p = 0; p < n; ++p) mean += a[p] - b[p];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const double d = a[p] - b[p] - mean;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

struct ChallengerResult {
    std::string description;
    Player player = Player::maximizer_tau;
    GameEstimate estimate;
    double improvement = 0.0;     // gain of the deviating player over the candidate saddle
    double improvement_se = 0.0;  // common-random-number standard error
    bool passed = true;
};

struct SaddleAuditReport {
    double s = 0.0;
    std::vector<double> x;
    double pde_value = 0.0;
    GameEstimate saddle;
    std::string tau_star;
    std::string rho_star;
    std::vector<ChallengerResult> challengers;
    double z = 3.0;
    double scheme_tolerance = 0.0;
    double value_gap = 0.0;
    bool value_check_passed = false;
    bool passed = false;
};

/// Tests whether the hitting times of the two contact regions form a saddle point
/// against a finite challenger menu, on one shared ensemble.
///
/// A maximizer challenger tau fails the audit if J(tau, rho*) exceeds J(tau*, rho*)
/// by more than z paired standard errors; a minimizer challenger symmetrically.
inline SaddleAuditReport saddle_audit(const SdeModel& model, std::shared_ptr<const ObstacleProblem> problem,
                                      std::shared_ptr<const GridFunction> v, const StoppingRegions& regions, double s,
                                      std::span<const double> x, const std::vector<Strategy>& menu,
                                      const MonteCarloConfig& mc, double scheme_tolerance, double z = 3.0,
                                      bool keep_samples = false) {
    SaddleAuditReport r;
    r.s = s;
    r.x.assign(x.begin(), x.end());
    r.z = z;
    r.scheme_tolerance = scheme_tolerance;
    r.pde_value = (*v)(s, x);

    std::vector<Strategy> strategies;
    strategies.push_back(hitting_strategy(regions, v, problem, Player::maximizer_tau));
    strategies.push_back(hitting_strategy(regions, v, problem, Player::minimizer_rho));
    r.tau_star = strategies[0].describe();
    r.rho_star = strategies[1].describe();
    std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}};
    for (std::size_t i = 0; i < menu.size(); ++i) {
        strategies.push_back(menu[i]);
        const std::size_t idx = strategies.size() - 1;
        if (menu[i].player() == Player::maximizer_tau) {
            pairs.emplace_back(idx, 1);
        } else {
            if (problem->single_obstacle() && menu[i].kind() != StrategyKind::never_stop) {
                throw ArgumentError("saddle_audit: minimizer challengers must be never_stop in single-obstacle mode");
            }
            pairs.emplace_back(0, idx);
        }
    }
    PairEvaluation eval = evaluate_pairs(model, *problem, s, x, strategies, pairs, mc, keep_samples);
    r.saddle = eval.estimates[0];

    r.passed = true;
    for (std::size_t i = 0; i < menu.size(); ++i) {
        ChallengerResult c;
        c.description = menu[i].describe();
        c.player = menu[i].player();
        c.estimate = eval.estimates[i + 1];
        const double diff = c.estimate.mean - r.saddle.mean;
        c.improvement = c.player == Player::maximizer_tau ? diff : -diff;
        c.improvement_se = paired_std_error(eval.payoffs[i + 1], eval.payoffs[0]);
        c.passed = c.improvement <= z * c.improvement_se + 1e-12;
        r.passed = r.passed && c.passed;
        r.challengers.push_back(std::move(c));
    }
    r.value_gap = std::abs(r.saddle.mean - r.pde_value);
    r.value_check_passed = r.value_gap <= z * r.saddle.std_error + scheme_tolerance;
    r.passed = r.passed && r.value_check_passed;
    return r;
}

struct OrderingReport {
    std::vector<std::vector<double>> matrix;  // [tau][rho]
    std::vector<std::vector<double>> std_errors;
    double lower_value = 0.0;  // max over tau of min over rho
    double upper_value = 0.0;  // min over rho of max over tau
    double sigma = 0.0;        // largest entry standard error
    bool passed = false;
};

/// Empirical lower and upper values over finite menus; passes iff
/// max-min <= min-max + 6 sigma.
inline OrderingReport ordering_check(const SdeModel& model, const ObstacleProblem& problem, double s,
                                     std::span<const double> x, const std::vector<Strategy>& tau_menu,
                                     const std::vector<Strategy>& rho_menu, const MonteCarloConfig& mc) {
    if (tau_menu.empty() || rho_menu.empty()) throw ArgumentError("ordering_check: menus must be non-empty");
    std::vector<Strategy> strategies(tau_menu.begin(), tau_menu.end());
    strategies.insert(strategies.end(), rho_menu.begin(), rho_menu.end());
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < tau_menu.size(); ++i) {
        for (std::size_t j = 0; j < rho_menu.size(); ++j) pairs.emplace_back(i, tau_menu.size() + j);
    }
    PairEvaluation eval = evaluate_pairs(model, problem, s, x, strategies, pairs, mc);
    OrderingReport r;
    r.matrix.assign(tau_menu.size(), std::vector<double>(rho_menu.size()));
    r.std_errors = r.matrix;
    for (std::size_t i = 0, q = 0; i < tau_menu.size(); ++i) {
        for (std::size_t j = 0; j < rho_menu.size(); ++j, ++q) {
            r.matrix[i][j] = eval.estimates[q].mean;
            r.std_errors[i][j] = eval.estimates[q].std_error;
            r.sigma = std::max(r.sigma, eval.estimates[q].std_error);
        }
    }
    r.lower_value = -std::numeric_limits<double>::infinity();
    for (const auto& row : r.matrix) r.lower_value = std::max(r.lower_value, *std::min_element(row.begin(), row.end()));
    r.upper_value = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < rho_menu.size(); ++j) {
        double col_max = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < tau_menu.size(); ++i) col_max = std::max(col_max, r.matrix[i][j]);
        r.upper_value = std::min(r.upper_value, col_max);
    }
    r.passed = r.lower_value <= r.upper_value + 6.0 * r.sigma;
    return r;
}

}  // namespace dynkin
