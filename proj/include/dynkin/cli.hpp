#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "dynkin/config.hpp"
#include "dynkin/game.hpp"
#include "dynkin/io.hpp"
#include "dynkin/martingale.hpp"
#include "dynkin/pde_solver.hpp"
#include "dynkin/sde.hpp"

// Command-line front end: solve, simulate, verify, bench, check-growth.
//
// Exit codes: 0 pass, 1 a check failed or a numerical routine gave up,
// 2 usage, config or invalid-data error.
namespace dynkin::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kPass = 0, kFail = 1, kUsage = 2 };

struct Context {
    RunConfig cfg;
    std::string hash;
    fs::path out_dir;
    std::size_t threads = 1;
    bool quiet = false;
    std::ostream* log = &std::cout;

    void say(const std::string& line) const {
        if (!quiet) *log << line << '\n';
    }
    fs::path file(const std::string& name) const { return out_dir / name; }
};

/// Loads a config; `threads` = 0 keeps the config's thread count.
inline Context load_context(const std::string& path, std::size_t threads = 0) {
    Context c;
    c.cfg = load_config(path);
    c.hash = io::sha256_hex(c.cfg.text);
    c.out_dir = c.cfg.output.dir;
    c.threads = threads > 0 ? threads : c.cfg.threads;
    return c;
}

/// Seed streams derived from the config seed, one per consumer.
enum SeedStream : std::uint64_t { kSimulate = 1, kAudit = 2, kOrdering = 3, kSuper = 4, kSub = 5, kGrowth = 6 };

inline std::uint64_t stream_seed(const Context& c, SeedStream s) { return derive_seed(c.cfg.seed, s); }

inline const ObstacleProblem& need_problem(const Context& c) {
    if (!c.cfg.has_problem) throw ConfigError("problem", "this command needs a problem section");
    return c.cfg.problem;
}

inline const GridSpec& need_grid(const Context& c) {
    if (!c.cfg.grid) throw ConfigError("grid", "this command needs a grid section");
    return *c.cfg.grid;
}

struct SolveResult {
    std::shared_ptr<const ObstacleProblem> problem;
    std::shared_ptr<const GridFunction> v;
    ComplementarityReport report;
    StoppingRegions regions;
    double eps_contact = 0.0;
};

inline SolveResult run_solver(const Context& c) {
    const auto& g = need_grid(c);
    SolveResult r;
    r.problem = std::make_shared<const ObstacleProblem>(need_problem(c));
    const auto tgrid = TimeGrid::uniform(0.0, r.problem->horizon, g.time_steps);
    SolverOptions opts = g.solver;
    opts.threads = c.threads;
    r.v = std::make_shared<const GridFunction>(solve(c.cfg.model, *r.problem, make_spatial_grid(g), tgrid, g.scheme, opts));
    r.eps_contact = g.contact_tolerance.value_or(default_contact_tolerance(opts, tgrid));
    r.report = complementarity_report(*r.v, c.cfg.model, *r.problem, opts.tol_pde, r.eps_contact);
    r.regions = extract_regions(*r.v, *r.problem, r.eps_contact);
    return r;
}

inline io::Json solve_json(const Context& c, const SolveResult& r) {
    const auto& g = *c.cfg.grid;
    io::Json axes = io::Json::array();
    for (const auto& a : g.axes) axes.push_back({{"lo", a.lo}, {"hi", a.hi}, {"nodes", a.n_nodes}});
    std::size_t upper = 0, lower = 0;
    for (auto b : r.regions.upper_mask) upper += b;
    for (auto b : r.regions.lower_mask) lower += b;
    return {{"command", "solve"},
            {"name", c.cfg.name},
            {"model", c.cfg.model.name},
            {"mode", r.problem->single_obstacle() ? "single" : "double"},
            {"scheme", to_string(g.scheme)},
            {"boundary", to_string(g.boundary)},
            {"axes", axes},
            {"time_steps", g.time_steps},
            {"complementarity", io::to_json(r.report)},
            {"upper_region_nodes", upper},
            {"lower_region_nodes", lower}};
}

inline void write_solve_artifacts(const Context& c, const SolveResult& r) {
    if (c.cfg.output.csv) {
        io::write_surface(c.file("surface.csv"), c.hash, *r.v, r.regions);
        io::write_region(c.file("upper_region.csv"), c.hash, *r.v, r.regions, true);
        io::write_region(c.file("lower_region.csv"), c.hash, *r.v, r.regions, false);
    }
    if (c.cfg.output.json) io::write_json(c.file("solve_report.json"), c.hash, solve_json(c, r));
}

inline int cmd_solve(const Context& c) {
    const auto r = run_solver(c);
    write_solve_artifacts(c, r);
    c.say("solve: complementarity " + std::string(r.report.clean() ? "clean" : "VIOLATED") +
          ", max interior residual " + io::fmt(r.report.max_interior_residual));
    return r.report.clean() ? kPass : kFail;
}

inline int cmd_simulate(const Context& c) {
    if (!c.cfg.simulate) throw ConfigError("simulate", "this command needs a simulate section");
    const auto& s = *c.cfg.simulate;
    const auto tgrid = TimeGrid::uniform(s.start.t, s.horizon, s.time_steps);
    const auto bundle = simulate_paths(c.cfg.model, s.start.t, s.start.x, tgrid, s.paths, stream_seed(c, kSimulate), c.threads);
    if (c.cfg.output.csv) io::write_paths_csv(c.file("paths.csv"), c.hash, bundle);
    if (c.cfg.output.binary) io::write_paths_binary(c.file("paths.bin"), c.hash, bundle);
    io::Json mean = io::Json::array(), sd = io::Json::array();
    const std::size_t N = tgrid.n_steps();
    for (std::size_t i = 0; i < bundle.dim; ++i) {
        double m = 0.0, ss = 0.0;
        for (std::size_t p = 0; p < bundle.n_paths; ++p) m += bundle.state(p, N, i);
        m /= static_cast<double>(bundle.n_paths);
        for (std::size_t p = 0; p < bundle.n_paths; ++p) ss += (bundle.state(p, N, i) - m) * (bundle.state(p, N, i) - m);
        mean.push_back(m);
        sd.push_back(bundle.n_paths > 1 ? std::sqrt(ss / static_cast<double>(bundle.n_paths - 1)) : 0.0);
    }
    if (c.cfg.output.json) {
        io::write_json(c.file("simulate.json"), c.hash,
                       {{"command", "simulate"},
                        {"name", c.cfg.name},
                        {"model", c.cfg.model.name},
                        {"n_paths", bundle.n_paths},
                        {"time_steps", N},
                        {"start", {{"t", s.start.t}, {"x", s.start.x}}},
                        {"horizon", s.horizon},
                        {"terminal_mean", mean},
                        {"terminal_std", sd}});
    }
    c.say("simulate: " + std::to_string(bundle.n_paths) + " paths, " + std::to_string(N) + " steps");
    return kPass;
}

inline TimeGrid audit_grid(const Context& c, double s, double T) {
    const std::size_t steps = c.cfg.mc.time_steps.value_or(need_grid(c).time_steps);
    return TimeGrid::uniform(s, T, steps);
}

inline MonteCarloConfig audit_mc(const Context& c, double T) {
    MonteCarloConfig mc;
    mc.n_paths = c.cfg.mc.paths;
    mc.seed = stream_seed(c, kAudit);
    mc.tgrid = audit_grid(c, c.cfg.audit->start.t, T);
    mc.threads = c.threads;
    return mc;
}

inline std::vector<Strategy> challenger_menu(const Context& c, const SolveResult& r) {
    std::vector<Strategy> menu;
    for (const auto& spec : c.cfg.audit->challengers) menu.push_back(make_strategy(spec, r.v, r.problem, r.eps_contact));
    return menu;
}

/// Hitting strategies plus the challenger menu, split by player, on a fresh ensemble.
inline OrderingReport run_ordering(const Context& c, const SolveResult& r, const std::vector<Strategy>& menu,
                                   MonteCarloConfig mc) {
    std::vector<Strategy> taus{hitting_strategy(r.regions, r.v, r.problem, Player::maximizer_tau)};
    std::vector<Strategy> rhos{hitting_strategy(r.regions, r.v, r.problem, Player::minimizer_rho)};
    for (const auto& s : menu) (s.player() == Player::maximizer_tau ? taus : rhos).push_back(s);
    mc.seed = stream_seed(c, kOrdering);
    const auto& start = c.cfg.audit->start;
    return ordering_check(c.cfg.model, *r.problem, start.t, start.x, taus, rhos, mc);
}

inline int cmd_verify(const Context& c) {
    if (!c.cfg.audit) throw ConfigError("audit", "verify needs an audit section");
    if (!c.cfg.martingale) throw ConfigError("martingale", "verify needs a martingale section");
    const auto& audit = *c.cfg.audit;
    const auto& mart = *c.cfg.martingale;

    const auto r = run_solver(c);
    write_solve_artifacts(c, r);
    const double T = r.problem->horizon;
    if (!(audit.start.t >= 0.0 && audit.start.t < T)) throw ConfigError("audit.start.t", "must lie in [0, horizon)");

    const auto mc = audit_mc(c, T);

    const auto menu = challenger_menu(c, r);
    const auto saddle = saddle_audit(c.cfg.model, r.problem, r.v, r.regions, audit.start.t, audit.start.x, menu, mc,
                                     audit.scheme_tolerance, c.cfg.mc.z_threshold, c.cfg.output.samples);

    const auto ordering = run_ordering(c, r, menu, mc);

    MartingaleCheckConfig mcfg;
    mcfg.n_paths = mart.paths;
    mcfg.n_start_times = mart.start_times;
    mcfg.tgrid = TimeGrid::uniform(0.0, T, mart.time_steps.value_or(need_grid(c).time_steps));
    mcfg.z_threshold = mart.z_threshold;
    mcfg.abs_tolerance = mart.abs_tolerance;
    mcfg.n_pointwise = mart.pointwise_samples;
    mcfg.threads = c.threads;
    mcfg.seed = stream_seed(c, kSuper);
    const auto super = check_supersolution(CandidateFunction::from_grid(r.v, CandidateRole::supersolution), c.cfg.model,
                                           *r.problem, mart.box, mcfg);
    mcfg.seed = stream_seed(c, kSub);
    const auto sub = check_subsolution(CandidateFunction::from_grid(r.v, CandidateRole::subsolution), c.cfg.model,
                                       *r.problem, mart.box, mcfg);

    const bool passed = r.report.clean() && saddle.passed && ordering.passed && super.passed && sub.passed;
    if (c.cfg.output.json) {
        io::write_json(c.file("audit.json"), c.hash, io::to_json(saddle));
        io::write_json(c.file("ordering.json"), c.hash, io::to_json(ordering));
        io::write_json(c.file("martingale.json"), c.hash,
                       {{"supersolution", io::to_json(super)}, {"subsolution", io::to_json(sub)}});
        io::write_json(c.file("summary.json"), c.hash,
                       {{"command", "verify"},
                        {"name", c.cfg.name},
                        {"passed", passed},
                        {"pde_value", saddle.pde_value},
                        {"game_estimate", saddle.saddle.mean},
                        {"game_std_error", saddle.saddle.std_error},
                        {"checks",
                         {{"complementarity", r.report.clean()},
                          {"saddle_audit", saddle.passed},
                          {"ordering", ordering.passed},
                          {"supersolution", super.passed},
                          {"subsolution", sub.passed}}}});
    }
    if (c.cfg.output.samples && c.cfg.output.csv) {
        io::CsvWriter csv(c.file("audit_samples.csv"), c.hash, {"path", "tau_time", "rho_time", "payoff"});
        for (std::size_t p = 0; p < saddle.saddle.samples.size(); ++p) {
            const auto& s = saddle.saddle.samples[p];
            csv.row({std::to_string(p), io::fmt(mc.tgrid[s.tau_index]), io::fmt(mc.tgrid[s.rho_index]), io::fmt(s.payoff)});
        }
    }
    auto mark = [](bool ok) { return ok ? std::string("pass") : std::string("FAIL"); };
    c.say("complementarity  " + mark(r.report.clean()));
    c.say("saddle audit     " + mark(saddle.passed) + "  J=" + io::fmt(saddle.saddle.mean) + " +- " +
          io::fmt(saddle.saddle.std_error) + "  v=" + io::fmt(saddle.pde_value));
    c.say("ordering         " + mark(ordering.passed));
    c.say("supersolution    " + mark(super.passed) + "  max z=" + io::fmt(super.violation_z_score));
    c.say("subsolution      " + mark(sub.passed) + "  max z=" + io::fmt(sub.violation_z_score));
    c.say(std::string("verify: ") + (passed ? "PASS" : "FAIL"));
    return passed ? kPass : kFail;
}

inline double oracle_value(const BenchSpec& b, const ObstacleProblem& p, double t, std::span<const double> x) {
    if (b.oracle == "heat_cosine") {
        return std::exp(-0.5 * b.sigma * b.sigma * b.frequency * b.frequency * (p.horizon - t)) * std::cos(b.frequency * x[0]);
    }
    // Zero dynamics with time-independent obstacles: the value is the median of (l, g, u).
    return std::min(p.upper_at(t, x), std::max(p.lower_at(t, x), p.terminal_at(x)));
}

inline int cmd_bench(const Context& c) {
    if (!c.cfg.bench) throw ConfigError("bench", "this command needs a bench section with an oracle");
    const auto& b = *c.cfg.bench;
    const auto& base = need_grid(c);
    const auto& p = need_problem(c);
    io::Json rows = io::Json::array();
    std::unique_ptr<io::CsvWriter> csv;
    if (c.cfg.output.csv) {
        csv = std::make_unique<io::CsvWriter>(c.file("bench.csv"), c.hash,
                                              std::vector<std::string>{"level", "nodes", "time_steps", "max_error",
                                                                       "runtime_seconds"});
    }
    bool monotone = true;
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < b.levels.size(); ++i) {
        std::vector<Axis> axes = base.axes;
        for (auto& a : axes) a.n_nodes = b.levels[i].nodes;
        const SpatialGrid grid(axes, base.boundary);
        const auto tgrid = TimeGrid::uniform(0.0, p.horizon, b.levels[i].time_steps);
        SolverOptions opts = base.solver;
        opts.threads = c.threads;
        const auto start = std::chrono::steady_clock::now();
        const auto v = solve(c.cfg.model, p, grid, tgrid, base.scheme, opts);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        double err = 0.0;
        std::vector<double> x(grid.dim());
        for (std::size_t k = 0; k < tgrid.size(); ++k) {
            for (std::size_t j = 0; j < grid.size(); ++j) {
                grid.coords(j, x);
                if (!grid.inside_margin(x, b.margin)) continue;
                err = std::max(err, std::abs(v.at_node(k, j) - oracle_value(b, p, tgrid[k], x)));
            }
        }
        monotone = monotone && err <= previous;
        previous = err;
        if (csv) {
            csv->row({std::to_string(i), std::to_string(b.levels[i].nodes), std::to_string(b.levels[i].time_steps),
                      io::fmt(err), io::fmt(seconds)});
        }
        rows.push_back({{"level", i}, {"nodes", b.levels[i].nodes}, {"time_steps", b.levels[i].time_steps}, {"max_error", err}});
        c.say("level " + std::to_string(i) + "  nodes " + std::to_string(b.levels[i].nodes) + "  max error " + io::fmt(err) +
              "  " + io::fmt(seconds) + " s");
    }
    if (c.cfg.output.json) {
        io::write_json(c.file("bench.json"), c.hash,
                       {{"command", "bench"}, {"oracle", b.oracle}, {"monotone", monotone}, {"levels", rows}});
    }
    return monotone ? kPass : kFail;
}

inline int cmd_check_growth(const Context& c) {
    if (!c.cfg.growth) throw ConfigError("growth", "this command needs a growth section");
    if (!c.cfg.model.growth_bound) throw ConfigError("model.growth_bound", "check-growth needs a declared growth bound");
    const auto& g = *c.cfg.growth;
    const auto r = verify_growth(c.cfg.model, {g.box, g.t_min, g.t_max}, g.samples, stream_seed(c, kGrowth));
    if (c.cfg.output.json) {
        io::Json body = io::to_json(r, *c.cfg.model.growth_bound);
        body["command"] = "check-growth";
        io::write_json(c.file("growth.json"), c.hash, body);
    }
    c.say("check-growth: max ratio " + io::fmt(r.max_ratio) + (r.passed ? " pass" : " FAIL"));
    return r.passed ? kPass : kFail;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Dynkin games and double-obstacle problems: solver, simulator and verification"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::size_t threads = 0;
    bool quiet = false;
    const std::vector<std::string> names{"solve", "simulate", "verify", "bench", "check-growth"};
    for (const auto& name : names) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "YAML run configuration")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
        sub->add_option("--threads", threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
        sub->add_flag("--quiet", quiet, "suppress the summary on stdout");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kPass : kUsage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        Context c = load_context(config_path, threads);
        if (!out_dir.empty()) c.out_dir = out_dir;
        c.quiet = quiet;
        c.log = &out;
        fs::create_directories(c.out_dir);
        if (command == "solve") return cmd_solve(c);
        if (command == "simulate") return cmd_simulate(c);
        if (command == "verify") return cmd_verify(c);
        if (command == "bench") return cmd_bench(c);
        return cmd_check_growth(c);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const CflError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ArgumentError& e) {
        err << "error: invalid input: " << e.what() << '\n';
        return kUsage;
    } catch (const ProblemError& e) {
        err << "error: invalid problem: " << e.what() << '\n';
        return kUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kFail;
    }
}

}  // namespace dynkin::cli
