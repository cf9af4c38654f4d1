#pragma once

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dynkin/core.hpp"
#include "dynkin/game.hpp"
#include "dynkin/grid.hpp"
#include "dynkin/obstacle.hpp"
#include "dynkin/payoffs.hpp"
#include "dynkin/pde_solver.hpp"
#include "dynkin/sde.hpp"

// YAML run configuration. The grammar is documented in README.md.
namespace dynkin {

struct ConfigError : Error {
    ConfigError(const std::string& field, const std::string& what, int line = -1)
        : Error(line >= 0 ? "config error at line " + std::to_string(line + 1) + ", field '" + field + "': " + what
                          : "config error, field '" + field + "': " + what),
          field(field),
          line(line) {}
    std::string field;
    int line;
};

struct ModelSpec {
    std::string type;
    std::size_t dim = 1;
    double sigma = 1.0;
    std::vector<double> mu;
    double theta = 0.0;
    double mean = 0.0;
    std::vector<std::vector<double>> drift;
    std::vector<std::vector<double>> diffusion;
    std::optional<double> growth_bound;
};

struct StartPoint {
    double t = 0.0;
    std::vector<double> x;
};

struct StrategySpec {
    Player player = Player::maximizer_tau;
    std::string type;
    double time = 0.0;
    std::size_t coord = 0;
    double level = 0.0;
    ThresholdSide side = ThresholdSide::above;
    double shift = 0.0;
};

struct GridSpec {
    std::vector<Axis> axes;
    std::size_t time_steps = 0;
    Scheme scheme = Scheme::implicit_psor;
    BoundaryPolicy boundary = BoundaryPolicy::dirichlet_from_payoff;
    SolverOptions solver;
    std::optional<double> contact_tolerance;
};

struct McSpec {
    std::size_t paths = 10000;
    std::optional<std::size_t> time_steps;
    double z_threshold = 3.0;
};

struct AuditSpec {
    StartPoint start;
    double scheme_tolerance = 0.0;
    std::vector<StrategySpec> challengers;
};

struct MartingaleSpec {
    std::size_t paths = 100000;
    std::size_t start_times = 8;
    double z_threshold = 4.0;
    double abs_tolerance = 0.0;
    std::size_t pointwise_samples = 2000;
    std::optional<std::size_t> time_steps;
    Box box;
};

struct OutputSpec {
    std::string dir = "out";
    bool csv = true;
    bool json = true;
    bool binary = false;
    bool samples = false;
};

struct BenchLevel {
    std::size_t nodes = 0;
    std::size_t time_steps = 0;
};

struct BenchSpec {
    std::string oracle;
    double sigma = 1.0;
    double frequency = 1.0;
    double margin = 0.1;
    std::vector<BenchLevel> levels;
};

struct SimulateSpec {
    StartPoint start;
    std::size_t paths = 100;
    std::size_t time_steps = 100;
    double horizon = 1.0;
};

struct GrowthSpec {
    Box box;
    double t_min = 0.0;
    double t_max = 1.0;
    std::size_t samples = 10000;
};

struct RunConfig {
    std::string name;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    ModelSpec model_spec;
    SdeModel model;
    ObstacleProblem problem;
    bool has_problem = false;
    std::optional<GridSpec> grid;
    McSpec mc;
    std::optional<AuditSpec> audit;
    std::optional<MartingaleSpec> martingale;
    OutputSpec output;
    std::optional<BenchSpec> bench;
    std::optional<SimulateSpec> simulate;
    std::optional<GrowthSpec> growth;
    std::string text;  // raw config text, hashed into every artifact
};

namespace config_detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line; }

inline YAML::Node require(const YAML::Node& parent, const std::string& key, const std::string& path) {
    const YAML::Node n = parent[key];
    if (!n) throw ConfigError(path + "." + key, "required field is missing", line_of(parent));
    return n;
}

template <class T>
T as(const YAML::Node& n, const std::string& path) {
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(path, "has the wrong type", line_of(n));
    }
}

inline double number(const YAML::Node& n, const std::string& path) {
    const double v = as<double>(n, path);
    if (!std::isfinite(v)) throw ConfigError(path, "must be finite", line_of(n));
    return v;
}

inline double number_or(const YAML::Node& parent, const std::string& key, const std::string& path, double fallback) {
    const YAML::Node n = parent[key];
    return n ? number(n, path + "." + key) : fallback;
}

inline double positive(const YAML::Node& n, const std::string& path) {
    const double v = number(n, path);
    if (!(v > 0.0)) throw ConfigError(path, "must be positive", line_of(n));
    return v;
}

inline std::size_t count(const YAML::Node& n, const std::string& path) {
    const auto v = as<long long>(n, path);
    if (v <= 0) throw ConfigError(path, "must be a positive integer", line_of(n));
    return static_cast<std::size_t>(v);
}

inline std::size_t count_or(const YAML::Node& parent, const std::string& key, const std::string& path,
                            std::size_t fallback) {
    const YAML::Node n = parent[key];
    return n ? count(n, path + "." + key) : fallback;
}

inline std::vector<double> numbers(const YAML::Node& n, const std::string& path) {
    if (n.IsScalar()) return {number(n, path)};
    if (!n.IsSequence()) throw ConfigError(path, "must be a number or a list of numbers", line_of(n));
    std::vector<double> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(number(n[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline std::vector<std::vector<double>> table(const YAML::Node& n, const std::string& path) {
    if (!n.IsSequence()) throw ConfigError(path, "must be a list of lists", line_of(n));
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(numbers(n[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline void check_keys(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!n.IsMap()) throw ConfigError(path, "must be a mapping", line_of(n));
    for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(path + "." + key, "unknown field", line_of(kv.first));
    }
}

inline Box box(const YAML::Node& n, const std::string& path, std::size_t dim) {
    check_keys(n, path, {"lo", "hi"});
    Box b{numbers(require(n, "lo", path), path + ".lo"), numbers(require(n, "hi", path), path + ".hi")};
    if (b.lo.size() != dim || b.hi.size() != dim) {
        throw ConfigError(path, "box needs " + std::to_string(dim) + " coordinates", line_of(n));
    }
    for (std::size_t i = 0; i < dim; ++i) {
        if (!(b.lo[i] < b.hi[i])) throw ConfigError(path, "box needs lo < hi", line_of(n));
    }
    return b;
}

inline StartPoint start(const YAML::Node& n, const std::string& path, std::size_t dim) {
    check_keys(n, path, {"t", "x"});
    StartPoint s{number_or(n, "t", path, 0.0), numbers(require(n, "x", path), path + ".x")};
    if (s.x.size() != dim) throw ConfigError(path + ".x", "needs " + std::to_string(dim) + " coordinates", line_of(n));
    return s;
}

/// A payoff spec. `infinity` yields no function (an absent obstacle).
inline std::optional<SpaceTimeFn> payoff(const YAML::Node& n, const std::string& path, std::size_t dim) {
    if (!n.IsMap()) throw ConfigError(path, "payoff must be a mapping with a 'type'", line_of(n));
    const auto type = as<std::string>(require(n, "type", path), path + ".type");
    const double scale = number_or(n, "scale", path, 1.0);
    const double offset = number_or(n, "offset", path, 0.0);
    auto coord = [&]() {
        const std::size_t c = n["coord"] ? static_cast<std::size_t>(as<long long>(n["coord"], path + ".coord")) : 0;
        if (c >= dim) throw ConfigError(path + ".coord", "coordinate out of range", line_of(n));
        return c;
    };
    auto center = [&](const char* key) {
        auto c = n[key] ? numbers(n[key], path + "." + key) : std::vector<double>(dim, 0.0);
        if (c.size() != dim) throw ConfigError(path + "." + key, "needs " + std::to_string(dim) + " coordinates", line_of(n));
        return c;
    };
    SpaceTimeFn f;
    try {
        if (type == "infinity") {
            check_keys(n, path, {"type"});
            return std::nullopt;
        } else if (type == "constant") {
            check_keys(n, path, {"type", "value", "scale", "offset"});
            f = payoffs::constant(number(require(n, "value", path), path + ".value"));
        } else if (type == "affine") {
            check_keys(n, path, {"type", "intercept", "slope", "time_slope", "scale", "offset"});
            auto slope = n["slope"] ? numbers(n["slope"], path + ".slope") : std::vector<double>(dim, 0.0);
            if (slope.size() != dim) throw ConfigError(path + ".slope", "needs one entry per coordinate", line_of(n));
            f = payoffs::affine(number_or(n, "intercept", path, 0.0), slope, number_or(n, "time_slope", path, 0.0));
        } else if (type == "put" || type == "call") {
            check_keys(n, path, {"type", "strike", "coord", "scale", "offset"});
            const double k = number(require(n, "strike", path), path + ".strike");
            f = type == "put" ? payoffs::put(k, coord()) : payoffs::call(k, coord());
        } else if (type == "gaussian_bump") {
            check_keys(n, path, {"type", "height", "center", "width", "scale", "offset"});
            f = payoffs::gaussian_bump(number_or(n, "height", path, 1.0), center("center"),
                                       positive(require(n, "width", path), path + ".width"));
        } else if (type == "capped_quadratic") {
            check_keys(n, path, {"type", "center", "cap", "scale", "offset"});
            f = payoffs::capped_quadratic(center("center"), positive(require(n, "cap", path), path + ".cap"));
        } else if (type == "cosine") {
            check_keys(n, path, {"type", "frequency", "phase", "coord", "scale", "offset"});
            f = payoffs::cosine(number_or(n, "frequency", path, 1.0), number_or(n, "phase", path, 0.0), coord());
        } else if (type == "tabulated") {
            check_keys(n, path, {"type", "axes", "values", "scale", "offset"});
            auto axes = table(require(n, "axes", path), path + ".axes");
            if (axes.size() != dim) throw ConfigError(path + ".axes", "needs one axis per coordinate", line_of(n));
            f = payoffs::tabulated(std::move(axes), numbers(require(n, "values", path), path + ".values"));
        } else if (type == "sum") {
            check_keys(n, path, {"type", "terms", "scale", "offset"});
            const YAML::Node terms = require(n, "terms", path);
            if (!terms.IsSequence() || terms.size() == 0) {
                throw ConfigError(path + ".terms", "must be a non-empty list of payoffs", line_of(n));
            }
            std::vector<SpaceTimeFn> parts;
            for (std::size_t i = 0; i < terms.size(); ++i) {
                const std::string sub = path + ".terms[" + std::to_string(i) + "]";
                auto term = payoff(terms[i], sub, dim);
                if (!term) throw ConfigError(sub, "infinity cannot appear inside a sum", line_of(terms[i]));
                parts.push_back(std::move(*term));
            }
            f = payoffs::sum(std::move(parts));
        } else {
            throw ConfigError(path + ".type", "unknown payoff type '" + type + "'", line_of(n));
        }
    } catch (const ArgumentError& e) {
        throw ConfigError(path, e.what(), line_of(n));
    }
    return payoffs::scaled(std::move(f), scale, offset);
}

inline ModelSpec model_spec(const YAML::Node& n) {
    const std::string path = "model";
    check_keys(n, path, {"type", "dim", "sigma", "mu", "theta", "mean", "drift", "diffusion", "growth_bound"});
    ModelSpec m;
    m.type = as<std::string>(require(n, "type", path), path + ".type");
    m.dim = count_or(n, "dim", path, 1);
    if (m.dim > 3) throw ConfigError(path + ".dim", "at most 3 dimensions are supported", line_of(n));
    if (n["growth_bound"]) m.growth_bound = positive(n["growth_bound"], path + ".growth_bound");
    if (m.type == "brownian") {
        m.sigma = number_or(n, "sigma", path, 1.0);
        m.mu = n["mu"] ? numbers(n["mu"], path + ".mu") : std::vector<double>(m.dim, 0.0);
        if (m.mu.size() == 1 && m.dim > 1) m.mu.assign(m.dim, m.mu[0]);
        if (m.mu.size() != m.dim) throw ConfigError(path + ".mu", "needs one entry per coordinate", line_of(n));
    } else if (m.type == "ou") {
        m.theta = number(require(n, "theta", path), path + ".theta");
        m.mean = number_or(n, "mean", path, 0.0);
        m.sigma = number_or(n, "sigma", path, 1.0);
    } else if (m.type == "gbm") {
        m.mu = {number_or(n, "mu", path, 0.0)};
        m.sigma = number(require(n, "sigma", path), path + ".sigma");
    } else if (m.type == "polynomial") {
        m.drift = table(require(n, "drift", path), path + ".drift");
        m.diffusion = table(require(n, "diffusion", path), path + ".diffusion");
        if (m.drift.size() != m.diffusion.size() || m.drift.empty()) {
            throw ConfigError(path, "drift and diffusion need one coefficient row per axis", line_of(n));
        }
        m.dim = m.drift.size();
    } else {
        throw ConfigError(path + ".type", "unknown model '" + m.type + "' (brownian, ou, gbm, polynomial)", line_of(n));
    }
    return m;
}

inline SdeModel build_model(const ModelSpec& m) {
    SdeModel model;
    if (m.type == "brownian") model = models::brownian(m.dim, m.sigma, m.mu);
    else if (m.type == "ou") model = models::ornstein_uhlenbeck(m.dim, m.theta, m.mean, m.sigma);
    else if (m.type == "gbm") model = models::gbm(m.dim, m.mu[0], m.sigma);
    else model = models::polynomial(m.drift, m.diffusion);
    model.growth_bound = m.growth_bound;
    return model;
}

inline ObstacleProblem problem(const YAML::Node& n, std::size_t dim) {
    const std::string path = "problem";
    check_keys(n, path, {"horizon", "mode", "lower", "upper", "terminal", "bounds"});
    ObstacleProblem p;
    p.dim = dim;
    p.horizon = positive(require(n, "horizon", path), path + ".horizon");
    const std::string mode = n["mode"] ? as<std::string>(n["mode"], path + ".mode") : "double";
    if (mode != "single" && mode != "double") throw ConfigError(path + ".mode", "must be 'single' or 'double'", line_of(n));
    p.lower = payoff(require(n, "lower", path), path + ".lower", dim);
    if (n["upper"]) p.upper = payoff(n["upper"], path + ".upper", dim);
    if (mode == "single" && p.upper) {
        throw ConfigError(path + ".upper", "single-obstacle mode takes no upper obstacle (omit it or use infinity)",
                          line_of(n["upper"]));
    }
    if (mode == "double" && !p.upper) {
        throw ConfigError(path + ".upper", "double-obstacle mode needs a finite upper obstacle", line_of(n));
    }
    auto g = payoff(require(n, "terminal", path), path + ".terminal", dim);
    if (!g) throw ConfigError(path + ".terminal", "terminal payoff must be finite", line_of(n["terminal"]));
    p.terminal = payoffs::at_time(std::move(*g), p.horizon);
    if (n["bounds"]) {
        const auto b = numbers(n["bounds"], path + ".bounds");
        if (b.size() != 2 || !(b[0] <= b[1])) throw ConfigError(path + ".bounds", "must be [m, M] with m <= M", line_of(n));
        p.bounds = std::make_pair(b[0], b[1]);
    }
    return p;
}

inline GridSpec grid(const YAML::Node& n, std::size_t dim) {
    const std::string path = "grid";
    check_keys(n, path, {"axes", "time_steps", "scheme", "boundary", "omega", "psor_tol", "max_iter", "tol_pde",
                         "contact_tolerance"});
    GridSpec g;
    const YAML::Node axes = require(n, "axes", path);
    if (!axes.IsSequence() || axes.size() != dim) {
        throw ConfigError(path + ".axes", "needs one entry per coordinate", line_of(n));
    }
    for (std::size_t i = 0; i < axes.size(); ++i) {
        const std::string sub = path + ".axes[" + std::to_string(i) + "]";
        check_keys(axes[i], sub, {"lo", "hi", "nodes"});
        Axis a{number(require(axes[i], "lo", sub), sub + ".lo"), number(require(axes[i], "hi", sub), sub + ".hi"),
               count(require(axes[i], "nodes", sub), sub + ".nodes")};
        if (!(a.lo < a.hi)) throw ConfigError(sub, "needs lo < hi", line_of(axes[i]));
        if (a.n_nodes < 3) throw ConfigError(sub + ".nodes", "needs at least 3 nodes", line_of(axes[i]));
        g.axes.push_back(a);
    }
    g.time_steps = count(require(n, "time_steps", path), path + ".time_steps");
    const std::string scheme = n["scheme"] ? as<std::string>(n["scheme"], path + ".scheme") : "implicit_psor";
    if (scheme == "implicit_psor") g.scheme = Scheme::implicit_psor;
    else if (scheme == "explicit") g.scheme = Scheme::explicit_euler;
    else throw ConfigError(path + ".scheme", "must be 'implicit_psor' or 'explicit'", line_of(n));
    const std::string boundary = n["boundary"] ? as<std::string>(n["boundary"], path + ".boundary") : "dirichlet";
    if (boundary == "dirichlet") g.boundary = BoundaryPolicy::dirichlet_from_payoff;
    else if (boundary == "neumann") g.boundary = BoundaryPolicy::neumann_zero;
    else throw ConfigError(path + ".boundary", "must be 'dirichlet' or 'neumann'", line_of(n));
    g.solver.omega = number_or(n, "omega", path, g.solver.omega);
    if (!(g.solver.omega > 0.0 && g.solver.omega < 2.0)) throw ConfigError(path + ".omega", "must lie in (0, 2)", line_of(n));
    if (n["psor_tol"]) g.solver.psor_tol = positive(n["psor_tol"], path + ".psor_tol");
    g.solver.max_iter = count_or(n, "max_iter", path, g.solver.max_iter);
    if (n["tol_pde"]) g.solver.tol_pde = positive(n["tol_pde"], path + ".tol_pde");
    if (n["contact_tolerance"]) g.contact_tolerance = positive(n["contact_tolerance"], path + ".contact_tolerance");
    return g;
}

inline StrategySpec strategy(const YAML::Node& n, const std::string& path) {
    check_keys(n, path, {"player", "type", "t", "coord", "level", "side", "shift"});
    StrategySpec s;
    const auto player = as<std::string>(require(n, "player", path), path + ".player");
    if (player == "maximizer") s.player = Player::maximizer_tau;
    else if (player == "minimizer") s.player = Player::minimizer_rho;
    else throw ConfigError(path + ".player", "must be 'maximizer' or 'minimizer'", line_of(n));
    s.type = as<std::string>(require(n, "type", path), path + ".type");
    if (s.type == "fixed_time") {
        s.time = number(require(n, "t", path), path + ".t");
    } else if (s.type == "threshold") {
        s.coord = n["coord"] ? static_cast<std::size_t>(as<long long>(n["coord"], path + ".coord")) : 0;
        s.level = number(require(n, "level", path), path + ".level");
        const auto side = as<std::string>(require(n, "side", path), path + ".side");
        if (side == "above") s.side = ThresholdSide::above;
        else if (side == "below") s.side = ThresholdSide::below;
        else throw ConfigError(path + ".side", "must be 'above' or 'below'", line_of(n));
    } else if (s.type == "hit_region") {
        s.shift = number_or(n, "shift", path, 0.0);
    } else if (s.type != "never_stop") {
        throw ConfigError(path + ".type", "unknown strategy '" + s.type + "' (fixed_time, threshold, hit_region, never_stop)",
                          line_of(n));
    }
    return s;
}

}  // namespace config_detail

/// Parses and validates a run configuration from YAML text.
inline RunConfig parse_config(const std::string& text) {
    using namespace config_detail;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("<document>", e.msg, e.mark.line);
    }
    if (!root || !root.IsMap()) throw ConfigError("<document>", "top level must be a mapping");
    check_keys(root, "<document>", {"name", "seed", "threads", "model", "problem", "grid", "mc", "audit",
                                    "martingale", "output", "bench", "simulate", "growth"});
    RunConfig c;
    c.text = text;
    if (root["name"]) c.name = as<std::string>(root["name"], "name");
    const YAML::Node seed = root["seed"];
    if (!seed) throw ConfigError("seed", "required field is missing (runs are never seeded from the clock)");
    try {
        c.seed = seed.as<std::uint64_t>();
    } catch (const YAML::Exception&) {
        throw ConfigError("seed", "must be a non-negative integer", line_of(seed));
    }
    c.threads = count_or(root, "threads", "", 1);

    c.model_spec = model_spec(require(root, "model", ""));
    try {
        c.model = build_model(c.model_spec);
    } catch (const ArgumentError& e) {
        throw ConfigError("model", e.what(), line_of(root["model"]));
    }
    const std::size_t d = c.model.dim;

    if (root["problem"]) {
        c.problem = problem(root["problem"], d);
        c.has_problem = true;
    }
    if (root["grid"]) c.grid = grid(root["grid"], d);

    if (const YAML::Node mc = root["mc"]) {
        check_keys(mc, "mc", {"paths", "time_steps", "z_threshold"});
        c.mc.paths = count_or(mc, "paths", "mc", c.mc.paths);
        if (mc["time_steps"]) c.mc.time_steps = count(mc["time_steps"], "mc.time_steps");
        if (mc["z_threshold"]) c.mc.z_threshold = positive(mc["z_threshold"], "mc.z_threshold");
    }
    if (const YAML::Node a = root["audit"]) {
        check_keys(a, "audit", {"start", "scheme_tolerance", "challengers"});
        AuditSpec spec;
        spec.start = start(require(a, "start", "audit"), "audit.start", d);
        spec.scheme_tolerance = number_or(a, "scheme_tolerance", "audit", 0.0);
        if (spec.scheme_tolerance < 0.0) throw ConfigError("audit.scheme_tolerance", "must be non-negative", line_of(a));
        if (const YAML::Node ch = a["challengers"]) {
            if (!ch.IsSequence()) throw ConfigError("audit.challengers", "must be a list", line_of(ch));
            for (std::size_t i = 0; i < ch.size(); ++i) {
                spec.challengers.push_back(strategy(ch[i], "audit.challengers[" + std::to_string(i) + "]"));
                if (spec.challengers.back().coord >= d) {
                    throw ConfigError("audit.challengers[" + std::to_string(i) + "].coord", "coordinate out of range",
                                      line_of(ch[i]));
                }
            }
        }
        c.audit = spec;
    }
    if (const YAML::Node m = root["martingale"]) {
        check_keys(m, "martingale", {"paths", "start_times", "z_threshold", "abs_tolerance", "pointwise_samples",
                                     "time_steps", "box"});
        MartingaleSpec spec;
        spec.paths = count_or(m, "paths", "martingale", spec.paths);
        if (spec.paths < 2) throw ConfigError("martingale.paths", "needs at least 2 paths", line_of(m));
        spec.start_times = count_or(m, "start_times", "martingale", spec.start_times);
        if (m["z_threshold"]) spec.z_threshold = positive(m["z_threshold"], "martingale.z_threshold");
        spec.abs_tolerance = number_or(m, "abs_tolerance", "martingale", 0.0);
        if (spec.abs_tolerance < 0.0) throw ConfigError("martingale.abs_tolerance", "must be non-negative", line_of(m));
        spec.pointwise_samples = count_or(m, "pointwise_samples", "martingale", spec.pointwise_samples);
        if (m["time_steps"]) spec.time_steps = count(m["time_steps"], "martingale.time_steps");
        spec.box = box(require(m, "box", "martingale"), "martingale.box", d);
        c.martingale = spec;
    }
    if (const YAML::Node o = root["output"]) {
        check_keys(o, "output", {"dir", "formats", "samples"});
        if (o["dir"]) c.output.dir = as<std::string>(o["dir"], "output.dir");
        if (const YAML::Node f = o["formats"]) {
            if (!f.IsSequence()) throw ConfigError("output.formats", "must be a list", line_of(f));
            c.output.csv = c.output.json = c.output.binary = false;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const auto fmt = as<std::string>(f[i], "output.formats");
                if (fmt == "csv") c.output.csv = true;
                else if (fmt == "json") c.output.json = true;
                else if (fmt == "binary") c.output.binary = true;
                else throw ConfigError("output.formats", "unknown format '" + fmt + "' (csv, json, binary)", line_of(f[i]));
            }
        }
        if (o["samples"]) c.output.samples = as<bool>(o["samples"], "output.samples");
    }
    if (const YAML::Node b = root["bench"]) {
        check_keys(b, "bench", {"oracle", "sigma", "frequency", "margin", "levels"});
        BenchSpec spec;
        if (!b["oracle"]) throw ConfigError("bench.oracle", "missing oracle (heat_cosine or zero_dynamics)", line_of(b));
        spec.oracle = as<std::string>(b["oracle"], "bench.oracle");
        if (spec.oracle != "heat_cosine" && spec.oracle != "zero_dynamics") {
            throw ConfigError("bench.oracle", "unknown oracle '" + spec.oracle + "' (heat_cosine, zero_dynamics)",
                              line_of(b["oracle"]));
        }
        spec.sigma = number_or(b, "sigma", "bench", 1.0);
        spec.frequency = number_or(b, "frequency", "bench", 1.0);
        spec.margin = number_or(b, "margin", "bench", 0.1);
        if (!(spec.margin >= 0.0 && spec.margin < 0.5)) throw ConfigError("bench.margin", "must lie in [0, 0.5)", line_of(b));
        const YAML::Node levels = require(b, "levels", "bench");
        if (!levels.IsSequence() || levels.size() == 0) throw ConfigError("bench.levels", "must be a non-empty list", line_of(b));
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const std::string sub = "bench.levels[" + std::to_string(i) + "]";
            check_keys(levels[i], sub, {"nodes", "time_steps"});
            BenchLevel lv{count(require(levels[i], "nodes", sub), sub + ".nodes"),
                          count(require(levels[i], "time_steps", sub), sub + ".time_steps")};
            if (lv.nodes < 3) throw ConfigError(sub + ".nodes", "needs at least 3 nodes", line_of(levels[i]));
            spec.levels.push_back(lv);
        }
        c.bench = spec;
    }
    if (const YAML::Node s = root["simulate"]) {
        check_keys(s, "simulate", {"start", "paths", "time_steps", "horizon"});
        SimulateSpec spec;
        spec.start = start(require(s, "start", "simulate"), "simulate.start", d);
        spec.paths = count_or(s, "paths", "simulate", spec.paths);
        spec.time_steps = count_or(s, "time_steps", "simulate", spec.time_steps);
        spec.horizon = s["horizon"] ? positive(s["horizon"], "simulate.horizon") : (c.has_problem ? c.problem.horizon : 1.0);
        if (!(spec.start.t < spec.horizon)) throw ConfigError("simulate.start.t", "must be before the horizon", line_of(s));
        c.simulate = spec;
    }
    if (const YAML::Node g = root["growth"]) {
        check_keys(g, "growth", {"box", "t_min", "t_max", "samples"});
        GrowthSpec spec;
        spec.box = box(require(g, "box", "growth"), "growth.box", d);
        spec.t_min = number_or(g, "t_min", "growth", 0.0);
        spec.t_max = number_or(g, "t_max", "growth", c.has_problem ? c.problem.horizon : 1.0);
        if (!(spec.t_min <= spec.t_max)) throw ConfigError("growth", "needs t_min <= t_max", line_of(g));
        spec.samples = count_or(g, "samples", "growth", spec.samples);
        c.growth = spec;
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Spatial grid of the `grid` section.
inline SpatialGrid make_spatial_grid(const GridSpec& g) { return SpatialGrid(g.axes, g.boundary); }

/// Builds a strategy from its spec; hit_region needs the solved surface.
inline Strategy make_strategy(const StrategySpec& s, std::shared_ptr<const GridFunction> v,
                              std::shared_ptr<const ObstacleProblem> problem, double eps) {
    if (s.type == "fixed_time") return Strategy::fixed_time(s.player, s.time);
    if (s.type == "threshold") return Strategy::threshold(s.player, s.coord, s.level, s.side);
    if (s.type == "hit_region") return Strategy::hit_region(s.player, std::move(v), std::move(problem), eps, s.shift);
    return Strategy::never_stop(s.player);
}

}  // namespace dynkin
