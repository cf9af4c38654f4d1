#pragma once

#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dynkin/core.hpp"
#include "dynkin/game.hpp"
#include "dynkin/grid.hpp"
#include "dynkin/martingale.hpp"
#include "dynkin/pde_solver.hpp"
#include "dynkin/sde.hpp"

// Artifact export. Every file carries the SHA-256 of the config text that produced it;
// no file carries a timestamp, a thread count or a wall-clock figure.
namespace dynkin::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw InternalError("SHA-256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ArgumentError("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Round-trip decimal form of a double.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& p, const std::string& config_hash, const std::vector<std::string>& header)
        : out_(p, std::ios::binary) {
        if (!out_) throw ArgumentError("cannot write " + p.string());
        out_ << "# config_sha256=" << config_hash << '\n';
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

inline void write_json(const std::filesystem::path& p, const std::string& config_hash, Json body) {
    Json doc;
    doc["config_sha256"] = config_hash;
    doc["version"] = kVersion;
    for (auto& [k, v] : body.items()) doc[k] = v;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ArgumentError("cannot write " + p.string());
    // Non-finite numbers serialize as null.
    out << doc.dump(2) << '\n';
}

inline Json vec(std::span<const double> v) { return Json(std::vector<double>(v.begin(), v.end())); }

inline std::vector<std::string> coordinate_names(std::size_t dim) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < dim; ++i) out.push_back("x" + std::to_string(i));
    return out;
}

/// surface.csv: t, x0.., v, in_upper_region, in_lower_region.
inline void write_surface(const std::filesystem::path& p, const std::string& hash, const GridFunction& v,
                          const StoppingRegions& regions) {
    std::vector<std::string> header{"t"};
    for (const auto& c : coordinate_names(v.grid.dim())) header.push_back(c);
    for (const char* c : {"v", "in_upper_region", "in_lower_region"}) header.emplace_back(c);
    CsvWriter csv(p, hash, header);
    std::vector<double> x(v.grid.dim());
    for (std::size_t k = 0; k < v.times.size(); ++k) {
        for (std::size_t j = 0; j < v.grid.size(); ++j) {
            v.grid.coords(j, x);
            std::vector<std::string> cells{fmt(v.times[k])};
            for (double xi : x) cells.push_back(fmt(xi));
            cells.push_back(fmt(v.at_node(k, j)));
            cells.emplace_back(regions.upper(k, j) ? "1" : "0");
            cells.emplace_back(regions.lower(k, j) ? "1" : "0");
            csv.row(cells);
        }
    }
}

/// upper_region.csv / lower_region.csv: the (t, x) nodes of one contact set.
inline void write_region(const std::filesystem::path& p, const std::string& hash, const GridFunction& v,
                         const StoppingRegions& regions, bool upper) {
    std::vector<std::string> header{"t"};
    for (const auto& c : coordinate_names(v.grid.dim())) header.push_back(c);
    CsvWriter csv(p, hash, header);
    std::vector<double> x(v.grid.dim());
    for (std::size_t k = 0; k < v.times.size(); ++k) {
        for (std::size_t j = 0; j < v.grid.size(); ++j) {
            if (!(upper ? regions.upper(k, j) : regions.lower(k, j))) continue;
            v.grid.coords(j, x);
            std::vector<std::string> cells{fmt(v.times[k])};
            for (double xi : x) cells.push_back(fmt(xi));
            csv.row(cells);
        }
    }
}

/// paths.csv in long form: path, node, t, coordinate, value.
inline void write_paths_csv(const std::filesystem::path& p, const std::string& hash, const PathBundle& b) {
    CsvWriter csv(p, hash, {"path", "node", "t", "coordinate", "value"});
    for (std::size_t q = 0; q < b.n_paths; ++q) {
        for (std::size_t k = 0; k < b.grid.size(); ++k) {
            for (std::size_t i = 0; i < b.dim; ++i) {
                csv.row({std::to_string(q), std::to_string(k), fmt(b.grid[k]), std::to_string(i), fmt(b.state(q, k, i))});
            }
        }
    }
}

/// Binary path export, little-endian:
///   "DKPB", u32 version = 1, u64 n_paths, u64 n_nodes, u64 dim, u64 seed,
///   char[64] config hash, f64 times[n_nodes], f64 states[n_paths][n_nodes][dim].
inline constexpr char kPathMagic[4] = {'D', 'K', 'P', 'B'};

inline void write_paths_binary(const std::filesystem::path& p, const std::string& hash, const PathBundle& b) {
    static_assert(sizeof(double) == 8);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ArgumentError("cannot write " + p.string());
    auto put_u64 = [&](std::uint64_t v) {
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(buf), 8);
    };
    auto put_f64 = [&](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(bits);
    };
    out.write(kPathMagic, 4);
    const std::uint32_t version = 1;
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>(version >> (8 * i)));
    put_u64(b.n_paths);
    put_u64(b.grid.size());
    put_u64(b.dim);
    put_u64(b.seed);
    std::string h = hash;
    h.resize(64, '\0');
    out.write(h.data(), 64);
    for (std::size_t k = 0; k < b.grid.size(); ++k) put_f64(b.grid[k]);
    for (double v : b.states) put_f64(v);
}

struct BinaryPaths {
    std::uint64_t n_paths = 0;
    std::uint64_t n_nodes = 0;
    std::uint64_t dim = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<double> times;
    std::vector<double> states;
};

inline BinaryPaths read_paths_binary(const std::filesystem::path& p) {
    const std::string raw = read_file(p);
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > raw.size()) throw ArgumentError("truncated path file " + p.string());
    };
    auto get_u64 = [&]() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[pos + i])) << (8 * i);
        pos += 8;
        return v;
    };
    auto get_f64 = [&]() {
        const std::uint64_t bits = get_u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    };
    need(8);
    if (std::memcmp(raw.data(), kPathMagic, 4) != 0) throw ArgumentError("not a path file: " + p.string());
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 + i])) << (8 * i);
    if (version != 1) throw ArgumentError("unsupported path file version " + std::to_string(version));
    pos = 8;
    BinaryPaths b;
    b.n_paths = get_u64();
    b.n_nodes = get_u64();
    b.dim = get_u64();
    b.seed = get_u64();
    need(64);
    b.config_hash = raw.substr(pos, 64);
    pos += 64;
    const std::uint64_t n_states = b.n_paths * b.n_nodes * b.dim;
    need((b.n_nodes + n_states) * 8);
    for (std::uint64_t k = 0; k < b.n_nodes; ++k) b.times.push_back(get_f64());
    b.states.reserve(n_states);
    for (std::uint64_t i = 0; i < n_states; ++i) b.states.push_back(get_f64());
    if (pos != raw.size()) throw ArgumentError("trailing bytes in path file " + p.string());
    return b;
}

inline Json to_json(const ComplementarityReport& r) {
    return {{"clean", r.clean()},
            {"max_interior_residual", r.max_interior_residual},
            {"region_sign_violations", r.region_sign_violations},
            {"continuation_violations", r.continuation_violations},
            {"nodes_checked", r.n_checked},
            {"worst_violation", r.worst_violation},
            {"witness_time_index", r.witness_time},
            {"witness_node", r.witness_node},
            {"tol_pde", r.tol_pde},
            {"eps_contact", r.eps_contact}};
}

inline Json to_json(const GameEstimate& e) {
    return {{"mean", e.mean},
            {"std_error", e.std_error},
            {"n_paths", e.n_paths},
            {"breakdown", {{"lower", e.breakdown.lower}, {"upper", e.breakdown.upper}, {"terminal", e.breakdown.terminal}}},
            {"mean_tau_time", e.mean_tau_time},
            {"mean_rho_time", e.mean_rho_time}};
}

inline Json to_json(const SaddleAuditReport& r) {
    Json challengers = Json::array();
    for (const auto& c : r.challengers) {
        challengers.push_back({{"strategy", c.description},
                               {"player", to_string(c.player)},
                               {"estimate", to_json(c.estimate)},
                               {"improvement", c.improvement},
                               {"improvement_std_error", c.improvement_se},
                               {"passed", c.passed}});
    }
    return {{"passed", r.passed},
            {"s", r.s},
            {"x", r.x},
            {"pde_value", r.pde_value},
            {"tau_star", r.tau_star},
            {"rho_star", r.rho_star},
            {"saddle", to_json(r.saddle)},
            {"value_gap", r.value_gap},
            {"scheme_tolerance", r.scheme_tolerance},
            {"z", r.z},
            {"value_check_passed", r.value_check_passed},
            {"challengers", challengers}};
}

inline Json to_json(const OrderingReport& r) {
    return {{"passed", r.passed},
            {"lower_value", r.lower_value},
            {"upper_value", r.upper_value},
            {"sigma", r.sigma},
            {"matrix", r.matrix},
            {"std_errors", r.std_errors}};
}

inline Json to_json(const MartingaleTestReport& r) {
    Json starts = Json::array();
    for (const auto& s : r.starts) {
        Json j{{"s", s.s},
               {"x", s.x},
               {"kind", s.kind == StartKind::deterministic ? "deterministic" : "region_entry"},
               {"horizon_steps", s.horizon_steps},
               {"mean_increment", s.mean_increment},
               {"std_error", s.std_error},
               {"z_score", s.z_score},
               {"vacuous_paths", s.vacuous_paths}};
        if (s.kind == StartKind::deterministic) {
            j["tau1_offset"] = s.tau1_offset;
        } else {
            j["region_lo"] = s.region_lo;
            j["region_hi"] = s.region_hi;
        }
        starts.push_back(std::move(j));
    }
    Json out{{"role", to_string(r.role)},
             {"label", r.label},
             {"passed", r.passed},
             {"n_start_times", r.n_start_times},
             {"worst_violation", r.worst_violation},
             {"violation_z_score", r.violation_z_score},
             {"z_threshold", r.z_threshold},
             {"pointwise_passed", r.pointwise_passed}};
    if (!r.pointwise_passed) {
        out["pointwise_message"] = r.pointwise_message;
        out["pointwise_witness"] = {{"t", r.pointwise_witness_t}, {"x", r.pointwise_witness}};
    }
    if (r.skipped) out["skip_reason"] = r.skip_reason;
    out["starts"] = starts;
    return out;
}

inline Json to_json(const GrowthReport& r, double bound) {
    return {{"passed", r.passed},
            {"growth_bound", bound},
            {"max_ratio", r.max_ratio},
            {"samples", r.n_samples},
            {"witness", {{"t", r.witness_t}, {"x", r.witness}}}};
}

}  // namespace dynkin::io
