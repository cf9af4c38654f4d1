#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dynkin {

// Error hierarchy. Everything thrown by the library derives from dynkin::Error.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid call arguments (sizes, counts, ranges).
struct ArgumentError : Error {
    using Error::Error;
};

/// A model coefficient produced a non-finite value during simulation.
struct SimulationError : Error {
    using Error::Error;
};

/// The game data violates a standing assumption (l <= u, terminal compatibility, bounds).
struct ProblemError : Error {
    using Error::Error;
};

/// Explicit time step too large for a monotone update.
struct CflError : Error {
    CflError(const std::string& what, double dt, double dt_max)
        : Error(what), dt(dt), dt_max(dt_max) {}
    double dt;
    double dt_max;
};

/// Projected SOR did not reach its tolerance.
struct ConvergenceError : Error {
    ConvergenceError(const std::string& what, double residual, std::size_t iterations)
        : Error(what), residual(residual), iterations(iterations) {}
    double residual;
    std::size_t iterations;
};

/// Broken internal consistency (overlapping stopping regions, impossible payoff branch).
struct InternalError : Error {
    using Error::Error;
};

/// Dense row-major matrix, used for diffusion coefficients and Hessians.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix diagonal(std::span<const double> d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Axis-aligned hyper-rectangle in state space.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    std::size_t dim() const { return lo.size(); }

    void validate(std::size_t expected_dim) const {
        if (lo.size() != hi.size() || lo.size() != expected_dim) {
            throw ArgumentError("box dimension does not match model dimension");
        }
        for (std::size_t i = 0; i < lo.size(); ++i) {
            if (!(lo[i] <= hi[i])) throw ArgumentError("box has lo > hi on axis " + std::to_string(i));
        }
    }
};

inline double euclidean_norm(std::span<const double> v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    return std::sqrt(s);
}

inline std::string format_point(double t, std::span<const double> x) {
    std::ostringstream os;
    os.precision(17);
    os << "(t=" << t << ", x=[";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << "])";
    return os.str();
}

/// SplitMix64 finalizer; the mixing step of every seed derivation in the library.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed of an independent stream identified by (seed, index).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0xD1B54A32D192ED03ULL));
}

/// Runs fn(begin, end) over [0, n) split into `threads` contiguous chunks.
/// The first exception (by chunk order) is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (n == 0) return;
    threads = std::clamp<std::size_t>(threads, 1, n);
    if (threads == 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> workers;
    workers.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
        const std::size_t begin = std::min(n, w * chunk);
        const std::size_t end = std::min(n, begin + chunk);
        workers.emplace_back([&, w, begin, end] {
            try {
                if (begin < end) fn(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace dynkin
