#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dynkin/core.hpp"
#include "dynkin/sde.hpp"

namespace dynkin {

enum class BoundaryPolicy { dirichlet_from_payoff, neumann_zero };

enum class Scheme { explicit_euler, implicit_psor };

inline std::string to_string(BoundaryPolicy p) {
    return p == BoundaryPolicy::dirichlet_from_payoff ? "dirichlet_from_payoff" : "neumann_zero";
}
inline std::string to_string(Scheme s) { return s == Scheme::explicit_euler ? "explicit" : "implicit_psor"; }

/// Uniform nodes lo = x_0 < ... < x_{n-1} = hi on one axis.
struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n_nodes = 3;

    double step() const { return (hi - lo) / static_cast<double>(n_nodes - 1); }
    double node(std::size_t i) const { return i + 1 == n_nodes ? hi : lo + static_cast<double>(i) * step(); }
};

/// Tensor-product spatial grid, flattened row-major (last axis fastest).
class SpatialGrid {
public:
    SpatialGrid() = default;
    SpatialGrid(std::vector<Axis> axes, BoundaryPolicy policy = BoundaryPolicy::dirichlet_from_payoff)
        : axes_(std::move(axes)), policy_(policy) {
        if (axes_.empty() || axes_.size() > 3) throw ArgumentError("spatial grid supports 1 to 3 axes");
        for (const auto& a : axes_) {
            if (a.n_nodes < 3) throw ArgumentError("spatial grid needs at least 3 nodes per axis");
            if (!(a.lo < a.hi)) throw ArgumentError("spatial grid needs lo < hi");
        }
        strides_.assign(axes_.size(), 1);
        for (std::size_t i = axes_.size() - 1; i > 0; --i) strides_[i - 1] = strides_[i] * axes_[i].n_nodes;
        size_ = strides_[0] * axes_[0].n_nodes;
    }

    static SpatialGrid uniform_1d(double lo, double hi, std::size_t n,
                                  BoundaryPolicy policy = BoundaryPolicy::dirichlet_from_payoff) {
        return SpatialGrid({Axis{lo, hi, n}}, policy);
    }

    std::size_t dim() const { return axes_.size(); }
    std::size_t size() const { return size_; }
    const Axis& axis(std::size_t i) const { return axes_[i]; }
    const std::vector<Axis>& axes() const { return axes_; }
    BoundaryPolicy boundary_policy() const { return policy_; }
    std::size_t stride(std::size_t i) const { return strides_[i]; }

    std::size_t axis_index(std::size_t flat, std::size_t i) const { return (flat / strides_[i]) % axes_[i].n_nodes; }

    void coords(std::size_t flat, std::span<double> out) const {
        for (std::size_t i = 0; i < axes_.size(); ++i) out[i] = axes_[i].node(axis_index(flat, i));
    }
    std::vector<double> coords(std::size_t flat) const {
        std::vector<double> x(dim());
        coords(flat, x);
        return x;
    }

    bool is_boundary(std::size_t flat) const {
        for (std::size_t i = 0; i < axes_.size(); ++i) {
            const std::size_t k = axis_index(flat, i);
            if (k == 0 || k + 1 == axes_[i].n_nodes) return true;
        }
        return false;
    }

    /// True when every coordinate lies at least `fraction` of the axis length away from both ends.
    bool inside_margin(std::span<const double> x, double fraction) const {
        for (std::size_t i = 0; i < axes_.size(); ++i) {
            const double pad = fraction * (axes_[i].hi - axes_[i].lo);
            if (x[i] < axes_[i].lo + pad || x[i] > axes_[i].hi - pad) return false;
        }
        return true;
    }

    Box box() const {
        Box b;
        for (const auto& a : axes_) {
            b.lo.push_back(a.lo);
            b.hi.push_back(a.hi);
        }
        return b;
    }

    friend bool operator==(const SpatialGrid& a, const SpatialGrid& b) {
        if (a.policy_ != b.policy_ || a.axes_.size() != b.axes_.size()) return false;
        for (std::size_t i = 0; i < a.axes_.size(); ++i) {
            if (a.axes_[i].lo != b.axes_[i].lo || a.axes_[i].hi != b.axes_[i].hi ||
                a.axes_[i].n_nodes != b.axes_[i].n_nodes) {
                return false;
            }
        }
        return true;
    }

private:
    std::vector<Axis> axes_;
    BoundaryPolicy policy_ = BoundaryPolicy::dirichlet_from_payoff;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

/// Space-time values of a candidate solution: multilinear in space (clamped to
/// the grid box) and piecewise constant from the left in time.
struct GridFunction {
    SpatialGrid grid;
    TimeGrid times;
    std::vector<double> values;  // [time node][space node]
    Scheme scheme = Scheme::implicit_psor;

    GridFunction() = default;
    GridFunction(SpatialGrid g, TimeGrid t, Scheme s = Scheme::implicit_psor)
        : grid(std::move(g)), times(std::move(t)), values(times.size() * grid.size(), 0.0), scheme(s) {}

    std::span<double> slice(std::size_t k) { return std::span<double>(values).subspan(k * grid.size(), grid.size()); }
    std::span<const double> slice(std::size_t k) const {
        return std::span<const double>(values).subspan(k * grid.size(), grid.size());
    }
    double& at_node(std::size_t k, std::size_t j) { return values[k * grid.size() + j]; }
    double at_node(std::size_t k, std::size_t j) const { return values[k * grid.size() + j]; }

    /// Multilinear interpolation of time slice k at x.
    double interpolate(std::size_t k, std::span<const double> x) const {
        const std::size_t d = grid.dim();
        std::size_t cell[3];
        double w[3];
        for (std::size_t i = 0; i < d; ++i) {
            const Axis& a = grid.axis(i);
            const double h = a.step();
            const double xi = std::clamp(x[i], a.lo, a.hi);
            double pos = (xi - a.lo) / h;
            std::size_t c = static_cast<std::size_t>(std::floor(pos));
            if (c >= a.n_nodes - 1) c = a.n_nodes - 2;
            cell[i] = c;
            w[i] = std::clamp(pos - static_cast<double>(c), 0.0, 1.0);
        }
        const std::span<const double> s = slice(k);
        double acc = 0.0;
        for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
            double weight = 1.0;
            std::size_t flat = 0;
            for (std::size_t i = 0; i < d; ++i) {
                const bool up = (corner >> i) & 1U;
                weight *= up ? w[i] : 1.0 - w[i];
                flat += (cell[i] + (up ? 1 : 0)) * grid.stride(i);
            }
            if (weight != 0.0) acc += weight * s[flat];
        }
        return acc;
    }

    /// Value at (t, x).
    double operator()(double t, std::span<const double> x) const {
        return interpolate(times.index_at_or_before(t), x);
    }
};

}  // namespace dynkin
