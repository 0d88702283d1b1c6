#pragma once

#include "hspde/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

namespace hspde {

using Complex = std::complex<double>;
using GridFunction = Eigen::VectorXd;
using ComplexGridFunction = Eigen::VectorXcd;
using MultiIndex = std::vector<int>;

/// Hyper-rectangle (0,1)^d with M interior points per axis and a per-axis
/// spectral cutoff K. Points are xi_j = j/(M+1), j = 1..M; the boundary
/// carries the zero Dirichlet condition and is never stored.
///
/// Grid functions are flattened row-major: axis 0 varies slowest.
class SpectralDomain {
public:
    SpectralDomain(int dim, int grid_size, int mode_cutoff)
        : dim_(dim), grid_size_(grid_size), mode_cutoff_(mode_cutoff) {
        require(dim >= 1, "domain dimension must be >= 1, got ", dim);
        require(grid_size >= 3, "grid_size must be >= 3, got ", grid_size);
        require(mode_cutoff >= 1, "mode_cutoff must be >= 1, got ", mode_cutoff);
        require(mode_cutoff <= grid_size, "mode_cutoff K=", mode_cutoff,
                " exceeds grid_size M=", grid_size, " (modes not representable on the grid)");
    }

    int dim() const noexcept { return dim_; }
    int grid_size() const noexcept { return grid_size_; }
    int mode_cutoff() const noexcept { return mode_cutoff_; }

    double spacing() const noexcept { return 1.0 / (grid_size_ + 1); }

    /// Midpoint quadrature weight of one grid cell, 1/(M+1)^d.
    double cell_weight() const noexcept { return std::pow(spacing(), dim_); }

    std::size_t point_count() const noexcept { return ipow(grid_size_, dim_); }
    std::size_t mode_count() const noexcept { return ipow(mode_cutoff_, dim_); }

    /// Coordinate of zero-based axis index j.
    double coordinate(int j) const noexcept { return (j + 1) * spacing(); }

    std::vector<double> axis_coordinates() const {
        std::vector<double> xs(static_cast<std::size_t>(grid_size_));
        for (int j = 0; j < grid_size_; ++j) {
            xs[static_cast<std::size_t>(j)] = coordinate(j);
        }
        return xs;
    }

    /// Per-axis zero-based indices of a flat point index.
    std::vector<int> point_indices(std::size_t flat) const {
        std::vector<int> idx(static_cast<std::size_t>(dim_));
        for (int axis = dim_ - 1; axis >= 0; --axis) {
            idx[static_cast<std::size_t>(axis)] = static_cast<int>(flat % grid_size_);
            flat /= grid_size_;
        }
        return idx;
    }

    std::size_t flat_index(const std::vector<int>& idx) const {
        std::size_t flat = 0;
        for (int axis = 0; axis < dim_; ++axis) {
            flat = flat * grid_size_ + static_cast<std::size_t>(idx[static_cast<std::size_t>(axis)]);
        }
        return flat;
    }

    std::vector<double> point(std::size_t flat) const {
        const auto idx = point_indices(flat);
        std::vector<double> xi(idx.size());
        std::transform(idx.begin(), idx.end(), xi.begin(), [this](int j) { return coordinate(j); });
        return xi;
    }

    friend bool operator==(const SpectralDomain&, const SpectralDomain&) = default;

private:
    static std::size_t ipow(int base, int exp) {
        std::size_t r = 1;
        for (int i = 0; i < exp; ++i) {
            r *= static_cast<std::size_t>(base);
        }
        return r;
    }

    int dim_;
    int grid_size_;
    int mode_cutoff_;
};

/// (weight * sum |x_j|^p)^(1/p); p = infinity gives the max norm.
template <typename Derived>
double lp_norm(const Eigen::MatrixBase<Derived>& x, double p, double weight) {
    require(p >= 1.0, "L^p exponent must be >= 1, got ", p);
    if (x.size() == 0) {
        return 0.0;
    }
    if (std::isinf(p)) {
        return x.cwiseAbs().maxCoeff();
    }
    if (p == 2.0) {
        return std::sqrt(weight * x.cwiseAbs2().sum());
    }
    const double s = x.cwiseAbs().array().pow(p).sum();
    return std::pow(weight * s, 1.0 / p);
}

inline double lp_norm(const SpectralDomain& domain, const GridFunction& x, double p) {
    return lp_norm(x, p, domain.cell_weight());
}

/// Multi-indices k in [1, cutoff]^dim ordered by |k|^2 (ties lexicographic),
/// i.e. by increasing Dirichlet Laplacian eigenvalue.
inline std::vector<MultiIndex> laplacian_multi_indices(int dim, int cutoff) {
    std::vector<MultiIndex> out;
    MultiIndex k(static_cast<std::size_t>(dim), 1);
    while (true) {
        out.push_back(k);
        int axis = dim - 1;
        while (axis >= 0 && k[static_cast<std::size_t>(axis)] == cutoff) {
            k[static_cast<std::size_t>(axis)] = 1;
            --axis;
        }
        if (axis < 0) {
            break;
        }
        ++k[static_cast<std::size_t>(axis)];
    }
    auto norm2 = [](const MultiIndex& m) {
        long s = 0;
        for (int v : m) {
            s += static_cast<long>(v) * v;
        }
        return s;
    };
    std::stable_sort(out.begin(), out.end(),
                     [&](const MultiIndex& a, const MultiIndex& b) { return norm2(a) < norm2(b); });
    return out;
}

inline double laplacian_eigenvalue(const MultiIndex& k) {
    double s = 0.0;
    for (int v : k) {
        s += static_cast<double>(v) * v;
    }
    return std::numbers::pi * std::numbers::pi * s;
}

/// Tensor sine mode 2^{d/2} prod_i sin(k_i pi xi_i) sampled on the grid.
inline GridFunction sine_mode(const SpectralDomain& domain, const MultiIndex& k) {
    const int d = domain.dim();
    const int M = domain.grid_size();
    std::vector<GridFunction> factors;
    factors.reserve(static_cast<std::size_t>(d));
    for (int axis = 0; axis < d; ++axis) {
        GridFunction f(M);
        for (int j = 0; j < M; ++j) {
            f[j] = std::sqrt(2.0) * std::sin(k[static_cast<std::size_t>(axis)] * std::numbers::pi * domain.coordinate(j));
        }
        factors.push_back(std::move(f));
    }
    GridFunction out(static_cast<Eigen::Index>(domain.point_count()));
    for (std::size_t flat = 0; flat < domain.point_count(); ++flat) {
        const auto idx = domain.point_indices(flat);
        double v = 1.0;
        for (int axis = 0; axis < d; ++axis) {
            v *= factors[static_cast<std::size_t>(axis)][idx[static_cast<std::size_t>(axis)]];
        }
        out[static_cast<Eigen::Index>(flat)] = v;
    }
    return out;
}

/// Sample a function of the point coordinates on the grid.
template <typename F>
GridFunction sample_on_grid(const SpectralDomain& domain, F&& f) {
    GridFunction out(static_cast<Eigen::Index>(domain.point_count()));
    for (std::size_t flat = 0; flat < domain.point_count(); ++flat) {
        out[static_cast<Eigen::Index>(flat)] = f(domain.point(flat));
    }
    return out;
}

} // namespace hspde
