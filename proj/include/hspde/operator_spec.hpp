#pragma once

#include "hspde/domain.hpp"
#include "hspde/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <sstream>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace hspde {

/// Coefficients of the non-divergence operator
///   A u = -sum a_ij d_i d_j u + sum b_i d_i u + c u,
/// sampled per grid point, plus the shift nu, the ellipticity constant a0,
/// the integrability exponents (k1, k2) of b and c, and the fractional
/// exponent alpha of the drift A^{alpha/2}.
struct EllipticOperatorSpec {
    std::vector<Eigen::MatrixXd> a;
    std::vector<Eigen::VectorXd> b;
    Eigen::VectorXd c;
    double a0 = 0.5;
    double k1 = std::numeric_limits<double>::infinity();
    double k2 = std::numeric_limits<double>::infinity();
    double shift = 0.0;
    double alpha = 2.0;
    std::string label = "custom";

    static EllipticOperatorSpec one_dimensional(const GridFunction& a_values, const GridFunction& b_values,
                                                const GridFunction& c_values) {
        require(a_values.size() == b_values.size() && a_values.size() == c_values.size(),
                "coefficient arrays must have equal length");
        EllipticOperatorSpec spec;
        const auto n = a_values.size();
        spec.a.reserve(static_cast<std::size_t>(n));
        spec.b.reserve(static_cast<std::size_t>(n));
        for (Eigen::Index j = 0; j < n; ++j) {
            spec.a.push_back(Eigen::MatrixXd::Constant(1, 1, a_values[j]));
            spec.b.push_back(Eigen::VectorXd::Constant(1, b_values[j]));
        }
        spec.c = c_values;
        return spec;
    }

    /// Named coefficient presets: "laplacian" (a = I, b = c = 0) and
    /// "affine-a" (1D only, a(xi) = 1 + xi/2).
    static EllipticOperatorSpec preset(std::string_view name, const SpectralDomain& domain) {
        const auto n = static_cast<Eigen::Index>(domain.point_count());
        const int d = domain.dim();
        EllipticOperatorSpec spec;
        if (name == "laplacian") {
            spec.a.assign(static_cast<std::size_t>(n), Eigen::MatrixXd::Identity(d, d));
            spec.b.assign(static_cast<std::size_t>(n), Eigen::VectorXd::Zero(d));
            spec.c = Eigen::VectorXd::Zero(n);
            spec.a0 = 1.0;
        } else if (name == "affine-a") {
            require(d == 1, "preset affine-a is one-dimensional");
            GridFunction av = sample_on_grid(domain, [](const std::vector<double>& xi) { return 1.0 + 0.5 * xi[0]; });
            spec = one_dimensional(av, GridFunction::Zero(n), GridFunction::Zero(n));
            spec.a0 = 0.5;
        } else {
            fail(ErrorKind::invalid_argument, "unknown operator preset '", name, "'");
        }
        spec.label = std::string(name);
        return spec;
    }

    /// Grid-sampled 1D coefficients from CSV rows `xi,a,b,c`, one row per
    /// grid point in grid order; a header line is allowed. xi must match the
    /// grid coordinate to 1e-9.
    static EllipticOperatorSpec from_csv(const std::string& path, const SpectralDomain& domain) {
        require(domain.dim() == 1, "coefficient CSV input is one-dimensional");
        std::ifstream in(path);
        if (!in) {
            fail(ErrorKind::io, "cannot open coefficient CSV '", path, "'");
        }
        const int M = domain.grid_size();
        GridFunction av(M), bv(M), cv(M);
        int row = 0;
        int line_no = 0;
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line == "\r") {
                continue;
            }
            std::stringstream ss(line);
            std::string cell;
            std::vector<double> vals;
            try {
                while (std::getline(ss, cell, ',')) {
                    vals.push_back(std::stod(cell));
                }
            } catch (const std::exception&) {
                if (line_no == 1) {
                    continue;
                }
                fail(ErrorKind::io, path, ":", line_no, ": non-numeric entry");
            }
            if (vals.size() != 4) {
                fail(ErrorKind::io, path, ":", line_no, ": expected 4 columns (xi,a,b,c), got ", vals.size());
            }
            if (row >= M) {
                fail(ErrorKind::io, path, ": more rows than the ", M, " grid points");
            }
            if (std::abs(vals[0] - domain.coordinate(row)) > 1e-9) {
                fail(ErrorKind::io, path, ":", line_no, ": xi=", vals[0], " does not match grid point ",
                     domain.coordinate(row));
            }
            av[row] = vals[1];
            bv[row] = vals[2];
            cv[row] = vals[3];
            ++row;
        }
        if (row != M) {
            fail(ErrorKind::io, path, ": ", row, " rows for ", M, " grid points");
        }
        EllipticOperatorSpec spec = one_dimensional(av, bv, cv);
        spec.a0 = std::min(av.minCoeff(), 1.0 / av.maxCoeff());
        spec.label = "csv:" + path;
        return spec;
    }

    /// Checks sizes, symmetry and ellipticity a0 <= lambda^T a lambda <= 1/a0
    /// (via the extreme eigenvalues of a at every grid point), finiteness,
    /// k1 > d, k2 > d/2 and alpha in (0, 2].
    void validate(const SpectralDomain& domain) const {
        const int d = domain.dim();
        const auto n = domain.point_count();
        require(a.size() == n && b.size() == n && static_cast<std::size_t>(c.size()) == n,
                "coefficient fields must be sampled at all ", n, " grid points");
        require(a0 > 0.0 && a0 <= 1.0, "ellipticity constant a0 must lie in (0, 1], got ", a0);
        require(k1 > d, "k1 must exceed d (k1=", k1, ", d=", d, ")");
        require(k2 > d / 2.0, "k2 must exceed d/2 (k2=", k2, ", d=", d, ")");
        require(alpha > 0.0 && alpha <= 2.0, "alpha must lie in (0, 2], got ", alpha);
        require(shift >= 0.0 && std::isfinite(shift), "shift must be finite and >= 0, got ", shift);
        for (std::size_t j = 0; j < n; ++j) {
            const auto& aj = a[j];
            require(aj.rows() == d && aj.cols() == d, "a must be a ", d, "x", d, " matrix at every point");
            require(b[j].size() == d, "b must have ", d, " components at every point");
            require(aj.allFinite() && b[j].allFinite() && std::isfinite(c[static_cast<Eigen::Index>(j)]),
                    "non-finite coefficient at grid point ", j);
            require((aj - aj.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + aj.cwiseAbs().maxCoeff()),
                    "a is not symmetric at grid point ", j);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(aj, Eigen::EigenvaluesOnly);
            const double lo = es.eigenvalues().minCoeff();
            const double hi = es.eigenvalues().maxCoeff();
            require(lo >= a0 && hi <= 1.0 / a0, "ellipticity violated at grid point ", j, ": spectrum of a in [", lo,
                    ", ", hi, "], required [", a0, ", ", 1.0 / a0, "]");
        }
    }

    bool is_constant_laplacian() const {
        for (std::size_t j = 0; j < a.size(); ++j) {
            const auto& aj = a[j];
            if (!aj.isIdentity(0.0) || !b[j].isZero(0.0)) {
                return false;
            }
        }
        return c.size() == 0 || c.isZero(0.0);
    }
};

} // namespace hspde
