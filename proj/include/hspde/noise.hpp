#pragma once

#include "hspde/domain.hpp"
#include "hspde/error.hpp"
#include "hspde/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace hspde {

/// Cameron-Martin space H: the spectral scale of the Dirichlet Laplacian
/// with smoothness theta, truncated to the first N Laplacian modes.
struct CameronMartinSpec {
    SpectralDomain domain;
    double theta = 0.0;
    int truncation = 16;

    CameronMartinSpec(SpectralDomain dom, double th, int n) : domain(std::move(dom)), theta(th), truncation(n) {
        require(theta >= 0.0, "Cameron-Martin smoothness theta must be >= 0, got ", theta);
        require(truncation >= 1, "noise truncation must be >= 1");
        require(static_cast<std::size_t>(truncation) <= domain.point_count(), "noise truncation ", truncation,
                " exceeds the ", domain.point_count(), " grid modes");
    }

    std::vector<MultiIndex> multi_indices() const {
        const int cutoff = std::min(domain.grid_size(), truncation);
        auto all = laplacian_multi_indices(domain.dim(), cutoff);
        all.resize(static_cast<std::size_t>(truncation));
        return all;
    }

    /// (1 + lambda_k)^{-theta/2} for the unshifted Laplacian eigenvalues.
    Eigen::VectorXd weights() const {
        const auto idx = multi_indices();
        Eigen::VectorXd w(truncation);
        for (int k = 0; k < truncation; ++k) {
            w[k] = std::pow(1.0 + laplacian_eigenvalue(idx[static_cast<std::size_t>(k)]), -0.5 * theta);
        }
        return w;
    }

    /// Columns: the H-orthonormal vectors h_k on the grid, in L^2 coordinates.
    Eigen::MatrixXd basis() const {
        const auto idx = multi_indices();
        const Eigen::VectorXd w = weights();
        Eigen::MatrixXd h(static_cast<Eigen::Index>(domain.point_count()), truncation);
        for (int k = 0; k < truncation; ++k) {
            h.col(k) = w[k] * sine_mode(domain, idx[static_cast<std::size_t>(k)]);
        }
        return h;
    }

    /// r with 1/r = 1/2 - theta/d (infinity when the right side is <= 0).
    double embedding_exponent() const {
        const double inv = 0.5 - theta / domain.dim();
        return inv > 0.0 ? 1.0 / inv : std::numeric_limits<double>::infinity();
    }
};

enum class GKind { constant_multiplication, time_varying_multiplication, identity_embedding };

inline const char* to_string(GKind kind) {
    switch (kind) {
    case GKind::constant_multiplication: return "constant-multiplication";
    case GKind::time_varying_multiplication: return "time-varying-multiplication";
    case GKind::identity_embedding: return "identity-embedding";
    }
    return "unknown";
}

/// Operator process G(t) y = g(t, .) * y, piecewise constant in time: row n
/// of `g` acts on [t_n, t_{n+1}). Constant kinds store a single row.
struct GProcess {
    GKind kind = GKind::identity_embedding;
    Eigen::MatrixXd g;   // time rows x grid points
    double m = std::numeric_limits<double>::infinity();
    double q = std::numeric_limits<double>::infinity();
    std::string label = "identity";

    static GProcess identity() { return {}; }

    static GProcess constant(const GridFunction& values, std::string label, double m, double q) {
        GProcess G;
        G.kind = GKind::constant_multiplication;
        G.g = values.transpose();
        G.m = m;
        G.q = q;
        G.label = std::move(label);
        return G;
    }

    static GProcess time_varying(Eigen::MatrixXd rows, std::string label, double m, double q) {
        GProcess G;
        G.kind = GKind::time_varying_multiplication;
        G.g = std::move(rows);
        G.m = m;
        G.q = q;
        G.label = std::move(label);
        return G;
    }

    bool multiplies() const noexcept { return kind != GKind::identity_embedding; }

    /// Multiplier row in effect on step n.
    Eigen::VectorXd row(int n) const {
        require(multiplies(), "identity embedding has no multiplier");
        const Eigen::Index r = kind == GKind::constant_multiplication ? 0 : std::min<Eigen::Index>(n, g.rows() - 1);
        return g.row(r).transpose();
    }

    double sup_norm() const { return multiplies() ? g.cwiseAbs().maxCoeff() : 1.0; }

    bool bounded() const { return !multiplies() || g.allFinite(); }

    /// Same process scaled by c (identity becomes constant multiplication).
    GProcess scaled(double c, std::size_t points) const {
        GProcess out = *this;
        if (!multiplies()) {
            out.kind = GKind::constant_multiplication;
            out.g = Eigen::MatrixXd::Ones(1, static_cast<Eigen::Index>(points));
        }
        out.g *= c;
        return out;
    }

    void validate(const SpectralDomain& domain) const {
        if (!multiplies()) {
            return;
        }
        require(g.rows() >= 1 && g.cols() == static_cast<Eigen::Index>(domain.point_count()),
                "multiplier g must have one column per grid point (", domain.point_count(), "), got ", g.cols());
        if (!g.allFinite()) {
            fail(ErrorKind::hypothesis, "multiplier g is not bounded on the grid");
        }
        require(m > 0.0 && q > 0.0, "integrability exponents m, q must be positive");
    }
};

/// Named multipliers: "const" (g = 1), "bump" (a positive bump centred in
/// the domain) and "separable:sin" (time-varying, separable in t and xi).
inline GProcess g_preset(const std::string& name, const SpectralDomain& domain, double T, int steps, double m,
                         double q) {
    if (name == "identity") {
        GProcess G = GProcess::identity();
        G.m = m;
        G.q = q;
        return G;
    }
    if (name == "const") {
        return GProcess::constant(GridFunction::Ones(static_cast<Eigen::Index>(domain.point_count())), name, m, q);
    }
    if (name == "bump") {
        const GridFunction g = sample_on_grid(domain, [](const std::vector<double>& xi) {
            double r2 = 0.0;
            for (double x : xi) {
                r2 += (x - 0.5) * (x - 0.5);
            }
            return 0.5 + std::exp(-r2 / 0.05);
        });
        return GProcess::constant(g, name, m, q);
    }
    if (name == "separable:sin") {
        require(steps >= 1 && T > 0.0, "time-varying preset needs a time grid");
        const GridFunction space = sample_on_grid(domain, [](const std::vector<double>& xi) {
            double v = 1.0;
            for (double x : xi) {
                v *= 1.0 + 0.5 * std::sin(std::numbers::pi * x);
            }
            return v;
        });
        Eigen::MatrixXd rows(steps, space.size());
        for (int n = 0; n < steps; ++n) {
            const double t = T * n / steps;
            rows.row(n) = (1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * t)) * space.transpose();
        }
        return GProcess::time_varying(std::move(rows), name, m, q);
    }
    fail(ErrorKind::invalid_argument, "unknown multiplier preset '", name, "' (known: identity, const, bump, separable:sin)");
}

/// Reads g from CSV rows "t_index, xi_index..., value". A non-numeric first
/// line is treated as a header. Missing entries are an error.
inline GProcess g_from_csv(const std::string& path, const SpectralDomain& domain, double m, double q) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "cannot open multiplier CSV '", path, "'");
    }
    struct Entry {
        int t;
        std::vector<int> xi;
        double v;
    };
    std::vector<Entry> entries;
    std::string line;
    int line_no = 0;
    int max_t = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (static_cast<int>(cells.size()) != domain.dim() + 2) {
            fail(ErrorKind::io, path, ":", line_no, ": expected ", domain.dim() + 2, " columns, got ", cells.size());
        }
        Entry e{};
        try {
            e.t = std::stoi(cells[0]);
            for (int a = 0; a < domain.dim(); ++a) {
                e.xi.push_back(std::stoi(cells[static_cast<std::size_t>(a + 1)]));
            }
            e.v = std::stod(cells.back());
        } catch (const std::exception&) {
            if (line_no == 1) {
                continue;
            }
            fail(ErrorKind::io, path, ":", line_no, ": non-numeric entry");
        }
        for (int x : e.xi) {
            if (x < 0 || x >= domain.grid_size()) {
                fail(ErrorKind::io, path, ":", line_no, ": spatial index ", x, " outside [0, ", domain.grid_size(), ")");
            }
        }
        if (e.t < 0) {
            fail(ErrorKind::io, path, ":", line_no, ": negative time index");
        }
        max_t = std::max(max_t, e.t);
        entries.push_back(std::move(e));
    }
    if (entries.empty()) {
        fail(ErrorKind::io, "multiplier CSV '", path, "' has no entries");
    }
    const auto pts = static_cast<Eigen::Index>(domain.point_count());
    Eigen::MatrixXd rows = Eigen::MatrixXd::Constant(max_t + 1, pts, std::numeric_limits<double>::quiet_NaN());
    for (const auto& e : entries) {
        rows(e.t, static_cast<Eigen::Index>(domain.flat_index(e.xi))) = e.v;
    }
    if (rows.hasNaN()) {
        fail(ErrorKind::io, "multiplier CSV '", path, "' does not cover every (time, point) pair");
    }
    if (rows.rows() == 1) {
        return GProcess::constant(rows.row(0).transpose(), "csv:" + path, m, q);
    }
    return GProcess::time_varying(std::move(rows), "csv:" + path, m, q);
}

struct TimeGrid {
    double T = 1.0;
    int steps = 2;

    double dt() const { return T / steps; }
    double time(int n) const { return T * n / steps; }
};

/// Per-mode Wiener increment streams of one replica. Stream k depends only
/// on (seed, replica, k); `next` fills one time step across all modes.
class WienerIncrementSampler {
public:
    WienerIncrementSampler(int modes, double dt, std::uint64_t seed, std::uint64_t replica) : scale_(std::sqrt(dt)) {
        require(dt > 0.0, "time step must be positive");
        streams_.reserve(static_cast<std::size_t>(modes));
        for (int k = 0; k < modes; ++k) {
            streams_.emplace_back(seed, replica, static_cast<std::uint64_t>(k));
        }
    }

    /// Standard normal draws (increments divided by sqrt(dt)).
    template <typename Derived>
    void next_standard(Eigen::MatrixBase<Derived>&& out) {
        for (std::size_t k = 0; k < streams_.size(); ++k) {
            out(static_cast<Eigen::Index>(k)) = streams_[k]();
        }
    }

    double scale() const noexcept { return scale_; }

private:
    double scale_;
    std::vector<GaussianStream> streams_;
};

/// N x steps table of i.i.d. Normal(0, dt) increments, row k from stream k.
inline Eigen::MatrixXd sample_wiener_increments(const CameronMartinSpec& spec, const TimeGrid& grid,
                                                std::uint64_t seed, std::uint64_t replica) {
    require(grid.steps >= 1 && grid.T > 0.0, "time grid needs T > 0 and at least one step");
    WienerIncrementSampler sampler(spec.truncation, grid.dt(), seed, replica);
    Eigen::MatrixXd table(spec.truncation, grid.steps);
    for (int n = 0; n < grid.steps; ++n) {
        sampler.next_standard(table.col(n));
    }
    return table * sampler.scale();
}

/// y = sum_k coeffs_k h_k on the grid, multiplied pointwise by g(t_n, .).
inline GridFunction apply_G(const GProcess& G, const CameronMartinSpec& spec, int t_index,
                            const Eigen::VectorXd& coeffs) {
    require(coeffs.size() == spec.truncation, "coefficient vector has ", coeffs.size(), " entries, expected ",
            spec.truncation);
    GridFunction y = spec.basis() * coeffs;
    if (G.multiplies()) {
        y.array() *= G.row(t_index).array();
    }
    return y;
}

struct HypothesisClause {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct NoiseReport {
    std::vector<HypothesisClause> clauses;
    double p_colored = 0.0;   // p from 1/p = 1/2 - theta/d + 1/m (0 if undefined)

    bool all_passed() const {
        return std::all_of(clauses.begin(), clauses.end(), [](const HypothesisClause& c) { return c.passed; });
    }

    const HypothesisClause* find(const std::string& name) const {
        for (const auto& c : clauses) {
            if (c.name == name) {
                return &c;
            }
        }
        return nullptr;
    }

    std::string failures() const {
        std::string out;
        for (const auto& c : clauses) {
            if (!c.passed) {
                out += (out.empty() ? "" : "; ") + c.name + " (" + c.detail + ")";
            }
        }
        return out;
    }
};

/// Clause-by-clause check of the colored-noise hypotheses; never throws.
inline NoiseReport validate_noise_hypotheses(const GProcess& G, const CameronMartinSpec& spec, double p, int d) {
    NoiseReport rep;
    const double m = G.m;
    const double q = G.q;
    const double theta = spec.theta;
    const double floor_pd = std::max(2.0, static_cast<double>(d));
    auto add = [&](std::string name, bool ok, std::string detail) {
        rep.clauses.push_back({std::move(name), ok, std::move(detail)});
    };
    add("m > max{2,d}", m > floor_pd, detail::concat("m = ", m, ", max{2,d} = ", floor_pd));
    add("p in (max{2,d}, m]", p > floor_pd && p <= m, detail::concat("p = ", p, ", interval (", floor_pd, ", ", m, "]"));
    const double sum = d / m + 1.0 / q;
    add("d/m + 1/q < 1/2", sum < 0.5, detail::concat("d/m + 1/q = ", sum));
    const double lo = d / m + (d - 1) / 2.0 + 1.0 / q;
    const double hi = d / 2.0;
    add("theta window", theta > lo && theta < hi, detail::concat("theta = ", theta, ", window (", lo, ", ", hi, ")"));
    const double inv_p = 0.5 - theta / d + 1.0 / m;
    rep.p_colored = inv_p > 0.0 ? 1.0 / inv_p : 0.0;
    const bool consistent = inv_p > 0.0 && std::abs(1.0 / p - inv_p) <= 1e-12;
    add("p matches 1/p = 1/2 - theta/d + 1/m", consistent,
        detail::concat("p = ", p, ", colored-noise p = ", rep.p_colored));
    add("g bounded", G.bounded(), detail::concat("sup|g| = ", G.sup_norm()));
    return rep;
}

} // namespace hspde
