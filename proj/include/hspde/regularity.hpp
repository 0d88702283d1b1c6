#pragma once

#include "hspde/convolve.hpp"
#include "hspde/error.hpp"
#include "hspde/rational.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hspde {

enum class Theorem { prop32, remark33, colored, fractional };

inline const char* to_string(Theorem t) {
    switch (t) {
    case Theorem::prop32: return "prop32";
    case Theorem::remark33: return "remark33";
    case Theorem::colored: return "colored";
    case Theorem::fractional: return "fractional";
    }
    return "unknown";
}

inline Theorem theorem_from_string(const std::string& s) {
    if (s == "prop32") return Theorem::prop32;
    if (s == "remark33") return Theorem::remark33;
    if (s == "colored") return Theorem::colored;
    if (s == "fractional") return Theorem::fractional;
    fail(ErrorKind::invalid_argument, "unknown theorem '", s, "' (known: prop32, remark33, colored, fractional)");
}

struct RegularityQuery {
    int d = 1;
    double p = 4.0;
    double q = 8.0;
    double alpha = 2.0;
    std::optional<double> theta;
    std::optional<double> m;
    Theorem theorem = Theorem::prop32;

    void validate() const {
        require(d >= 1, "dimension must be >= 1");
        require(q >= 2.0, "q must be >= 2, got ", q);
        switch (theorem) {
        case Theorem::prop32:
        case Theorem::fractional:
            require(p > std::max(2.0, static_cast<double>(d)), "p must exceed max{2,d}, got p = ", p);
            require(alpha > 0.0 && alpha <= 2.0, "alpha must lie in (0,2], got ", alpha);
            break;
        case Theorem::remark33:
            require(theta.has_value(), "remark33 needs theta");
            require(*theta > d / 2.0 + 2.0 / q - 1.0, "remark33 needs theta > d/2 + 2/q - 1, got theta = ", *theta);
            break;
        case Theorem::colored:
            require(theta.has_value() && m.has_value(), "colored theorem needs theta and m");
            require(*m > 0.0, "m must be positive");
            break;
        }
    }

    /// Copy with theta raised by `delta` (used for inflated-budget queries).
    RegularityQuery inflated(double delta) const {
        RegularityQuery out = *this;
        require(theta.has_value(), "inflating the budget needs a theta-dependent theorem");
        out.theta = *theta + delta;
        return out;
    }
};

namespace detail {

template <typename Num>
struct QueryNumbers {
    Num d, p, q, alpha, theta, m;
};

template <typename Num>
Num to_num(double x);

template <>
inline double to_num<double>(double x) {
    return x;
}

template <>
inline Rational to_num<Rational>(double x) {
    const auto r = Rational::from_double(x);
    if (!r) {
        fail(ErrorKind::numerical, "value ", x, " is not representable as a rational");
    }
    return *r;
}

template <typename Num>
QueryNumbers<Num> numbers(const RegularityQuery& qy) {
    return {to_num<Num>(qy.d), to_num<Num>(qy.p), to_num<Num>(qy.q), to_num<Num>(qy.alpha),
            to_num<Num>(qy.theta.value_or(0.0)), to_num<Num>(qy.m.value_or(1.0))};
}

inline bool rational_inputs(const RegularityQuery& qy, std::initializer_list<double> extra) {
    auto ok = [](double x) { return Rational::from_double(x).has_value(); };
    bool all = ok(qy.p) && ok(qy.q) && ok(qy.alpha) && (!qy.theta || ok(*qy.theta)) && (!qy.m || ok(*qy.m));
    for (double x : extra) {
        all = all && ok(x);
    }
    return all;
}

/// Budget B and gamma weight c: admissible iff beta + c gamma < B.
template <typename Num>
std::pair<Num, Num> budget_of(const RegularityQuery& qy) {
    const auto n = numbers<Num>(qy);
    const Num one(1);
    const Num half = one / Num(2);
    switch (qy.theorem) {
    case Theorem::prop32:
        return {half - one / n.q - n.d / n.p, half};
    case Theorem::remark33:
        return {half * (one + n.theta) - one / n.q - n.d / Num(4), half};
    case Theorem::colored:
        return {n.theta + half - n.d * (half + one / n.m) - one / n.q, half};
    case Theorem::fractional:
        return {half - one / n.q - Num(2) * n.d / (n.alpha * n.p), one / n.alpha};
    }
    fail(ErrorKind::invalid_argument, "unknown theorem");
}

} // namespace detail

/// Budget B of the selected theorem (double view).
inline double budget(const RegularityQuery& qy) {
    qy.validate();
    if (detail::rational_inputs(qy, {})) {
        return detail::budget_of<Rational>(qy).first.to_double();
    }
    return detail::budget_of<double>(qy).first;
}

/// Exact budget when every input is rational.
inline std::optional<Rational> budget_exact(const RegularityQuery& qy) {
    qy.validate();
    if (!detail::rational_inputs(qy, {})) {
        return std::nullopt;
    }
    return detail::budget_of<Rational>(qy).first;
}

/// Strict inequality of the theorem: rational arithmetic when all inputs
/// are rational, otherwise a plain floating comparison.
inline bool admissible(const RegularityQuery& qy, double beta, double gamma) {
    qy.validate();
    if (detail::rational_inputs(qy, {beta, gamma})) {
        const auto [b, c] = detail::budget_of<Rational>(qy);
        const Rational bt = detail::to_num<Rational>(beta);
        const Rational gm = detail::to_num<Rational>(gamma);
        return bt + c * gm < b;
    }
    const auto [b, c] = detail::budget_of<double>(qy);
    return beta + c * gamma < b;
}

/// Largest gamma on the boundary at beta: (B - beta) / c.
inline double gamma_max(const RegularityQuery& qy, double beta) {
    qy.validate();
    const auto [b, c] = detail::budget_of<double>(qy);
    return (b - beta) / c;
}

struct BoundaryPoint {
    double beta = 0.0;
    double gamma_max = 0.0;
};

struct RegionBoundary {
    double budget = 0.0;
    double gamma_weight = 0.5;
    bool empty = false;
    std::vector<BoundaryPoint> points;
};

/// Segment gamma = (B - beta)/c for beta in [0, B]; empty when B <= 0.
inline RegionBoundary region_boundary(const RegularityQuery& qy, int samples = 21) {
    qy.validate();
    require(samples >= 2, "boundary needs at least 2 samples");
    const double c = detail::budget_of<double>(qy).second;
    RegionBoundary out;
    out.budget = budget(qy);
    out.gamma_weight = c;
    out.empty = !(out.budget > 0.0);
    if (out.empty) {
        return out;
    }
    for (int i = 0; i < samples; ++i) {
        const double beta = out.budget * i / (samples - 1);
        out.points.push_back({beta, std::max(0.0, (out.budget - beta) / c)});
    }
    return out;
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    std::optional<Rational> lo_exact;
    std::optional<Rational> hi_exact;

    double mid() const { return 0.5 * (lo + hi); }
};

struct ParameterSelection {
    double sigma = 0.0;
    double delta = 0.0;
    Interval sigma_interval;
    Interval delta_interval;
    std::optional<Rational> sigma_exact;
    std::optional<Rational> delta_exact;
};

namespace detail {

template <typename Num>
struct Selection {
    Num s_lo, s_hi, sigma, d_lo, d_hi, delta;
};

template <typename Num>
Selection<Num> select_in(const RegularityQuery& qy, const Num& beta, const Num& gamma) {
    auto n = numbers<Num>(qy);
    const Num one(1);
    const Num half = one / Num(2);
    const Num two(2);
    Selection<Num> s;
    if (qy.theorem == Theorem::fractional) {
        const Num base = (n.d / n.p + gamma) / n.alpha;
        s.s_lo = n.d / (n.alpha * n.p);
        s.s_hi = half - base - one / n.q - beta;
        s.sigma = (s.s_lo + s.s_hi) / two;
        s.d_lo = base;
        s.d_hi = half - one / n.q - beta - s.sigma;
    } else {
        // colored runs the prop32 recipe at 1/p = 1/2 - theta/d + 1/m
        const Num d_over_p = qy.theorem == Theorem::colored ? n.d * (half - n.theta / n.d + one / n.m) : n.d / n.p;
        s.s_lo = d_over_p / two;
        s.s_hi = half - one / n.q - d_over_p / two - gamma / two - beta;
        s.sigma = (s.s_lo + s.s_hi) / two;
        s.d_lo = d_over_p / two + gamma / two;
        s.d_hi = half - one / n.q - beta - s.sigma;
    }
    s.delta = (s.d_lo + s.d_hi) / two;
    return s;
}

inline double as_double(double x) { return x; }
inline double as_double(const Rational& x) { return x.to_double(); }

} // namespace detail

/// Midpoints of the sigma interval and then of the delta interval given
/// sigma. Requires an admissible (beta, gamma).
inline ParameterSelection select_sigma_delta(const RegularityQuery& qy, double beta, double gamma) {
    qy.validate();
    if (qy.theorem == Theorem::remark33) {
        fail(ErrorKind::invalid_argument, "remark33 carries no sigma/delta recipe");
    }
    require(admissible(qy, beta, gamma), "(beta, gamma) = (", beta, ", ", gamma, ") is not admissible for ",
            to_string(qy.theorem));
    ParameterSelection out;
    auto fill = [&](const auto& s) {
        out.sigma_interval.lo = detail::as_double(s.s_lo);
        out.sigma_interval.hi = detail::as_double(s.s_hi);
        out.delta_interval.lo = detail::as_double(s.d_lo);
        out.delta_interval.hi = detail::as_double(s.d_hi);
        out.sigma = detail::as_double(s.sigma);
        out.delta = detail::as_double(s.delta);
        if (!(s.s_lo < s.s_hi) || !(s.d_lo < s.d_hi)) {
            fail(ErrorKind::numerical, "internal consistency: empty sigma or delta interval for an admissible pair");
        }
    };
    if (detail::rational_inputs(qy, {beta, gamma})) {
        const auto s = detail::select_in<Rational>(qy, detail::to_num<Rational>(beta), detail::to_num<Rational>(gamma));
        fill(s);
        out.sigma_interval.lo_exact = s.s_lo;
        out.sigma_interval.hi_exact = s.s_hi;
        out.delta_interval.lo_exact = s.d_lo;
        out.delta_interval.hi_exact = s.d_hi;
        out.sigma_exact = s.sigma;
        out.delta_exact = s.delta;
    } else {
        fill(detail::select_in<double>(qy, beta, gamma));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exponent estimation

struct EstimatorOptions {
    int drop_low = 2;      // smallest dyadic levels discarded
    int drop_high = 2;     // largest dyadic levels discarded
    int max_level = -1;    // largest dyadic level; -1: largest lag <= (n - 1)/2
};

struct ExponentEstimate {
    double exponent = 0.0;           // median over paths, in [0, 1.5]
    std::vector<double> per_path;    // per replica (temporal) or per (time, replica) (spatial)
    std::vector<double> lags;        // lags used in the fit
    double fit_r2 = 0.0;             // median r^2 of the fits
    int excluded = 0;                // degenerate paths left out
};

struct SlopeFit {
    double slope = 0.0;
    double r2 = 0.0;
};

/// Least-squares slope of y on x with coefficient of determination.
inline SlopeFit least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "slope fit needs at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
    return fit;
}

inline double median(std::vector<double> v) {
    require(!v.empty(), "median of an empty collection");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace detail {

inline std::vector<int> dyadic_levels(Eigen::Index count, const EstimatorOptions& opt) {
    require(count >= 2, "need at least two samples along the lag axis");
    int top = 0;
    while (2 * (Eigen::Index{1} << (top + 1)) <= count - 1) {
        ++top;
    }
    if (opt.max_level >= 0) {
        top = std::min(top, opt.max_level);
    }
    std::vector<int> levels;
    for (int j = opt.drop_low; j <= top - opt.drop_high; ++j) {
        levels.push_back(j);
    }
    if (levels.size() < 2) {
        fail(ErrorKind::invalid_argument, "too few dyadic lag levels (", count,
             " samples) for the trimmed log-log fit");
    }
    return levels;
}

// Fits log M(h) against log h; empty when some M(h) vanishes.
inline std::optional<SlopeFit> fit_increments(const std::vector<double>& lags, const std::vector<double>& maxima) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < lags.size(); ++i) {
        if (!(maxima[i] > 0.0) || !std::isfinite(maxima[i])) {
            return std::nullopt;
        }
        x.push_back(std::log(lags[i]));
        y.push_back(std::log(maxima[i]));
    }
    SlopeFit f = least_squares_slope(x, y);
    f.slope = std::clamp(f.slope, 0.0, 1.5);
    return f;
}

inline ExponentEstimate aggregate(std::vector<double> slopes, std::vector<double> r2, std::vector<double> lags,
                                  int excluded) {
    if (slopes.empty()) {
        fail(ErrorKind::numerical, "every path is degenerate; no exponent can be estimated");
    }
    ExponentEstimate e;
    e.exponent = median(slopes);
    e.fit_r2 = median(r2);
    e.per_path = std::move(slopes);
    e.lags = std::move(lags);
    e.excluded = excluded;
    return e;
}

} // namespace detail

enum class TemporalMode { pointwise, sup_space };

/// Per replica M(h) = max_n |u(t_n + h) - u(t_n)| over dyadic lags, log-log
/// slope on the trimmed lag range, median over replicas.
inline ExponentEstimate estimate_temporal_exponent(const TrajectoryEnsemble& ens, TemporalMode mode,
                                                   Eigen::Index point = -1, const EstimatorOptions& opt = {}) {
    require(ens.time_count() >= 64, "temporal estimation needs >= 64 recorded times, got ", ens.time_count());
    if (point < 0) {
        point = ens.point_count() / 2;
    }
    require(point < ens.point_count(), "spatial point index out of range");
    const auto levels = detail::dyadic_levels(ens.time_count(), opt);
    const double dt = ens.times[1] - ens.times[0];
    std::vector<double> lags;
    for (int j : levels) {
        lags.push_back(dt * static_cast<double>(Eigen::Index{1} << j));
    }
    std::vector<double> slopes, r2;
    int excluded = 0;
    for (const auto& v : ens.values) {
        std::vector<double> maxima;
        for (int j : levels) {
            const Eigen::Index h = Eigen::Index{1} << j;
            const Eigen::Index n = ens.time_count() - h;
            double mx = 0.0;
            if (mode == TemporalMode::pointwise) {
                mx = (v.col(point).segment(h, n) - v.col(point).head(n)).cwiseAbs().maxCoeff();
            } else {
                mx = (v.middleRows(h, n) - v.topRows(n)).cwiseAbs().maxCoeff();
            }
            maxima.push_back(mx);
        }
        const auto fit = detail::fit_increments(lags, maxima);
        if (!fit) {
            ++excluded;
            continue;
        }
        slopes.push_back(fit->slope);
        r2.push_back(fit->r2);
    }
    return detail::aggregate(std::move(slopes), std::move(r2), std::move(lags), excluded);
}

/// Recorded time indices used for spatial estimation: `count` indices
/// evenly spread over (0, T], ending at the final time.
inline std::vector<Eigen::Index> spatial_time_selection(const TrajectoryEnsemble& ens, int count = 8) {
    const Eigen::Index last = ens.time_count() - 1;
    std::vector<Eigen::Index> out;
    for (int k = 0; k < count; ++k) {
        const Eigen::Index idx = std::max<Eigen::Index>(1, (last * (k + 1)) / count);
        if (out.empty() || out.back() != idx) {
            out.push_back(idx);
        }
    }
    return out;
}

/// Max increment over dyadic grid-index lags along every axis at each
/// selected time; slopes medianed over (times x replicas).
inline ExponentEstimate estimate_spatial_exponent(const TrajectoryEnsemble& ens, std::vector<Eigen::Index> times = {},
                                                  const EstimatorOptions& opt = {}) {
    require(!ens.space_shape.empty(), "ensemble has no spatial shape");
    const int side = ens.space_shape.front();
    require(side >= 33, "spatial estimation needs >= 33 recorded points per axis, got ", side);
    if (times.empty()) {
        times = spatial_time_selection(ens);
    }
    const auto levels = detail::dyadic_levels(side, opt);
    const double h0 = ens.points.rows() > 1 ? std::abs(ens.points(1, ens.dim() - 1) - ens.points(0, ens.dim() - 1)) : 1.0;
    std::vector<double> lags;
    for (int j : levels) {
        lags.push_back(h0 * static_cast<double>(Eigen::Index{1} << j));
    }
    const int d = ens.dim();
    std::vector<Eigen::Index> axis_stride(static_cast<std::size_t>(d), 1);
    for (int a = d - 2; a >= 0; --a) {
        axis_stride[static_cast<std::size_t>(a)] = axis_stride[static_cast<std::size_t>(a + 1)] * side;
    }
    std::vector<double> slopes, r2;
    int excluded = 0;
    for (Eigen::Index t : times) {
        require(t >= 0 && t < ens.time_count(), "selected time index out of range");
        for (const auto& v : ens.values) {
            const Eigen::VectorXd u = v.row(t).transpose();
            std::vector<double> maxima;
            for (int j : levels) {
                const Eigen::Index h = Eigen::Index{1} << j;
                double mx = 0.0;
                for (Eigen::Index flat = 0; flat < u.size(); ++flat) {
                    for (int a = 0; a < d; ++a) {
                        const Eigen::Index coord = (flat / axis_stride[static_cast<std::size_t>(a)]) % side;
                        if (coord + h < side) {
                            mx = std::max(mx, std::abs(u[flat + h * axis_stride[static_cast<std::size_t>(a)]] - u[flat]));
                        }
                    }
                }
                maxima.push_back(mx);
            }
            const auto fit = detail::fit_increments(lags, maxima);
            if (!fit) {
                ++excluded;
                continue;
            }
            slopes.push_back(fit->slope);
            r2.push_back(fit->r2);
        }
    }
    return detail::aggregate(std::move(slopes), std::move(r2), std::move(lags), excluded);
}

// ---------------------------------------------------------------------------
// Verification

inline constexpr double kExponentTolerance = 0.10;
inline constexpr int kVertexGrid = 5;

struct Vertex {
    double beta = 0.0;
    double gamma = 0.0;
    double beta_margin = 0.0;    // beta_hat + tol - beta
    double gamma_margin = 0.0;   // gamma_hat + tol - gamma
    bool ok = false;
};

/// Cell-centre grid over the admissible triangle: beta = f_i B and
/// gamma = f_j gamma_max(beta), f = (k + 1/2)/n.
inline std::vector<Vertex> admissible_vertices(const RegularityQuery& qy, int n = kVertexGrid) {
    const double b = budget(qy);
    std::vector<Vertex> out;
    if (!(b > 0.0)) {
        return out;
    }
    for (int i = 0; i < n; ++i) {
        const double beta = b * (i + 0.5) / n;
        for (int j = 0; j < n; ++j) {
            Vertex v;
            v.beta = beta;
            v.gamma = gamma_max(qy, beta) * (j + 0.5) / n;
            out.push_back(v);
        }
    }
    return out;
}

struct VerifyOptions {
    double tolerance = kExponentTolerance;
    bool check_provenance = true;
    EstimatorOptions estimator;
};

struct Verdict {
    bool pass = false;
    bool empty_region = false;
    std::string note;
    Theorem theorem = Theorem::prop32;
    double budget = 0.0;
    double tolerance = kExponentTolerance;
    ExponentEstimate beta_hat;
    ExponentEstimate gamma_hat;
    std::vector<Vertex> vertices;
    double min_beta_margin = 0.0;
    double min_gamma_margin = 0.0;
};

/// Errors when the ensemble was not generated under the query's parameters.
inline void check_provenance(const TrajectoryEnsemble& ens, const RegularityQuery& qy) {
    const PlanEcho& e = ens.plan;
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
    if (e.dim != qy.d) {
        fail(ErrorKind::invalid_argument, "provenance mismatch: ensemble d = ", e.dim, ", query d = ", qy.d);
    }
    if (!close(e.alpha, qy.alpha)) {
        fail(ErrorKind::invalid_argument, "provenance mismatch: ensemble alpha = ", e.alpha, ", query alpha = ", qy.alpha);
    }
    if (qy.theta && !close(e.theta, *qy.theta)) {
        fail(ErrorKind::invalid_argument, "provenance mismatch: ensemble theta = ", e.theta, ", query theta = ", *qy.theta);
    }
    if (qy.m && !close(e.m, *qy.m)) {
        fail(ErrorKind::invalid_argument, "provenance mismatch: ensemble m = ", e.m, ", query m = ", *qy.m);
    }
    if (std::isfinite(e.q) && !close(e.q, qy.q)) {
        fail(ErrorKind::invalid_argument, "provenance mismatch: ensemble q = ", e.q, ", query q = ", qy.q);
    }
}

inline Verdict verify_region(const TrajectoryEnsemble& ens, const RegularityQuery& qy, const VerifyOptions& opt = {}) {
    qy.validate();
    if (opt.check_provenance) {
        check_provenance(ens, qy);
    }
    Verdict v;
    v.theorem = qy.theorem;
    v.tolerance = opt.tolerance;
    v.budget = budget(qy);
    v.beta_hat = estimate_temporal_exponent(ens, TemporalMode::sup_space, -1, opt.estimator);
    v.gamma_hat = estimate_spatial_exponent(ens, {}, opt.estimator);
    v.vertices = admissible_vertices(qy);
    if (v.vertices.empty()) {
        v.empty_region = true;
        v.pass = true;
        v.note = "empty region: budget <= 0, verdict is vacuous";
        return v;
    }
    v.pass = true;
    v.min_beta_margin = std::numeric_limits<double>::infinity();
    v.min_gamma_margin = std::numeric_limits<double>::infinity();
    for (auto& x : v.vertices) {
        x.beta_margin = v.beta_hat.exponent + opt.tolerance - x.beta;
        x.gamma_margin = v.gamma_hat.exponent + opt.tolerance - x.gamma;
        x.ok = x.beta_margin >= 0.0 && x.gamma_margin >= 0.0;
        v.pass = v.pass && x.ok;
        v.min_beta_margin = std::min(v.min_beta_margin, x.beta_margin);
        v.min_gamma_margin = std::min(v.min_gamma_margin, x.gamma_margin);
    }
    v.note = v.pass ? "all vertices within tolerance" : "at least one vertex exceeds the estimated exponents";
    return v;
}

} // namespace hspde
