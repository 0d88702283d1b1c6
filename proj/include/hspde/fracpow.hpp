#pragma once

#include "hspde/domain.hpp"
#include "hspde/eigensystem.hpp"
#include "hspde/error.hpp"
#include "hspde/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

namespace hspde {

enum class FracPowerMethod { eigen, quadrature };

inline const char* to_string(FracPowerMethod m) {
    return m == FracPowerMethod::eigen ? "eigen" : "quadrature";
}

/// Parameters of a fractional-power evaluation. The resolvent integrals are
/// taken over t = e^s with s in [-cutoff_lo, cutoff_hi] by composite
/// Gauss-Legendre (panels of `panel_order` points); the two truncated tails
/// are added in closed form from their power series in lambda.
struct FracPowerRequest {
    Complex z{0.5, 0.0};
    FracPowerMethod method = FracPowerMethod::quadrature;
    int quad_nodes = 200;
    double cutoff_lo = 30.0;
    double cutoff_hi = 30.0;
    double tolerance = 1e-8;
    int panel_order = 20;

    void validate() const {
        require(std::abs(z.real()) <= 1.0, "fractional exponent needs |Re z| <= 1, got ", z);
        require(quad_nodes >= 2, "quadrature needs at least 2 nodes");
        require(panel_order >= 1, "panel order must be >= 1");
        require(cutoff_lo > 0.0 && cutoff_hi > 0.0, "log-domain cutoffs must be positive");
        require(tolerance > 0.0, "tolerance must be positive");
    }
};

struct FracPowerResult {
    ComplexGridFunction value;
    double error_estimate = 0.0;   // relative node-doubling discrepancy
    int nodes = 0;
    double cutoff_lo = 0.0;        // effective log-domain cutoffs
    double cutoff_hi = 0.0;

    GridFunction real() const { return EigenSystem::real_part_checked(value); }
};

/// sum_k lambda_k^z <dual_k, x> mode_k with the principal branch.
inline ComplexGridFunction frac_power_eigen(const EigenSystem& sys, Complex z, const ComplexGridFunction& x) {
    require(std::abs(z.real()) <= 1.0, "fractional exponent needs |Re z| <= 1, got ", z);
    return sys.apply_spectral([z](Complex lambda) { return std::pow(lambda, z); }, x);
}

inline GridFunction frac_power_eigen(const EigenSystem& sys, double z, const GridFunction& x) {
    return EigenSystem::real_part_checked(frac_power_eigen(sys, Complex(z, 0.0), x.cast<Complex>().eval()));
}

/// lambda_K^{-Re z} times the L2 norm of the part of x outside the resolved
/// span: the error of acting on the truncated subspace only.
inline double unresolved_tail_bound(const EigenSystem& sys, Complex z, const GridFunction& x) {
    const GridFunction tail = x - sys.project(x);
    const double lambda_k = std::abs(sys.eigenvalues()[sys.size() - 1]);
    return std::pow(lambda_k, -z.real()) * lp_norm(sys.domain(), tail, 2.0);
}

namespace detail {

enum class ResolventKernel { negative_power, forward_power };

struct LogQuadrature {
    QuadratureRule rule;
    double cutoff_lo;
    double cutoff_hi;
};

inline LogQuadrature make_log_quadrature(const EigenSystem& sys, const FracPowerRequest& req, int nodes) {
    const auto& lambda = sys.eigenvalues();
    const double lmin = lambda.cwiseAbs().minCoeff();
    const double lmax = lambda.cwiseAbs().maxCoeff();
    // The tail series converge geometrically with ratio e^{-L_lo}/|lambda|
    // and |lambda|/e^{L_hi}; keep both ratios <= 1/2.
    const double lo = std::max(req.cutoff_lo, -std::log(0.5 * lmin));
    const double hi = std::max(req.cutoff_hi, std::log(2.0 * lmax));
    const int order = std::min(req.panel_order, nodes);
    const int panels = std::max(1, nodes / order);
    return {composite_gauss_legendre(-lo, hi, panels, nodes / panels), lo, hi};
}

inline Complex tail_series(ResolventKernel kernel, Complex lambda, Complex z, double cutoff_lo, double cutoff_hi) {
    const double eps = std::exp(-cutoff_lo);
    const double big = std::exp(cutoff_hi);
    Complex lower{0.0, 0.0};
    Complex upper{0.0, 0.0};
    Complex eps_pow = std::pow(Complex(eps, 0.0), kernel == ResolventKernel::negative_power ? 1.0 - z : 1.0 + z);
    Complex big_pow = std::pow(Complex(big, 0.0), kernel == ResolventKernel::negative_power ? -z : z - 1.0);
    Complex inv_lambda_pow = 1.0 / lambda;
    Complex lambda_pow{1.0, 0.0};
    double sign = 1.0;
    for (int n = 0; n < 400; ++n) {
        Complex lo_term;
        Complex hi_term;
        if (kernel == ResolventKernel::negative_power) {
            // int_0^eps t^{-z}/(t+lambda) dt and int_E^inf t^{-z}/(t+lambda) dt
            lo_term = sign * eps_pow * inv_lambda_pow / (static_cast<double>(n) + 1.0 - z);
            hi_term = sign * lambda_pow * big_pow / (static_cast<double>(n) + z);
        } else {
            // int_0^eps t^z lambda/(t+lambda)^2 dt and int_E^inf of the same
            lo_term = sign * (n + 1.0) * eps_pow * inv_lambda_pow / (static_cast<double>(n) + 1.0 + z);
            hi_term = sign * (n + 1.0) * lambda * lambda_pow * big_pow / (static_cast<double>(n) + 1.0 - z);
        }
        lower += lo_term;
        upper += hi_term;
        if (std::abs(lo_term) <= 1e-18 * std::abs(lower) + 1e-300 &&
            std::abs(hi_term) <= 1e-18 * std::abs(upper) + 1e-300) {
            break;
        }
        eps_pow *= eps;
        big_pow /= big;
        inv_lambda_pow /= lambda;
        lambda_pow *= lambda;
        sign = -sign;
    }
    return lower + upper;
}

inline Complex resolvent_multiplier(ResolventKernel kernel, Complex lambda, Complex z, const LogQuadrature& q) {
    Complex integral{0.0, 0.0};
    for (std::size_t i = 0; i < q.rule.size(); ++i) {
        const double s = q.rule.nodes[i];
        const double t = std::exp(s);
        Complex f;
        if (kernel == ResolventKernel::negative_power) {
            f = std::exp((1.0 - z) * s) / (t + lambda);
        } else {
            const Complex denom = t + lambda;
            f = std::exp((1.0 + z) * s) * lambda / (denom * denom);
        }
        integral += q.rule.weights[i] * f;
    }
    integral += tail_series(kernel, lambda, z, q.cutoff_lo, q.cutoff_hi);
    const Complex sin_pz = std::sin(std::numbers::pi * z);
    if (kernel == ResolventKernel::negative_power) {
        return sin_pz / std::numbers::pi * integral;
    }
    return sin_pz / (std::numbers::pi * z) * integral;
}

inline FracPowerResult resolvent_power(ResolventKernel kernel, const EigenSystem& sys, const ComplexGridFunction& x,
                                       const FracPowerRequest& req) {
    req.validate();
    require(req.z.real() > 0.0 && req.z.real() < 1.0, "resolvent-integral powers need Re z in (0,1), got ", req.z);
    const Eigen::VectorXcd coeffs = sys.coefficients(x);

    auto evaluate = [&](int nodes, LogQuadrature& used) {
        used = make_log_quadrature(sys, req, nodes);
        Eigen::VectorXcd c = coeffs;
        for (Eigen::Index k = 0; k < c.size(); ++k) {
            c[k] *= resolvent_multiplier(kernel, sys.eigenvalues()[k], req.z, used);
        }
        return sys.synthesize(c);
    };

    LogQuadrature base;
    LogQuadrature doubled;
    ComplexGridFunction value = evaluate(req.quad_nodes, base);
    ComplexGridFunction check = evaluate(2 * req.quad_nodes, doubled);
    const double scale = check.norm();
    const double diff = (value - check).norm();
    const double rel = scale > 0.0 ? diff / scale : diff;
    if (rel > req.tolerance) {
        fail(ErrorKind::numerical, "quadrature node doubling disagrees: |v_", req.quad_nodes, "| = ", value.norm(),
             ", |v_", 2 * req.quad_nodes, "| = ", scale, ", relative difference ", rel, " > tolerance ", req.tolerance);
    }
    return {std::move(value), rel, static_cast<int>(base.rule.size()), base.cutoff_lo, base.cutoff_hi};
}

} // namespace detail

/// A^{-z} x = (sin(pi z)/pi) int_0^inf t^{-z} (tI + A)^{-1} x dt, Re z in (0,1),
/// with resolvents acting spectrally as 1/(t + lambda_k).
inline FracPowerResult frac_power_quadrature(const EigenSystem& sys, const ComplexGridFunction& x,
                                             const FracPowerRequest& req) {
    return detail::resolvent_power(detail::ResolventKernel::negative_power, sys, x, req);
}

inline FracPowerResult frac_power_quadrature(const EigenSystem& sys, const GridFunction& x,
                                             const FracPowerRequest& req) {
    return frac_power_quadrature(sys, x.cast<Complex>().eval(), req);
}

/// A^z x = (sin(pi z)/(pi z)) int_0^inf t^z (tI + A)^{-2} A x dt, Re z in (0,1).
inline FracPowerResult balakrishnan_forward(const EigenSystem& sys, const ComplexGridFunction& x,
                                            const FracPowerRequest& req) {
    return detail::resolvent_power(detail::ResolventKernel::forward_power, sys, x, req);
}

inline FracPowerResult balakrishnan_forward(const EigenSystem& sys, const GridFunction& x,
                                            const FracPowerRequest& req) {
    return balakrishnan_forward(sys, x.cast<Complex>().eval(), req);
}

/// Graph norm |x|_{L^p} + |A^delta x|_{L^p} of D(A^delta) on the grid.
inline double domain_norm(const EigenSystem& sys, double delta, const GridFunction& x, double p) {
    require(delta >= 0.0 && delta <= 1.0, "delta must lie in [0,1], got ", delta);
    const GridFunction powered = frac_power_eigen(sys, delta, x);
    return lp_norm(sys.domain(), x, p) + lp_norm(sys.domain(), powered, p);
}

/// Spectral operator norm of A^{is} restricted to the resolved span
/// (max_k |lambda_k^{is}|); equals 1 for a positive self-adjoint spectrum.
inline double imaginary_power_norm(const EigenSystem& sys, double s) {
    double norm = 0.0;
    for (Eigen::Index k = 0; k < sys.size(); ++k) {
        norm = std::max(norm, std::abs(std::pow(sys.eigenvalues()[k], Complex(0.0, s))));
    }
    return norm;
}

} // namespace hspde
