#pragma once

#include "hspde/domain.hpp"
#include "hspde/error.hpp"
#include "hspde/noise.hpp"
#include "hspde/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace hspde {

enum class OperatorKind { identity_embedding, multiplication, generic_matrix };

inline const char* to_string(OperatorKind kind) {
    switch (kind) {
    case OperatorKind::identity_embedding: return "identity-embedding";
    case OperatorKind::multiplication: return "multiplication";
    case OperatorKind::generic_matrix: return "generic-matrix";
    }
    return "unknown";
}

/// Target Banach space E: L^p over points with a uniform quadrature weight.
/// The Euclidean (Hilbert) target is p = 2 with unit weight.
struct TargetSpace {
    double p = 2.0;
    double weight = 1.0;

    static TargetSpace hilbert() { return {2.0, 1.0}; }
    static TargetSpace grid_lp(const SpectralDomain& domain, double p) { return {p, domain.cell_weight()}; }

    template <typename Derived>
    double norm(const Eigen::MatrixBase<Derived>& v) const {
        return lp_norm(v, p, weight);
    }
};

/// R: H -> E truncated to the first N vectors of an orthonormal basis of H,
/// stored by its columns R e_k.
class FiniteRankOperator {
public:
    FiniteRankOperator(Eigen::MatrixXd columns, OperatorKind kind = OperatorKind::generic_matrix)
        : columns_(std::move(columns)), kind_(kind) {
        require(columns_.cols() >= 1, "finite-rank operator needs at least one input direction");
        require(columns_.allFinite(), "finite-rank operator has non-finite entries");
    }

    static FiniteRankOperator identity(Eigen::Index n) {
        return FiniteRankOperator(Eigen::MatrixXd::Identity(n, n), OperatorKind::identity_embedding);
    }

    /// y -> [e_1, y] f.
    static FiniteRankOperator rank_one(const GridFunction& f, Eigen::Index input_dim) {
        Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(f.size(), input_dim);
        cols.col(0) = f;
        return FiniteRankOperator(std::move(cols), OperatorKind::generic_matrix);
    }

    Eigen::Index input_dim() const noexcept { return columns_.cols(); }
    Eigen::Index output_dim() const noexcept { return columns_.rows(); }
    OperatorKind kind() const noexcept { return kind_; }
    const Eigen::MatrixXd& matrix() const noexcept { return columns_; }

    GridFunction apply(const Eigen::VectorXd& y) const {
        require(y.size() == input_dim(), "coefficient vector has ", y.size(), " entries, expected ", input_dim());
        return columns_ * y;
    }

    /// S2 R S1 with S1 acting on coefficient vectors of H' and S2 on E.
    FiniteRankOperator sandwiched(const Eigen::MatrixXd& s2, const Eigen::MatrixXd& s1) const {
        require(s2.cols() == output_dim(), "S2 has ", s2.cols(), " columns, expected ", output_dim());
        require(s1.rows() == input_dim(), "S1 has ", s1.rows(), " rows, expected ", input_dim());
        return FiniteRankOperator(s2 * columns_ * s1, OperatorKind::generic_matrix);
    }

private:
    Eigen::MatrixXd columns_;
    OperatorKind kind_;
};

/// Nemytskii-type operator y -> m * y on the grid, where y is synthesized
/// from the first N vectors of the H^{theta,2} orthonormal basis.
struct MultiplicationOperator {
    SpectralDomain domain;
    GridFunction multiplier;
    double theta = 0.0;
    int truncation = 16;

    FiniteRankOperator at_truncation(int n) const {
        require(multiplier.size() == static_cast<Eigen::Index>(domain.point_count()),
                "multiplier must be sampled on the grid");
        const CameronMartinSpec h{domain, theta, n};
        return FiniteRankOperator(multiplier.asDiagonal() * h.basis(), OperatorKind::multiplication);
    }

    FiniteRankOperator materialize() const { return at_truncation(truncation); }
};

struct GammaNormEstimate {
    double value = 0.0;        // sqrt of the mean squared norm
    double mean_square = 0.0;
    double std_error = 0.0;    // jackknife standard error of value^2
    long samples = 0;
    Eigen::Index truncation = 0;

    /// Standard error of value by the delta method.
    double value_std_error() const { return value > 0.0 ? std_error / (2.0 * value) : 0.0; }
};

inline constexpr int kJackknifeBlocks = 20;

/// Monte-Carlo estimate of ||R||_gamma = (E |sum_k g_k R e_k|_E^2)^{1/2}
/// with i.i.d. standard Gaussians g_k. Deterministic given the seed.
inline GammaNormEstimate mc_gamma_norm(const FiniteRankOperator& op, const TargetSpace& target, long samples,
                                       std::uint64_t seed) {
    require(samples >= 100, "gamma-norm estimation needs at least 100 samples, got ", samples);
    require(target.p >= 1.0, "target exponent must be >= 1");
    const Eigen::Index n = op.input_dim();
    GaussianStream rng(seed);

    std::vector<double> block_sum(kJackknifeBlocks, 0.0);
    std::vector<long> block_count(kJackknifeBlocks, 0);
    constexpr long batch = 256;
    Eigen::MatrixXd draws(n, batch);
    long done = 0;
    while (done < samples) {
        const long b = std::min(batch, samples - done);
        for (long j = 0; j < b; ++j) {
            for (Eigen::Index k = 0; k < n; ++k) {
                draws(k, j) = rng();
            }
        }
        const Eigen::MatrixXd images = op.matrix() * draws.leftCols(b);
        for (long j = 0; j < b; ++j) {
            const double nrm = target.norm(images.col(j));
            const double sq = nrm * nrm;
            if (!std::isfinite(sq)) {
                fail(ErrorKind::numerical, "non-finite sample norm in gamma-norm estimation (unbounded action)");
            }
            const long idx = done + j;
            const auto block = static_cast<std::size_t>(idx * kJackknifeBlocks / samples);
            block_sum[block] += sq;
            ++block_count[block];
        }
        done += b;
    }

    double total = 0.0;
    for (double s : block_sum) {
        total += s;
    }
    GammaNormEstimate est;
    est.samples = samples;
    est.truncation = n;
    est.mean_square = total / static_cast<double>(samples);
    est.value = std::sqrt(est.mean_square);

    std::vector<double> loo(kJackknifeBlocks);
    double loo_mean = 0.0;
    for (int b = 0; b < kJackknifeBlocks; ++b) {
        loo[static_cast<std::size_t>(b)] =
            (total - block_sum[static_cast<std::size_t>(b)]) / static_cast<double>(samples - block_count[static_cast<std::size_t>(b)]);
        loo_mean += loo[static_cast<std::size_t>(b)];
    }
    loo_mean /= kJackknifeBlocks;
    double ss = 0.0;
    for (double v : loo) {
        ss += (v - loo_mean) * (v - loo_mean);
    }
    est.std_error = std::sqrt((kJackknifeBlocks - 1.0) / kJackknifeBlocks * ss);
    return est;
}

/// Largest singular value by power iteration on A^T A.
inline double spectral_norm(const Eigen::MatrixXd& a, double tolerance = 1e-8, int max_iterations = 100000) {
    if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) {
        return 0.0;
    }
    Eigen::VectorXd v(a.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
    }
    v.normalize();
    double sigma = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::VectorXd w = a.transpose() * (a * v);
        const double nw = w.norm();
        if (nw == 0.0) {
            // Start vector in the kernel; restart from a canonical direction.
            v = Eigen::VectorXd::Unit(a.cols(), it % a.cols());
            continue;
        }
        const double next = std::sqrt(nw);
        v = w / nw;
        if (std::abs(next - sigma) <= tolerance * next) {
            return next;
        }
        sigma = next;
    }
    return sigma;
}

struct OperatorNorm {
    double value = 0.0;
    bool exact = true;   // false: Riesz-Thorin upper bound
};

/// Norm of a square matrix acting on uniformly weighted L^p over its index
/// set: exact for diagonal matrices and for p = 2, otherwise the
/// Riesz-Thorin bound ||S||_1^{1/p} ||S||_inf^{1-1/p}.
inline OperatorNorm lp_operator_norm(const Eigen::MatrixXd& s, double p) {
    if (s.rows() == s.cols() && (s - Eigen::MatrixXd(s.diagonal().asDiagonal())).isZero(0.0)) {
        return {s.diagonal().size() ? s.diagonal().cwiseAbs().maxCoeff() : 0.0, true};
    }
    if (p == 2.0) {
        return {spectral_norm(s), true};
    }
    const double n1 = s.cwiseAbs().colwise().sum().maxCoeff();
    const double ninf = s.cwiseAbs().rowwise().sum().maxCoeff();
    if (std::isinf(p)) {
        return {ninf, true};
    }
    return {std::pow(n1, 1.0 / p) * std::pow(ninf, 1.0 - 1.0 / p), false};
}

struct DominationReport {
    GridFunction envelope;        // sup_{|y|_H = 1} |(R y)(xi)|
    GridFunction dominating;      // g used at truncation N
    double mc_norm = 0.0;
    double g_norm = 0.0;
    double ratio = 0.0;
    double mc_norm_doubled = 0.0;
    double g_norm_doubled = 0.0;
    double ratio_doubled = 0.0;
    double ratio_change = 0.0;    // |ratio_2N / ratio_N - 1|
    bool stable = false;          // ratio_change < 10%
    int truncation = 0;
};

namespace detail {

// Exact pointwise envelope: the row norms of the column matrix.
inline GridFunction domination_envelope(const FiniteRankOperator& r) {
    return r.matrix().rowwise().norm();
}

inline double checked_ratio(double num, double den) {
    if (den == 0.0) {
        if (num == 0.0) {
            return 0.0;
        }
        fail(ErrorKind::numerical, "domination ratio is infinite (|g|_p = 0 with nonzero gamma norm)");
    }
    return num / den;
}

} // namespace detail

/// Checks |(R y)(xi)| <= |y|_H g(xi) on the grid and reports
/// ||R||_gamma / |g|_{L^p} at truncations N and 2N. Without a supplied g
/// the exact envelope is used as the dominating function.
inline DominationReport check_domination_bound(const MultiplicationOperator& op, std::optional<GridFunction> g,
                                               double p, long samples, std::uint64_t seed) {
    const TargetSpace target = TargetSpace::grid_lp(op.domain, p);
    const FiniteRankOperator r = op.materialize();
    DominationReport rep;
    rep.truncation = op.truncation;
    rep.envelope = detail::domination_envelope(r);
    rep.dominating = g ? *g : rep.envelope;
    require(rep.dominating.size() == rep.envelope.size(), "dominating function must be sampled on the grid");
    for (Eigen::Index j = 0; j < rep.envelope.size(); ++j) {
        if (rep.envelope[j] > rep.dominating[j] * (1.0 + 1e-12) + 1e-300) {
            const auto xi = op.domain.point(static_cast<std::size_t>(j));
            fail(ErrorKind::hypothesis, "domination violated at grid point ", j, " (xi_0 = ", xi[0],
                 "): envelope ", rep.envelope[j], " > g = ", rep.dominating[j]);
        }
    }
    const GammaNormEstimate est = mc_gamma_norm(r, target, samples, seed);
    rep.mc_norm = est.value;
    rep.g_norm = target.norm(rep.dominating);
    rep.ratio = detail::checked_ratio(rep.mc_norm, rep.g_norm);

    const FiniteRankOperator r2 = op.at_truncation(2 * op.truncation);
    const GridFunction env2 = detail::domination_envelope(r2);
    GridFunction dom2 = env2;
    if (g && ((g->array() * (1.0 + 1e-12)) >= env2.array()).all()) {
        dom2 = *g;
    }
    const GammaNormEstimate est2 = mc_gamma_norm(r2, target, samples, seed);
    rep.mc_norm_doubled = est2.value;
    rep.g_norm_doubled = target.norm(dom2);
    rep.ratio_doubled = detail::checked_ratio(rep.mc_norm_doubled, rep.g_norm_doubled);
    rep.ratio_change = rep.ratio == 0.0 ? std::abs(rep.ratio_doubled) : std::abs(rep.ratio_doubled / rep.ratio - 1.0);
    rep.stable = std::isfinite(rep.ratio) && rep.ratio_change < 0.10;
    return rep;
}

struct IdealReport {
    GammaNormEstimate left;       // ||S2 R S1||_gamma
    GammaNormEstimate inner;      // ||R||_gamma
    OperatorNorm s1_norm;
    OperatorNorm s2_norm;
    double right = 0.0;           // ||S2|| ||R||_gamma ||S1||
    double combined_rel_error = 0.0;
    bool holds = false;
};

/// ||S2 R S1||_gamma <= ||S2|| ||R||_gamma ||S1||, checked up to three
/// combined relative standard errors. Both sides share the Gaussian stream.
inline IdealReport check_ideal_property(const Eigen::MatrixXd& s2, const FiniteRankOperator& r,
                                        const Eigen::MatrixXd& s1, const TargetSpace& target, long samples,
                                        std::uint64_t seed) {
    IdealReport rep;
    rep.left = mc_gamma_norm(r.sandwiched(s2, s1), target, samples, seed);
    rep.inner = mc_gamma_norm(r, target, samples, seed);
    rep.s1_norm = {spectral_norm(s1), true};
    rep.s2_norm = lp_operator_norm(s2, target.p);
    rep.right = rep.s2_norm.value * rep.inner.value * rep.s1_norm.value;
    const double rl = rep.left.value > 0.0 ? rep.left.value_std_error() / rep.left.value : 0.0;
    const double rr = rep.inner.value > 0.0 ? rep.inner.value_std_error() / rep.inner.value : 0.0;
    rep.combined_rel_error = std::sqrt(rl * rl + rr * rr);
    rep.holds = rep.left.value <= rep.right * (1.0 + 3.0 * rep.combined_rel_error);
    if (!rep.holds) {
        fail(ErrorKind::verification, "ideal property violated: ||S2 R S1||_gamma = ", rep.left.value, " (+/- ",
             rep.left.value_std_error(), ") > ||S2|| ||R|| ||S1|| = ", rep.right, " (||R||_gamma = ", rep.inner.value,
             " +/- ", rep.inner.value_std_error(), ")");
    }
    return rep;
}

} // namespace hspde
