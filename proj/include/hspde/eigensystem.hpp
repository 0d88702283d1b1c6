#pragma once

#include "hspde/domain.hpp"
#include "hspde/error.hpp"
#include "hspde/operator_spec.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace hspde {

inline constexpr double kBiorthogonalityTolerance = 1e-8;
inline constexpr double kConditionLimit = 1e8;
inline constexpr double kShiftMargin = 1.0;
inline constexpr double kImaginaryTolerance = 1e-10;

struct EigenDiagnostics {
    double biorthogonality_residual = 0.0;
    double condition_number = 1.0;
    double requested_shift = 0.0;
    double effective_shift = 0.0;
    bool shift_adjusted = false;
};

/// Truncated spectral representation of a discretized positive operator A:
/// eigenvalues lambda_k, right eigenvectors (modes) sampled on the grid and
/// the bi-orthogonal dual system, paired through the weighted bilinear form
///   <f, g> = w * sum_j f_j g_j,  w = 1/(M+1)^d.
///
/// Immutable after construction and safe to share between threads.
class EigenSystem {
public:
    EigenSystem(SpectralDomain domain, Eigen::VectorXcd eigenvalues, Eigen::MatrixXcd modes,
                Eigen::MatrixXcd dual_modes, bool selfadjoint, EigenDiagnostics diagnostics = {},
                std::vector<MultiIndex> indices = {}, std::string label = "custom")
        : domain_(std::move(domain)),
          eigenvalues_(std::move(eigenvalues)),
          modes_(std::move(modes)),
          dual_(std::move(dual_modes)),
          selfadjoint_(selfadjoint),
          diagnostics_(diagnostics),
          indices_(std::move(indices)),
          label_(std::move(label)) {
        const auto n = static_cast<Eigen::Index>(domain_.point_count());
        require(eigenvalues_.size() >= 1, "eigen system needs at least one mode");
        require(modes_.rows() == n && dual_.rows() == n, "modes must be sampled on all ", n, " grid points");
        require(modes_.cols() == eigenvalues_.size() && dual_.cols() == eigenvalues_.size(),
                "mode/eigenvalue count mismatch");
        for (Eigen::Index k = 0; k < eigenvalues_.size(); ++k) {
            if (!(eigenvalues_[k].real() > 0.0)) {
                fail(ErrorKind::numerical, "eigenvalue ", k, " = ", eigenvalues_[k], " is not in the right half-plane");
            }
        }
        const Eigen::MatrixXcd gram = domain_.cell_weight() * (dual_.transpose() * modes_);
        const double residual =
            (gram - Eigen::MatrixXcd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
        diagnostics_.biorthogonality_residual = residual;
        if (residual > kBiorthogonalityTolerance) {
            fail(ErrorKind::numerical, "bi-orthogonality residual ", residual, " exceeds ", kBiorthogonalityTolerance);
        }
        real_ = eigenvalues_.imag().isZero(0.0) && modes_.imag().isZero(0.0) && dual_.imag().isZero(0.0);
    }

    const SpectralDomain& domain() const noexcept { return domain_; }
    const Eigen::VectorXcd& eigenvalues() const noexcept { return eigenvalues_; }
    const Eigen::MatrixXcd& modes() const noexcept { return modes_; }
    const Eigen::MatrixXcd& dual_modes() const noexcept { return dual_; }
    Eigen::Index size() const noexcept { return eigenvalues_.size(); }
    bool is_selfadjoint() const noexcept { return selfadjoint_; }
    /// Eigenvalues, modes and duals carry no imaginary part.
    bool is_real() const noexcept { return real_; }
    const EigenDiagnostics& diagnostics() const noexcept { return diagnostics_; }
    double effective_shift() const noexcept { return diagnostics_.effective_shift; }
    const std::vector<MultiIndex>& multi_indices() const noexcept { return indices_; }
    const std::string& label() const noexcept { return label_; }

    double min_real_eigenvalue() const { return eigenvalues_.real().minCoeff(); }

    /// <dual_k, x> for every resolved mode k.
    template <typename Derived>
    Eigen::VectorXcd coefficients(const Eigen::MatrixBase<Derived>& x) const {
        require(x.size() == modes_.rows(), "grid function has ", x.size(), " entries, expected ", modes_.rows());
        return domain_.cell_weight() * (dual_.transpose() * x.template cast<Complex>());
    }

    ComplexGridFunction synthesize(const Eigen::VectorXcd& coeffs) const {
        require(coeffs.size() == size(), "coefficient vector has ", coeffs.size(), " entries, expected ", size());
        return modes_ * coeffs;
    }

    /// Real part of a synthesized function; the imaginary part must be
    /// below 1e-10 relative to the real part's scale.
    static GridFunction real_part_checked(const ComplexGridFunction& v) {
        if (v.size() == 0) {
            return GridFunction();
        }
        const double scale = std::max(1.0, v.real().cwiseAbs().maxCoeff());
        const double imag = v.imag().cwiseAbs().maxCoeff();
        if (imag > kImaginaryTolerance * scale) {
            fail(ErrorKind::numerical, "synthesized grid function has imaginary part ", imag,
                 " (conjugate-pair symmetry broken)");
        }
        return v.real();
    }

    /// Applies f(lambda_k) to each spectral coefficient of x.
    template <typename F, typename Derived>
    ComplexGridFunction apply_spectral(F&& f, const Eigen::MatrixBase<Derived>& x) const {
        Eigen::VectorXcd c = coefficients(x);
        for (Eigen::Index k = 0; k < c.size(); ++k) {
            c[k] *= f(eigenvalues_[k]);
        }
        return synthesize(c);
    }

    /// Spectral projection onto the resolved span.
    GridFunction project(const GridFunction& x) const {
        return real_part_checked(synthesize(coefficients(x)));
    }

private:
    SpectralDomain domain_;
    Eigen::VectorXcd eigenvalues_;
    Eigen::MatrixXcd modes_;
    Eigen::MatrixXcd dual_;
    bool selfadjoint_;
    bool real_ = false;
    EigenDiagnostics diagnostics_;
    std::vector<MultiIndex> indices_;
    std::string label_;
};

/// Closed-form Dirichlet spectrum on (0,1)^d: lambda_k = shift + pi^2 |k|^2
/// with tensor-sine modes, k in [1, K]^d ordered by eigenvalue.
inline EigenSystem build_laplacian_system(const SpectralDomain& domain, double shift = 0.0) {
    require(shift >= 0.0 && std::isfinite(shift), "shift must be finite and >= 0, got ", shift);
    const auto indices = laplacian_multi_indices(domain.dim(), domain.mode_cutoff());
    const auto n = static_cast<Eigen::Index>(domain.point_count());
    const auto K = static_cast<Eigen::Index>(indices.size());
    Eigen::VectorXcd lambda(K);
    Eigen::MatrixXcd modes(n, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        lambda[k] = shift + laplacian_eigenvalue(indices[static_cast<std::size_t>(k)]);
        modes.col(k) = sine_mode(domain, indices[static_cast<std::size_t>(k)]).cast<Complex>();
    }
    EigenDiagnostics diag;
    diag.requested_shift = shift;
    diag.effective_shift = shift;
    Eigen::MatrixXcd dual = modes;
    return EigenSystem(domain, std::move(lambda), std::move(modes), std::move(dual), true, diag, indices,
                       "laplacian");
}

/// Self-adjoint system with the Laplacian's leading modes but prescribed
/// eigenvalues. Used for model spectra such as {1, 4, 9}.
inline EigenSystem synthetic_system(const SpectralDomain& domain, const std::vector<double>& eigenvalues) {
    const auto indices = laplacian_multi_indices(domain.dim(), domain.mode_cutoff());
    require(!eigenvalues.empty() && eigenvalues.size() <= indices.size(), "synthetic system needs between 1 and ",
            indices.size(), " eigenvalues");
    const auto n = static_cast<Eigen::Index>(domain.point_count());
    const auto K = static_cast<Eigen::Index>(eigenvalues.size());
    Eigen::VectorXcd lambda(K);
    Eigen::MatrixXcd modes(n, K);
    std::vector<MultiIndex> used(indices.begin(), indices.begin() + K);
    for (Eigen::Index k = 0; k < K; ++k) {
        lambda[k] = eigenvalues[static_cast<std::size_t>(k)];
        modes.col(k) = sine_mode(domain, used[static_cast<std::size_t>(k)]).cast<Complex>();
    }
    Eigen::MatrixXcd dual = modes;
    return EigenSystem(domain, std::move(lambda), std::move(modes), std::move(dual), true, {}, std::move(used),
                       "synthetic");
}

/// Central finite-difference matrix of -a u'' + b u' + (c + shift) u on the
/// interior points of (0,1) with zero Dirichlet rows eliminated.
inline Eigen::MatrixXd finite_difference_matrix(const SpectralDomain& domain, const EllipticOperatorSpec& spec) {
    require(domain.dim() == 1, "finite-difference assembly is one-dimensional");
    const int M = domain.grid_size();
    const double h = domain.spacing();
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(M, M);
    for (int j = 0; j < M; ++j) {
        const double a = spec.a[static_cast<std::size_t>(j)](0, 0);
        const double b = spec.b[static_cast<std::size_t>(j)][0];
        L(j, j) = 2.0 * a / (h * h) + spec.c[j] + spec.shift;
        if (j > 0) {
            L(j, j - 1) = -a / (h * h) - b / (2.0 * h);
        }
        if (j + 1 < M) {
            L(j, j + 1) = -a / (h * h) + b / (2.0 * h);
        }
    }
    return L;
}

namespace detail {

// Rotates v so that its first significant entry is real positive; keeps
// conjugate eigenvector pairs conjugate.
inline void normalize_phase(Eigen::Ref<Eigen::VectorXcd> v) {
    const double vmax = v.cwiseAbs().maxCoeff();
    Eigen::Index pivot = 0;
    while (pivot < v.size() && std::abs(v[pivot]) <= 1e-8 * vmax) {
        ++pivot;
    }
    if (pivot == v.size()) {
        return;
    }
    v *= std::conj(v[pivot]) / std::abs(v[pivot]);
    v[pivot] = std::abs(v[pivot]);
}

} // namespace detail

/// Dense eigen-decomposition of the 1D variable-coefficient operator.
/// Keeps the K modes of smallest real part. If the requested shift leaves
/// an eigenvalue with Re <= 0, the shift is raised so that the smallest
/// real part equals 1.0 and the adjustment is recorded in the diagnostics.
inline EigenSystem build_variable_coefficient_system(const SpectralDomain& domain, const EllipticOperatorSpec& spec) {
    require(domain.dim() == 1, "variable-coefficient systems are restricted to d = 1");
    spec.validate(domain);
    const int M = domain.grid_size();
    const int K = domain.mode_cutoff();
    const double w = domain.cell_weight();
    const Eigen::MatrixXd L = finite_difference_matrix(domain, spec);

    const bool symmetric = (L - L.transpose()).cwiseAbs().maxCoeff() == 0.0;
    Eigen::VectorXcd lambda_all;
    Eigen::MatrixXcd vectors;
    if (symmetric) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
        if (es.info() != Eigen::Success) {
            fail(ErrorKind::numerical, "symmetric eigensolver failed");
        }
        lambda_all = es.eigenvalues().cast<Complex>();
        vectors = es.eigenvectors().cast<Complex>();
    } else {
        Eigen::EigenSolver<Eigen::MatrixXd> es(L, true);
        if (es.info() != Eigen::Success) {
            fail(ErrorKind::numerical, "non-symmetric eigensolver failed");
        }
        lambda_all = es.eigenvalues();
        vectors = es.eigenvectors();
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(M));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
        const Complex a = lambda_all[i];
        const Complex b = lambda_all[j];
        if (a.real() != b.real()) {
            return a.real() < b.real();
        }
        return a.imag() < b.imag();
    });

    Eigen::VectorXcd lambda(M);
    Eigen::MatrixXcd V(M, M);
    for (int k = 0; k < M; ++k) {
        const auto src = order[static_cast<std::size_t>(k)];
        lambda[k] = lambda_all[src];
        Eigen::VectorXcd v = vectors.col(src);
        v /= std::sqrt(w) * v.norm();
        detail::normalize_phase(v);
        V.col(k) = v;
    }

    // Conjugate eigenvalue pairs of a real matrix: clean the imaginary
    // round-off of real eigenvalues so that real spectra stay real.
    const double lambda_scale = lambda.cwiseAbs().maxCoeff();
    for (int k = 0; k < M; ++k) {
        if (std::abs(lambda[k].imag()) <= 1e-12 * lambda_scale) {
            lambda[k] = lambda[k].real();
            if (V.col(k).imag().cwiseAbs().maxCoeff() <= 1e-12 * V.col(k).cwiseAbs().maxCoeff()) {
                V.col(k) = V.col(k).real().cast<Complex>();
            }
        }
    }

    EigenDiagnostics diag;
    diag.requested_shift = spec.shift;
    diag.effective_shift = spec.shift;

    Eigen::MatrixXcd dual;
    if (symmetric) {
        dual = V;
        diag.condition_number = 1.0;
    } else {
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(V);
        const auto& sv = svd.singularValues();
        diag.condition_number = sv[0] / sv[sv.size() - 1];
        if (!std::isfinite(diag.condition_number) || diag.condition_number > kConditionLimit) {
            fail(ErrorKind::numerical, "operator is not diagonalizable within tolerance: eigenvector condition number ",
                 diag.condition_number, " exceeds ", kConditionLimit);
        }
        const Eigen::MatrixXcd Vinv = V.partialPivLu().inverse();
        dual = Vinv.transpose() / w;
        if (lambda.imag().isZero(0.0) && V.imag().isZero(0.0)) {
            dual = dual.real().cast<Complex>();
        }
    }

    const double min_re = lambda.real().minCoeff();
    if (min_re <= 0.0) {
        const double bump = kShiftMargin - min_re;
        lambda.array() += bump;
        diag.effective_shift = spec.shift + bump;
        diag.shift_adjusted = true;
    }

    return EigenSystem(domain, lambda.head(K), V.leftCols(K), dual.leftCols(K), symmetric, diag, {}, spec.label);
}

/// S_t x = sum_k exp(-lambda_k t) <dual_k, x> mode_k.
inline GridFunction apply_semigroup(const EigenSystem& sys, double t, const GridFunction& x) {
    require(t >= 0.0, "semigroup time must be >= 0, got ", t);
    return EigenSystem::real_part_checked(sys.apply_spectral([t](Complex lambda) { return std::exp(-lambda * t); }, x));
}

} // namespace hspde
