#include "hspde/eigensystem.hpp"
#include "hspde/operator_spec.hpp"

#include "support.hpp"

#include <fstream>
#include <numbers>

using namespace hspde;

namespace {

constexpr double pi = std::numbers::pi;

// Independent oracle: dense second-difference matrix -a u'' on M interior
// points, diagonalised by Eigen's symmetric solver.
Eigen::VectorXd fd_laplacian_oracle(int M, double a = 1.0) {
    const double h = 1.0 / (M + 1);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(M, M);
    for (int j = 0; j < M; ++j) {
        L(j, j) = 2.0 * a / (h * h);
        if (j > 0) {
            L(j, j - 1) = -a / (h * h);
        }
        if (j + 1 < M) {
            L(j, j + 1) = -a / (h * h);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

EllipticOperatorSpec constant_spec(const SpectralDomain& dom, double a, double b, double c) {
    const auto n = static_cast<Eigen::Index>(dom.point_count());
    auto spec = EllipticOperatorSpec::one_dimensional(GridFunction::Constant(n, a), GridFunction::Constant(n, b),
                                                      GridFunction::Constant(n, c));
    spec.a0 = std::min(a, 1.0 / a);
    return spec;
}

} // namespace

TEST(Laplacian, GroundStateMatchesClosedFormAndFiniteDifferences) {
    const SpectralDomain dom(1, 255, 16);
    const auto sys = build_laplacian_system(dom);
    ASSERT_EQ(sys.size(), 16);
    EXPECT_NEAR(sys.eigenvalues()[0].real(), pi * pi, 1e-12);
    EXPECT_NEAR(sys.eigenvalues()[0].real(), 9.8696, 1e-4);

    const Eigen::VectorXd fd = fd_laplacian_oracle(255);
    EXPECT_LT(std::abs(fd[0] - pi * pi) / (pi * pi), 1e-4);

    const GridFunction mode1 = sys.modes().col(0).real();
    const double sign = mode1[0] > 0 ? 1.0 : -1.0;
    for (int j = 0; j < 255; ++j) {
        EXPECT_NEAR(sign * mode1[j], std::sqrt(2.0) * std::sin(pi * dom.coordinate(j)), 1e-12);
    }
}

TEST(Laplacian, FiniteDifferenceErrorDecreasesUnderRefinement) {
    for (int k = 1; k <= 4; ++k) {
        double previous = std::numeric_limits<double>::infinity();
        for (int M : {31, 63, 127, 255}) {
            const double exact = pi * pi * k * k;
            const double err = std::abs(fd_laplacian_oracle(M)[k - 1] - exact) / exact;
            EXPECT_LE(err, std::pow(static_cast<double>(k) / M, 2.0));
            EXPECT_LT(err, previous);
            previous = err;
        }
    }
}

TEST(Laplacian, ModesAreOrthonormalAndSortedInTwoDimensions) {
    const SpectralDomain dom(2, 15, 5);
    const auto sys = build_laplacian_system(dom);
    ASSERT_EQ(sys.size(), 25);
    const Eigen::MatrixXd V = sys.modes().real();
    const Eigen::MatrixXd gram = dom.cell_weight() * V.transpose() * V;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(25, 25)).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index k = 1; k < sys.size(); ++k) {
        EXPECT_LE(sys.eigenvalues()[k - 1].real(), sys.eigenvalues()[k].real());
    }
    EXPECT_NEAR(sys.eigenvalues()[0].real(), 2.0 * pi * pi, 1e-12);
    EXPECT_TRUE(sys.is_selfadjoint());
    EXPECT_TRUE(sys.is_real());
}

TEST(Laplacian, ShiftAddsToEverySpectralValue) {
    const SpectralDomain dom(1, 31, 8);
    const auto a = build_laplacian_system(dom);
    const auto b = build_laplacian_system(dom, 2.5);
    EXPECT_LT((b.eigenvalues() - a.eigenvalues() - Eigen::VectorXcd::Constant(8, 2.5)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_HSPDE_ERROR(build_laplacian_system(dom, -1.0), ErrorKind::invalid_argument);
}

TEST(VariableCoefficient, UnitCoefficientMatchesClosedFormToSecondOrder) {
    const SpectralDomain dom(1, 127, 10);
    const auto sys = build_variable_coefficient_system(dom, constant_spec(dom, 1.0, 0.0, 0.0));
    for (int k = 1; k <= 10; ++k) {
        const double exact = pi * pi * k * k;
        EXPECT_LE(std::abs(sys.eigenvalues()[k - 1].real() - exact) / exact, std::pow(k / 127.0, 2.0));
    }
    EXPECT_TRUE(sys.is_selfadjoint());
}

TEST(VariableCoefficient, ConstantPotentialShiftsTheSpectrum) {
    const SpectralDomain dom(1, 63, 12);
    const auto base = build_variable_coefficient_system(dom, constant_spec(dom, 1.0, 0.0, 0.0));
    const auto shifted = build_variable_coefficient_system(dom, constant_spec(dom, 1.0, 0.0, 7.0));
    for (Eigen::Index k = 0; k < 12; ++k) {
        EXPECT_NEAR(shifted.eigenvalues()[k].real(), base.eigenvalues()[k].real() + 7.0, 1e-8);
    }
}

TEST(VariableCoefficient, AffineDiffusionIsBracketedByConstantComparisons) {
    const SpectralDomain dom(1, 127, 20);
    const auto spec = EllipticOperatorSpec::preset("affine-a", dom);
    const auto sys = build_variable_coefficient_system(dom, spec);
    const Eigen::VectorXd lap = fd_laplacian_oracle(127);
    for (Eigen::Index k = 0; k < sys.size(); ++k) {
        const Complex lambda = sys.eigenvalues()[k];
        EXPECT_EQ(lambda.imag(), 0.0);
        EXPECT_GT(lambda.real(), 0.0);
        // a ranges over [1 + xi_min/2, 1 + xi_max/2]; min-max comparison.
        EXPECT_GE(lambda.real(), (1.0 + 0.5 * dom.coordinate(0)) * lap[k] * (1.0 - 1e-10));
        EXPECT_LE(lambda.real(), (1.0 + 0.5 * dom.coordinate(126)) * lap[k] * (1.0 + 1e-10));
    }
    EXPECT_GE(sys.eigenvalues()[0].real(), pi * pi * (1.0 - 1e-3));
    EXPECT_LE(sys.eigenvalues()[0].real(), 1.5 * pi * pi * 1.01);
    EXPECT_LT(sys.diagnostics().biorthogonality_residual, 1e-10);
}

TEST(VariableCoefficient, AdvectionGivesBiorthogonalNonSelfadjointSystem) {
    const SpectralDomain dom(1, 63, 16);
    const auto sys = build_variable_coefficient_system(dom, constant_spec(dom, 1.0, 3.0, 0.0));
    EXPECT_FALSE(sys.is_selfadjoint());
    EXPECT_LT(sys.diagnostics().biorthogonality_residual, 1e-10);
    // Exact FD spectrum of -u'' + b u': 2/h^2 (1 - sqrt(1 - (bh/2)^2) cos(k pi h)).
    const double h = dom.spacing();
    for (int k = 1; k <= 16; ++k) {
        const double exact = 2.0 / (h * h) * (1.0 - std::sqrt(1.0 - 0.25 * 9.0 * h * h) * std::cos(k * pi * h));
        EXPECT_NEAR(sys.eigenvalues()[k - 1].real(), exact, 1e-8 * exact);
    }
    // Projection of a resolved combination reproduces it.
    const GridFunction x = (sys.modes().col(0) + 0.5 * sys.modes().col(3)).real();
    EXPECT_LT((sys.project(x) - x).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(VariableCoefficient, NegativeSpectrumIsShiftedIntoTheRightHalfPlane) {
    const SpectralDomain dom(1, 63, 8);
    const auto sys = build_variable_coefficient_system(dom, constant_spec(dom, 1.0, 0.0, -20.0));
    EXPECT_TRUE(sys.diagnostics().shift_adjusted);
    EXPECT_NEAR(sys.min_real_eigenvalue(), kShiftMargin, 1e-9);
    EXPECT_GT(sys.effective_shift(), 0.0);
}

TEST(VariableCoefficient, RejectsNonEllipticCoefficients) {
    const SpectralDomain dom(1, 31, 4);
    auto spec = constant_spec(dom, 1.0, 0.0, 0.0);
    spec.a[5](0, 0) = -1.0;
    EXPECT_HSPDE_ERROR(build_variable_coefficient_system(dom, spec), ErrorKind::invalid_argument);
    EXPECT_HSPDE_ERROR(EllipticOperatorSpec::preset("no-such-operator", dom), ErrorKind::invalid_argument);
}

TEST(OperatorCsv, GridSampledCoefficientsReproduceThePreset) {
    const SpectralDomain dom(1, 31, 6);
    const auto dir = test_support::scratch("operator_csv");
    const auto path = (dir / "coeff.csv").string();
    {
        std::ofstream out(path);
        out << "xi,a,b,c\n";
        out.precision(17);
        for (int j = 0; j < 31; ++j) {
            const double xi = dom.coordinate(j);
            out << xi << ',' << 1.0 + 0.5 * xi << ",0,0\n";
        }
    }
    const auto from_csv = build_variable_coefficient_system(dom, EllipticOperatorSpec::from_csv(path, dom));
    const auto preset = build_variable_coefficient_system(dom, EllipticOperatorSpec::preset("affine-a", dom));
    EXPECT_LT((from_csv.eigenvalues() - preset.eigenvalues()).cwiseAbs().maxCoeff(), 1e-9);

    {
        std::ofstream out(path);
        out << "0.5,1,0,0\n";
    }
    EXPECT_HSPDE_ERROR(EllipticOperatorSpec::from_csv(path, dom), ErrorKind::io);
    EXPECT_HSPDE_ERROR(EllipticOperatorSpec::from_csv((dir / "missing.csv").string(), dom), ErrorKind::io);
}

TEST(Semigroup, IdentityAtZeroAndExponentialOnModes) {
    const SpectralDomain dom(1, 63, 8);
    const auto sys = build_laplacian_system(dom);
    const GridFunction m3 = sys.modes().col(2).real();
    EXPECT_LT((apply_semigroup(sys, 0.0, m3) - m3).cwiseAbs().maxCoeff(), 1e-12);
    const GridFunction m1 = sys.modes().col(0).real();
    const double l1 = sys.eigenvalues()[0].real();
    EXPECT_LT((apply_semigroup(sys, 1.0, m1) - std::exp(-l1) * m1).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_HSPDE_ERROR(apply_semigroup(sys, -0.1, m1), ErrorKind::invalid_argument);
}

TEST(Semigroup, ComposesAdditivelyInTime) {
    const SpectralDomain dom(1, 63, 63);
    const auto sys = build_laplacian_system(dom);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    GridFunction x(63);
    for (auto& v : x) {
        v = normal(rng);
    }
    const GridFunction two_steps = apply_semigroup(sys, 0.01, apply_semigroup(sys, 0.02, x));
    const GridFunction one_step = apply_semigroup(sys, 0.03, x);
    EXPECT_LT((two_steps - one_step).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Domain, RejectsDegenerateGridsAndComputesNorms) {
    EXPECT_HSPDE_ERROR(SpectralDomain(0, 10, 3), ErrorKind::invalid_argument);
    EXPECT_HSPDE_ERROR(SpectralDomain(1, 2, 3), ErrorKind::invalid_argument);
    const SpectralDomain dom(1, 255, 4);
    const GridFunction one = GridFunction::Ones(255);
    EXPECT_NEAR(lp_norm(dom, one, 4.0), std::pow(255.0 / 256.0, 0.25), 1e-14);
    const auto m1 = sine_mode(dom, {1});
    EXPECT_NEAR(lp_norm(dom, m1, 2.0), 1.0, 1e-12);
    EXPECT_NEAR(lp_norm(dom, m1, std::numeric_limits<double>::infinity()), std::sqrt(2.0) * std::sin(128 * pi / 256),
                1e-12);
}
