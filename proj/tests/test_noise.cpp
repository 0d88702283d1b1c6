#include "hspde/noise.hpp"

#include "support.hpp"

#include <fstream>
#include <numbers>

using namespace hspde;

namespace {

constexpr double pi = std::numbers::pi;

bool clause_passed(const NoiseReport& rep, const std::string& name) {
    const auto* c = rep.find(name);
    EXPECT_NE(c, nullptr) << name;
    return c != nullptr && c->passed;
}

} // namespace

TEST(CameronMartin, ParsevalAtThetaZero) {
    const SpectralDomain dom(1, 63, 63);
    const CameronMartinSpec spec(dom, 0.0, 40);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd c(40);
        for (auto& v : c) {
            v = normal(rng);
        }
        const GridFunction y = apply_G(GProcess::identity(), spec, 0, c);
        EXPECT_NEAR(lp_norm(dom, y, 2.0), c.norm(), 1e-8 * c.norm());
    }
}

TEST(CameronMartin, WeightsAreLaplacianPowersAndMonotoneInTheta) {
    const SpectralDomain dom(1, 31, 31);
    Eigen::VectorXd previous = Eigen::VectorXd::Constant(8, 2.0);
    for (double theta : {0.0, 0.3, 0.7, 1.2}) {
        const CameronMartinSpec spec(dom, theta, 8);
        const Eigen::VectorXd w = spec.weights();
        for (int k = 0; k < 8; ++k) {
            EXPECT_NEAR(w[k], std::pow(1.0 + pi * pi * (k + 1) * (k + 1), -theta / 2.0), 1e-14);
            EXPECT_LE(w[k], previous[k]);
            if (k > 0) {
                EXPECT_LE(w[k], w[k - 1]);
            }
        }
        const Eigen::MatrixXd h = spec.basis();
        EXPECT_LT((h.col(2) - w[2] * sine_mode(dom, {3})).cwiseAbs().maxCoeff(), 1e-14);
        previous = w;
    }
}

TEST(CameronMartin, MultiIndicesFollowLaplacianOrderInTwoDimensions) {
    const CameronMartinSpec spec(SpectralDomain(2, 15, 15), 0.5, 5);
    const auto idx = spec.multi_indices();
    ASSERT_EQ(idx.size(), 5u);
    EXPECT_EQ(idx[0], (MultiIndex{1, 1}));
    EXPECT_EQ(laplacian_eigenvalue(idx[1]), laplacian_eigenvalue(idx[2]));
    EXPECT_DOUBLE_EQ(laplacian_eigenvalue(idx[1]), 5.0 * pi * pi);
    EXPECT_EQ(idx[3], (MultiIndex{2, 2}));
    EXPECT_NEAR(spec.embedding_exponent(), 4.0, 1e-12);
    EXPECT_NEAR(CameronMartinSpec(SpectralDomain(1, 15, 15), 0.4, 4).embedding_exponent(), 10.0, 1e-12);
    EXPECT_TRUE(std::isinf(CameronMartinSpec(SpectralDomain(1, 15, 15), 0.6, 4).embedding_exponent()));
}

TEST(CameronMartin, RejectsInvalidParameters) {
    const SpectralDomain dom(1, 15, 15);
    EXPECT_HSPDE_ERROR(CameronMartinSpec(dom, -0.1, 4), ErrorKind::invalid_argument);
    EXPECT_HSPDE_ERROR(CameronMartinSpec(dom, 0.1, 0), ErrorKind::invalid_argument);
    EXPECT_HSPDE_ERROR(CameronMartinSpec(dom, 0.1, 16), ErrorKind::invalid_argument);
}

TEST(WienerIncrements, TerminalCovarianceIsTimesIdentity) {
    const CameronMartinSpec spec(SpectralDomain(1, 15, 15), 0.0, 4);
    const TimeGrid grid{1.0, 16};
    constexpr int replicas = 10000;
    Eigen::MatrixXd products = Eigen::MatrixXd::Zero(4, 4);
    Eigen::MatrixXd squares = Eigen::MatrixXd::Zero(4, 4);
    for (int r = 0; r < replicas; ++r) {
        const Eigen::VectorXd w = sample_wiener_increments(spec, grid, 2024, r).rowwise().sum();
        const Eigen::MatrixXd outer = w * w.transpose();
        products += outer;
        squares += outer.cwiseAbs2();
    }
    const Eigen::MatrixXd mean = products / replicas;
    const Eigen::MatrixXd var = squares / replicas - mean.cwiseAbs2();
    for (int k = 0; k < 4; ++k) {
        for (int j = 0; j < 4; ++j) {
            const double se = std::sqrt(var(k, j) / replicas);
            EXPECT_LE(std::abs(mean(k, j) - (k == j ? grid.T : 0.0)), 3.0 * se) << k << "," << j;
        }
    }
}

TEST(WienerIncrements, EachIncrementHasVarianceDelta) {
    const CameronMartinSpec spec(SpectralDomain(1, 15, 15), 0.0, 3);
    const TimeGrid grid{2.0, 10000};
    const Eigen::MatrixXd inc = sample_wiener_increments(spec, grid, 7, 0);
    for (int k = 0; k < 3; ++k) {
        const Eigen::ArrayXd sq = inc.row(k).array().square();
        const double mean = sq.mean();
        const double se = std::sqrt((sq - mean).square().mean() / sq.size());
        EXPECT_LE(std::abs(mean - grid.dt()), 3.0 * se);
    }
}

TEST(WienerIncrements, DistinctModeStreamsAreUncorrelated) {
    const CameronMartinSpec spec(SpectralDomain(1, 15, 15), 0.0, 6);
    const Eigen::MatrixXd inc = sample_wiener_increments(spec, TimeGrid{1.0, 10000}, 99, 3);
    const double bound = 3.0 / std::sqrt(10000.0);
    for (int k = 0; k < 6; ++k) {
        for (int j = k + 1; j < 6; ++j) {
            const Eigen::ArrayXd a = inc.row(k).array() - inc.row(k).mean();
            const Eigen::ArrayXd b = inc.row(j).array() - inc.row(j).mean();
            const double corr = (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
            EXPECT_LE(std::abs(corr), bound) << k << "," << j;
        }
    }
}

TEST(WienerIncrements, StreamsDependOnlyOnSeedReplicaAndMode) {
    const SpectralDomain dom(1, 15, 15);
    const TimeGrid grid{1.0, 32};
    const Eigen::MatrixXd few = sample_wiener_increments(CameronMartinSpec(dom, 0.0, 3), grid, 5, 1);
    const Eigen::MatrixXd many = sample_wiener_increments(CameronMartinSpec(dom, 0.0, 8), grid, 5, 1);
    EXPECT_EQ(few, many.topRows(3));
    const Eigen::MatrixXd other = sample_wiener_increments(CameronMartinSpec(dom, 0.0, 3), grid, 5, 2);
    EXPECT_NE(few, other);
}

TEST(ApplyG, ConstantUnitAndZeroMultipliers) {
    const SpectralDomain dom(1, 31, 31);
    const CameronMartinSpec spec(dom, 0.0, 6);
    Eigen::VectorXd c(6);
    c << 1.0, -0.5, 0.25, 0.0, 2.0, -1.0;
    const GridFunction plain = spec.basis() * c;
    const auto one = g_preset("const", dom, 1.0, 4, 8.0, 16.0);
    EXPECT_LT((apply_G(one, spec, 0, c) - plain).cwiseAbs().maxCoeff(), 1e-15);
    const auto zero = GProcess::constant(GridFunction::Zero(31), "zero", 8.0, 16.0);
    EXPECT_EQ(apply_G(zero, spec, 0, c).cwiseAbs().maxCoeff(), 0.0);
    const auto bump = g_preset("bump", dom, 1.0, 4, 8.0, 16.0);
    EXPECT_LT((apply_G(bump, spec, 3, c) - bump.row(0).cwiseProduct(plain)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_HSPDE_ERROR(apply_G(one, spec, 0, Eigen::VectorXd::Ones(3)), ErrorKind::invalid_argument);
}

TEST(GPresets, ShapesAndValues) {
    const SpectralDomain dom(1, 63, 63);
    const auto bump = g_preset("bump", dom, 1.0, 8, 8.0, 16.0);
    EXPECT_EQ(bump.kind, GKind::constant_multiplication);
    EXPECT_NEAR(bump.row(0)[31], 1.5, 1e-14);   // xi = 1/2
    EXPECT_GT(bump.row(0).minCoeff(), 0.5);
    EXPECT_NEAR(bump.sup_norm(), 1.5, 1e-14);

    const auto sep = g_preset("separable:sin", dom, 1.0, 8, 8.0, 16.0);
    EXPECT_EQ(sep.kind, GKind::time_varying_multiplication);
    ASSERT_EQ(sep.g.rows(), 8);
    ASSERT_EQ(sep.g.cols(), 63);
    const double t = 2.0 / 8.0;
    const double xi = dom.coordinate(10);
    EXPECT_NEAR(sep.row(2)[10], (1.0 + 0.5 * std::sin(2 * pi * t)) * (1.0 + 0.5 * std::sin(pi * xi)), 1e-14);

    EXPECT_FALSE(g_preset("identity", dom, 1.0, 8, 8.0, 16.0).multiplies());
    EXPECT_HSPDE_ERROR(g_preset("nope", dom, 1.0, 8, 8.0, 16.0), ErrorKind::invalid_argument);
}

TEST(GCsv, ConstantAndTimeVaryingFiles) {
    const SpectralDomain dom(2, 3, 3);
    const auto dir = test_support::scratch("g_csv");
    const auto path = (dir / "g.csv").string();
    {
        std::ofstream out(path);
        out << "t_index,xi_0,xi_1,value\n";
        for (int t = 0; t < 2; ++t) {
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) {
                    out << t << ',' << i << ',' << j << ',' << (t + 1) * (1 + i + 10 * j) << '\n';
                }
            }
        }
    }
    const auto G = g_from_csv(path, dom, 8.0, 16.0);
    EXPECT_EQ(G.kind, GKind::time_varying_multiplication);
    EXPECT_EQ(G.row(1)[static_cast<Eigen::Index>(dom.flat_index({2, 1}))], 2.0 * (1 + 2 + 10));
    EXPECT_EQ(G.row(5), G.row(1));   // last row persists past the end

    {
        std::ofstream out(path);
        out << "0,0,0,1\n0,1,1,2\n";
    }
    EXPECT_HSPDE_ERROR(g_from_csv(path, dom, 8.0, 16.0), ErrorKind::io);
    {
        std::ofstream out(path);
        out << "0,0,7,1\n";
    }
    EXPECT_HSPDE_ERROR(g_from_csv(path, dom, 8.0, 16.0), ErrorKind::io);
    EXPECT_HSPDE_ERROR(g_from_csv((dir / "absent.csv").string(), dom, 8.0, 16.0), ErrorKind::io);
}

TEST(GProcess, UnboundedMultiplierIsAHypothesisFailure) {
    const SpectralDomain dom(1, 7, 7);
    GridFunction g = GridFunction::Ones(7);
    g[3] = std::numeric_limits<double>::infinity();
    const auto G = GProcess::constant(g, "bad", 8.0, 16.0);
    EXPECT_FALSE(G.bounded());
    EXPECT_HSPDE_ERROR(G.validate(dom), ErrorKind::hypothesis);
    EXPECT_HSPDE_ERROR(GProcess::constant(GridFunction::Ones(5), "short", 8.0, 16.0).validate(dom),
                       ErrorKind::invalid_argument);
}

TEST(Hypotheses, ColoredPresetPassesEveryClause) {
    const SpectralDomain dom(1, 63, 63);
    const CameronMartinSpec spec(dom, 0.4, 63);
    const auto G = g_preset("bump", dom, 1.0, 4, 8.0, 16.0);
    const double p = 1.0 / (0.5 - 0.4 + 1.0 / 8.0);
    const auto rep = validate_noise_hypotheses(G, spec, p, 1);
    EXPECT_TRUE(rep.all_passed()) << rep.failures();
    EXPECT_NEAR(rep.p_colored, p, 1e-12);
    EXPECT_EQ(rep.clauses.size(), 6u);
}

TEST(Hypotheses, BoundaryCases) {
    const SpectralDomain dom(1, 63, 63);
    const CameronMartinSpec spec(dom, 0.4, 63);
    const auto m_two = validate_noise_hypotheses(g_preset("bump", dom, 1.0, 4, 2.0, 16.0), spec, 2.0, 1);
    EXPECT_FALSE(clause_passed(m_two, "m > max{2,d}"));
    EXPECT_FALSE(m_two.all_passed());
    EXPECT_NE(m_two.failures().find("m > max{2,d}"), std::string::npos);

    const auto p_is_m = validate_noise_hypotheses(g_preset("bump", dom, 1.0, 4, 8.0, 16.0), spec, 8.0, 1);
    EXPECT_TRUE(clause_passed(p_is_m, "p in (max{2,d}, m]"));
    EXPECT_FALSE(clause_passed(p_is_m, "p matches 1/p = 1/2 - theta/d + 1/m"));

    const auto rough = validate_noise_hypotheses(g_preset("bump", dom, 1.0, 4, 8.0, 16.0),
                                                 CameronMartinSpec(dom, 0.1, 63), 4.0, 1);
    EXPECT_FALSE(clause_passed(rough, "theta window"));
}
