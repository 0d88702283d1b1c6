#pragma once

#include "hspde/convolve.hpp"
#include "hspde/error.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#define EXPECT_HSPDE_ERROR(statement, expected_kind)                                   \
    do {                                                                               \
        try {                                                                          \
            statement;                                                                 \
            ADD_FAILURE() << "expected an hspde::Error from " #statement;              \
        } catch (const hspde::Error& hspde_error_) {                                   \
            EXPECT_EQ(hspde_error_.kind(), expected_kind) << hspde_error_.what();      \
        }                                                                              \
    } while (0)

namespace test_support {

inline std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::path(HSPDE_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Ensemble built directly from per-replica values on a uniform grid of
// `times` in [0, T] and `points` in (0, 1). Used to inject known paths into
// the estimators.
inline hspde::TrajectoryEnsemble injected(int replicas, int times, int points, double T,
                                          const std::function<void(int, Eigen::MatrixXd&)>& fill) {
    hspde::TrajectoryEnsemble ens;
    for (int n = 0; n < times; ++n) {
        ens.times.push_back(T * n / (times - 1));
    }
    ens.points.resize(points, 1);
    for (int j = 0; j < points; ++j) {
        ens.points(j, 0) = (j + 1.0) / (points + 1.0);
    }
    ens.space_shape = {points};
    ens.space_weight = 1.0 / (points + 1.0);
    ens.plan.dim = 1;
    ens.plan.replicas = replicas;
    ens.plan.steps = times - 1;
    ens.plan.T = T;
    ens.plan.scheme = "injected";
    for (int r = 0; r < replicas; ++r) {
        Eigen::MatrixXd v = Eigen::MatrixXd::Zero(times, points);
        fill(r, v);
        ens.values.push_back(std::move(v));
    }
    return ens;
}

// Standard Brownian path of n increments over [0, T], started at 0.
inline Eigen::VectorXd brownian(std::mt19937_64& rng, int n, double T) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd w(n + 1);
    w[0] = 0.0;
    const double s = std::sqrt(T / n);
    for (int i = 1; i <= n; ++i) {
        w[i] = w[i - 1] + s * normal(rng);
    }
    return w;
}

} // namespace test_support
