#pragma once

#include "hspde/error.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace hspde {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const noexcept { return nodes.size(); }
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton iteration on P_n).
inline QuadratureRule gauss_legendre(int n) {
    require(n >= 1, "Gauss-Legendre order must be >= 1");
    QuadratureRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) {
                break;
            }
        }
        const double wgt = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[static_cast<std::size_t>(i)] = -x;
        rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        rule.weights[static_cast<std::size_t>(i)] = wgt;
        rule.weights[static_cast<std::size_t>(n - 1 - i)] = wgt;
    }
    return rule;
}

/// Composite Gauss-Legendre rule on [a, b] with `panels` equal panels of
/// `order` points each.
inline QuadratureRule composite_gauss_legendre(double a, double b, int panels, int order) {
    require(b > a, "composite rule needs b > a");
    require(panels >= 1 && order >= 1, "composite rule needs panels >= 1 and order >= 1");
    const QuadratureRule base = gauss_legendre(order);
    QuadratureRule rule;
    rule.nodes.reserve(static_cast<std::size_t>(panels * order));
    rule.weights.reserve(static_cast<std::size_t>(panels * order));
    const double width = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * width;
        const double mid = lo + 0.5 * width;
        for (std::size_t i = 0; i < base.size(); ++i) {
            rule.nodes.push_back(mid + 0.5 * width * base.nodes[i]);
            rule.weights.push_back(0.5 * width * base.weights[i]);
        }
    }
    return rule;
}

} // namespace hspde
