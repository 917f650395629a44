#pragma once
// Small quadrature toolbox: runtime Gauss-Legendre rules, composite panels
// and graded rules for algebraic endpoint singularities.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace sheq::quad {

struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre rule with n points on [-1, 1] (Newton on P_n).
inline Rule gauss_legendre(std::size_t n) {
    if (n == 0) throw std::invalid_argument("gauss_legendre: n must be positive");
    Rule r;
    if (n == 1) return Rule{{0.0}, {2.0}};
    r.nodes.resize(n);
    r.weights.resize(n);
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                p0 = p1;
                p1 = pk;
            }
            dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0, p1 = x;
        for (std::size_t k = 2; k <= n; ++k) {
            const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
            p0 = p1;
            p1 = pk;
        }
        dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = -x;
        r.weights[i] = w;
        r.nodes[n - 1 - i] = x;
        r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;
    return r;
}

/// Maps a rule on [-1,1] onto [a,b].
inline void map_rule(const Rule& ref, double a, double b, std::vector<double>& x, std::vector<double>& w) {
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
        x.push_back(mid + half * ref.nodes[i]);
        w.push_back(half * ref.weights[i]);
    }
}

/// Integral over [a,b] of (x-a)^{-beta} g(x), beta in [0,1).
/// Substitution x = a + h u^{1/(1-beta)} removes the singularity exactly,
/// leaving a smooth integrand in u for the Gauss rule.
inline double left_singular(const std::function<double(double)>& g, double a, double b, double beta,
                            const Rule& ref) {
    const double h = b - a;
    const double gamma = 1.0 / (1.0 - beta);
    const double scale = std::pow(h, 1.0 - beta) * gamma;
    double sum = 0.0;
    for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
        const double u = 0.5 * (ref.nodes[i] + 1.0);
        sum += 0.5 * ref.weights[i] * g(a + h * std::pow(u, gamma));
    }
    return scale * sum;
}

/// Integral over [a,b] of (b-x)^{-beta} g(x), beta in [0,1).
inline double right_singular(const std::function<double(double)>& g, double a, double b, double beta,
                             const Rule& ref) {
    const double h = b - a;
    const double gamma = 1.0 / (1.0 - beta);
    const double scale = std::pow(h, 1.0 - beta) * gamma;
    double sum = 0.0;
    for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
        const double u = 0.5 * (ref.nodes[i] + 1.0);
        sum += 0.5 * ref.weights[i] * g(b - h * std::pow(u, gamma));
    }
    return scale * sum;
}

/// Integral over (a,b) of (b-x)^{-beta_right} (x-a)^{-beta_left} g(x): split at the
/// midpoint and grade each half toward its singular end.
inline double two_sided_singular(const std::function<double(double)>& g, double a, double b,
                                 double beta_left, double beta_right, const Rule& ref) {
    const double m = 0.5 * (a + b);
    const double left = left_singular(
        [&](double x) { return std::pow(b - x, -beta_right) * g(x); }, a, m, beta_left, ref);
    const double right = right_singular(
        [&](double x) { return std::pow(x - a, -beta_left) * g(x); }, m, b, beta_right, ref);
    return left + right;
}

}  // namespace sheq::quad
