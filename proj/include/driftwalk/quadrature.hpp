#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include "driftwalk/common.hpp"

namespace driftwalk {

struct QuadRule {
    std::vector<double> nodes;    // on [-1,1]
    std::vector<double> weights;
};

namespace detail {

// Legendre P_n(x) and derivative by the three-term recurrence.
inline void legendre_eval(int n, double x, double& p, double& dp) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
    }
    p = (n == 0) ? 1.0 : (n == 1 ? x : p1);
    dp = (n == 0) ? 0.0 : n * (x * p1 - p0) / (x * x - 1.0);
    if (n == 1) dp = 1.0;
}

inline QuadRule make_gauss_legendre(int n) {
    QuadRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // Chebyshev-based initial guess, then Newton.
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double p = 0, dp = 0;
        for (int it = 0; it < 100; ++it) {
            legendre_eval(n, x, p, dp);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        legendre_eval(n, x, p, dp);
        rule.nodes[n - 1 - i] = x;
        rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

}  // namespace detail

inline const QuadRule& gauss_legendre(int n) {
    static std::map<int, QuadRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, detail::make_gauss_legendre(n)).first;
    return it->second;
}

template <typename Fn>
double integrate_gl(double a, double b, int n, Fn&& fn) {
    const QuadRule& rule = gauss_legendre(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights[i] * fn(mid + half * rule.nodes[i]);
    return acc * half;
}

/// One refinement pass: accepts when the 16-node and split-panel values agree.
template <typename Fn>
double integrate_adaptive(double a, double b, Fn&& fn, double rel_tol = 1e-9) {
    const double coarse = integrate_gl(a, b, 16, fn);
    const double mid = 0.5 * (a + b);
    const double fine = integrate_gl(a, mid, 16, fn) + integrate_gl(mid, b, 16, fn);
    const double scale = std::max({std::abs(coarse), std::abs(fine), 1e-300});
    if (std::abs(fine - coarse) <= rel_tol * scale) return fine;
    // Rarely reached for the smooth integrands used here; split once more.
    return integrate_adaptive(a, mid, fn, rel_tol) + integrate_adaptive(mid, b, fn, rel_tol);
}

template <typename Fn>
double integrate_gl_2d(double ax, double bx, double ay, double by, int n, Fn&& fn) {
    return integrate_gl(ax, bx, n, [&](double x) {
        return integrate_gl(ay, by, n, [&](double y) { return fn(x, y); });
    });
}

}  // namespace driftwalk
