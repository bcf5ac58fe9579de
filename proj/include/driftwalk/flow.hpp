#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "driftwalk/fields.hpp"

namespace driftwalk {

/// Default macro step cap for the flow integrator; scheme flows run for
/// s = O(rho^2) and use s/8 directly.
inline constexpr double kFlowStepCap = 1.0 / 64.0;

/// A trajectory is declared exploded once |b| exceeds this rate. Near a
/// blow-up the integrator shrinks its sub-steps geometrically, so the
/// crossing time of this threshold trails the true escape time by O(1e-6)
/// for superlinear drifts.
inline constexpr double kExplosionRate = 1e12;

struct FlowResult {
    Point endpoint = Point::cemetery();
    bool exploded = false;
    double s_exit = 0.0;  // first time the trajectory was lost (when exploded)
};

namespace detail {

struct ChartState {
    std::array<double, Point::kMaxDim> x{};
    int dim = 0;
};

inline ChartState to_state(const Point& p) {
    ChartState s;
    s.dim = p.dim();
    for (int i = 0; i < p.dim(); ++i) s.x[static_cast<std::size_t>(i)] = p[i];
    return s;
}

/// Rebuilds a Point; angles are kept unwrapped during integration and
/// canonicalized only here.
inline Point to_point(const Manifold& m, const ChartState& s) {
    switch (m.kind()) {
        case ManifoldKind::Euclidean:
            return Point::euclidean(std::span<const double>(s.x.data(), static_cast<std::size_t>(s.dim)));
        case ManifoldKind::Circle: return Point::circle(s.x[0]);
        case ManifoldKind::Model2D: return Point::polar(s.x[0], s.x[1]);
    }
    return Point::cemetery();
}

inline void eval_field(const Manifold& m, const VectorField& b, const ChartState& s,
                       std::array<double, Point::kMaxDim>& out) {
    const Point p = to_point(m, s);
    b.eval(m, p, std::span<double>(out.data(), static_cast<std::size_t>(s.dim)));
}

inline double rate(const ChartState& s, const std::array<double, Point::kMaxDim>& bv) {
    double bn = 0.0, xn = 0.0;
    for (int i = 0; i < s.dim; ++i) {
        bn = std::max(bn, std::abs(bv[static_cast<std::size_t>(i)]));
        xn = std::max(xn, std::abs(s.x[static_cast<std::size_t>(i)]));
    }
    return bn / std::max(1.0, xn);
}

inline double field_norm(const std::array<double, Point::kMaxDim>& bv, int dim) {
    double bn = 0.0;
    for (int i = 0; i < dim; ++i) bn = std::max(bn, std::abs(bv[static_cast<std::size_t>(i)]));
    return bn;
}

inline bool chart_ok(const Manifold& m, const ChartState& s) {
    switch (m.kind()) {
        case ManifoldKind::Euclidean:
            if (m.domain()) {
                for (int i = 0; i < s.dim; ++i) {
                    const auto a = static_cast<std::size_t>(i);
                    if (s.x[a] < m.domain()->lo[a] || s.x[a] >= m.domain()->hi[a]) return false;
                }
            }
            for (int i = 0; i < s.dim; ++i)
                if (!std::isfinite(s.x[static_cast<std::size_t>(i)])) return false;
            return true;
        case ManifoldKind::Circle: return std::isfinite(s.x[0]);
        case ManifoldKind::Model2D: return std::isfinite(s.x[0]) && s.x[0] > 0.0 && s.x[0] < m.r0();
    }
    return false;
}

inline ChartState rk4_step(const Manifold& m, const VectorField& b, const ChartState& s, double h) {
    std::array<double, Point::kMaxDim> k1{}, k2{}, k3{}, k4{};
    ChartState tmp = s;
    eval_field(m, b, s, k1);
    for (int i = 0; i < s.dim; ++i) tmp.x[static_cast<std::size_t>(i)] = s.x[static_cast<std::size_t>(i)] + 0.5 * h * k1[static_cast<std::size_t>(i)];
    eval_field(m, b, tmp, k2);
    for (int i = 0; i < s.dim; ++i) tmp.x[static_cast<std::size_t>(i)] = s.x[static_cast<std::size_t>(i)] + 0.5 * h * k2[static_cast<std::size_t>(i)];
    eval_field(m, b, tmp, k3);
    for (int i = 0; i < s.dim; ++i) tmp.x[static_cast<std::size_t>(i)] = s.x[static_cast<std::size_t>(i)] + h * k3[static_cast<std::size_t>(i)];
    eval_field(m, b, tmp, k4);
    ChartState out = s;
    for (int i = 0; i < s.dim; ++i) {
        const auto a = static_cast<std::size_t>(i);
        out.x[a] = s.x[a] + h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
    }
    return out;
}

struct RawFlow {
    ChartState state;
    bool exploded = false;
    double s_exit = 0.0;
};

/// Fixed macro steps of size h, with sub-steps shrunk where the local growth
/// rate |b|/max(1,|x|) would make a step unreliable. The shrinking lets the
/// integrator chase a blow-up until |b| crosses kExplosionRate, which keeps
/// the reported exit time within ~1e-6 of the true escape for power-law
/// drifts instead of the O(1e-4) a hard cutoff at 1e8 would allow.
inline RawFlow integrate(const Manifold& m, const VectorField& b, const ChartState& start, double s,
                         double h) {
    constexpr double kEta = 0.25;
    constexpr std::int64_t kMaxSubsteps = 4'000'000;
    RawFlow out;
    out.state = start;
    double t = 0.0;
    std::array<double, Point::kMaxDim> bv{};
    for (std::int64_t it = 0; t < s; ++it) {
        if (it >= kMaxSubsteps) {
            out.exploded = true;
            out.s_exit = t;
            return out;
        }
        eval_field(m, b, out.state, bv);
        const double lam = rate(out.state, bv);
        double step = std::min(h, s - t);
        if (lam > 0.0) step = std::min(step, kEta / lam);
        const ChartState next = rk4_step(m, b, out.state, step);
        t += step;
        eval_field(m, b, next, bv);
        if (!chart_ok(m, next) || field_norm(bv, next.dim) > kExplosionRate) {
            out.exploded = true;
            out.s_exit = t;
            return out;
        }
        out.state = next;
    }
    return out;
}

}  // namespace detail

/// Plain fixed-step RK4 endpoint (no Richardson pass, no rate guard); used by
/// convergence-order diagnostics.
inline Point rk4_endpoint(const Manifold& m, const VectorField& b, const Point& x, double s,
                          double h) {
    detail::ChartState st = detail::to_state(x);
    double t = 0.0;
    while (t < s) {
        const double step = std::min(h, s - t);
        st = detail::rk4_step(m, b, st, step);
        t += step;
    }
    return detail::to_point(m, st);
}

/// Integrates d/dt phi_t(x) = b(phi_t(x)) for duration s. Classical RK4 with
/// macro step min(s, cap)/8, one Richardson halving (the halved run is
/// extrapolated against the full run), and rate-guarded sub-steps near
/// blow-ups. Explosion is a result, not an error.
inline FlowResult flow(const Manifold& m, const VectorField& b, const Point& x, double s) {
    if (x.is_cemetery()) throw std::invalid_argument("flow: cemetery start point");
    if (s < 0.0) throw std::invalid_argument("flow: negative duration");
    FlowResult res;
    if (s == 0.0 || b.is_zero()) {
        res.endpoint = x;
        return res;
    }
    const detail::ChartState start = detail::to_state(x);
    const double h = std::min(s, kFlowStepCap) / 8.0;
    const detail::RawFlow coarse = detail::integrate(m, b, start, s, h);
    const detail::RawFlow fine = detail::integrate(m, b, start, s, 0.5 * h);
    if (fine.exploded || coarse.exploded) {
        res.exploded = true;
        res.s_exit = fine.exploded ? fine.s_exit : coarse.s_exit;
        res.endpoint = Point::cemetery();
        return res;
    }
    detail::ChartState extr = fine.state;
    for (int i = 0; i < extr.dim; ++i) {
        const auto a = static_cast<std::size_t>(i);
        extr.x[a] = fine.state.x[a] + (fine.state.x[a] - coarse.state.x[a]) / 15.0;
    }
    res.endpoint = detail::to_point(m, extr);
    return res;
}

struct ExplosionEstimate {
    bool bounded = false;   // true when an exit before the horizon was found
    double s_exit = 0.0;    // estimate when bounded; otherwise the horizon
};

/// Bisection for s(x) = inf{ t : phi_t(x) leaves M }, resolved to
/// 1e-6 * horizon; reports ">= horizon" via bounded = false.
inline ExplosionEstimate explosion_time(const Manifold& m, const VectorField& b, const Point& x,
                                        double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("explosion_time: horizon must be positive");
    ExplosionEstimate est;
    est.s_exit = horizon;
    const FlowResult full = flow(m, b, x, horizon);
    if (!full.exploded) return est;
    double lo = 0.0, hi = std::min(full.s_exit, horizon);
    const double tol = 1e-6 * horizon;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (flow(m, b, x, mid).exploded)
            hi = mid;
        else
            lo = mid;
    }
    est.bounded = true;
    est.s_exit = 0.5 * (lo + hi);
    return est;
}

// ---------------------------------------------------------------------------
// Numeric audit of the generator conditions
// ---------------------------------------------------------------------------

enum class KappaProfile { One, InvR, InvRLogR };

inline double kappa_threshold(KappaProfile k) {
    switch (k) {
        case KappaProfile::One: return 0.0;
        case KappaProfile::InvR: return 1.0;
        case KappaProfile::InvRLogR: return std::exp(1.0);
    }
    return 0.0;
}

inline double kappa_value(KappaProfile k, double r) {
    switch (k) {
        case KappaProfile::One: return 1.0;
        case KappaProfile::InvR: return 1.0 / r;
        case KappaProfile::InvRLogR: return 1.0 / (r * std::log(r));
    }
    return 1.0;
}

/// int_0^r kappa, with kappa extended by 1 below its validity threshold.
inline double kappa_integral(KappaProfile k, double r) {
    switch (k) {
        case KappaProfile::One: return r;
        case KappaProfile::InvR: return r <= 1.0 ? r : 1.0 + std::log(r);
        case KappaProfile::InvRLogR: {
            const double e = std::exp(1.0);
            return r <= e ? r : e + std::log(std::log(r));
        }
    }
    return r;
}

/// Sampled evidence for the dissipativity/density conditions. Reports the
/// empirical constants that would make the inequalities hold on the window;
/// this is measurement, not proof.
struct AuditReport {
    double lambda_hat = 0.0;    // max(0, -min div b / p + V)
    double c_drift_hat = 0.0;   // max(0, -min kappa(r) * br)
    double c_radial_hat = 0.0;  // max(0, -min kappa(r)(lap r + br) / int_0^r kappa)
    bool lambda_at_boundary = false;
    bool c_drift_at_boundary = false;
    std::int64_t samples_used = 0;
    std::int64_t samples_skipped = 0;
    // Euclidean drift-form margins (reported as their own inequalities):
    double euclid_drift_margin = 0.0;  // min sum b^i x_i / r
    double euclid_cond_a_margin = 0.0; // min (sum b^i x_i + (n-1)) / r^2
};

inline AuditReport audit_conditions(const Manifold& m, const VectorField& b, const ScalarField& V,
                                    double p, KappaProfile kappa, std::int64_t samples,
                                    const AxisBox& window) {
    if (samples < 1) throw std::invalid_argument("audit_conditions: samples must be >= 1");
    if (m.kind() == ManifoldKind::Circle)
        throw std::invalid_argument("audit_conditions: radial audits need a noncompact chart");
    const int dim = m.dim();
    const auto per_axis =
        std::max<std::int64_t>(2, static_cast<std::int64_t>(std::ceil(std::pow(static_cast<double>(samples), 1.0 / dim))));

    AuditReport rep;
    double min_lambda_expr = kInf, min_drift = kInf, min_radial = kInf;
    double min_euclid_drift = kInf, min_cond_a = kInf;
    std::array<double, 3> lambda_argmin{}, drift_argmin{};
    const double thresh = kappa_threshold(kappa);

    std::array<std::int64_t, 3> iv{};
    std::int64_t total = 1;
    for (int ax = 0; ax < dim; ++ax) total *= per_axis;
    for (std::int64_t flat = 0; flat < total; ++flat) {
        std::int64_t rem = flat;
        std::array<double, 3> xs{};
        for (int ax = dim - 1; ax >= 0; --ax) {
            iv[static_cast<std::size_t>(ax)] = rem % per_axis;
            rem /= per_axis;
        }
        for (int ax = 0; ax < dim; ++ax) {
            const auto a = static_cast<std::size_t>(ax);
            xs[a] = window.lo[a] + window.width(ax) * static_cast<double>(iv[a]) / static_cast<double>(per_axis - 1);
        }
        Point pt = m.kind() == ManifoldKind::Model2D ? Point::polar(xs[0], xs[1])
                                                     : Point::euclidean(std::span<const double>(xs.data(), static_cast<std::size_t>(dim)));
        if (m.kind() == ManifoldKind::Model2D && !(pt[0] > 0.0 && pt[0] < m.r0())) {
            ++rep.samples_skipped;
            continue;
        }

        const double lambda_expr = b.divergence(m, pt) / p + V(pt);
        if (lambda_expr < min_lambda_expr) {
            min_lambda_expr = lambda_expr;
            lambda_argmin = xs;
        }

        double r = 0.0;
        if (m.kind() == ManifoldKind::Euclidean) {
            for (int i = 0; i < dim; ++i) r += pt[i] * pt[i];
            r = std::sqrt(r);
        } else {
            r = pt[0];
        }
        ++rep.samples_used;
        if (r <= std::max(thresh, 1e-9)) {
            ++rep.samples_skipped;
            continue;
        }
        const double br = b.radial_component(m, pt);
        const double kv = kappa_value(kappa, r);
        if (kv * br < min_drift) {
            min_drift = kv * br;
            drift_argmin = xs;
        }
        const double lap_r = m.kind() == ManifoldKind::Euclidean
                                 ? static_cast<double>(dim - 1) / r
                                 : m.psi().deriv(r) / m.psi().value(r);
        min_radial = std::min(min_radial, kv * (lap_r + br) / kappa_integral(kappa, r));
        if (m.kind() == ManifoldKind::Euclidean) {
            double bx = 0.0;
            for (int i = 0; i < dim; ++i) bx += b.component(m, pt, i) * pt[i];
            min_euclid_drift = std::min(min_euclid_drift, bx / r);
            min_cond_a = std::min(min_cond_a, (bx + static_cast<double>(dim - 1)) / (r * r));
        }
    }

    rep.lambda_hat = std::max(0.0, -min_lambda_expr);
    rep.c_drift_hat = std::max(0.0, -min_drift);
    rep.c_radial_hat = std::isfinite(min_radial) ? std::max(0.0, -min_radial) : 0.0;
    rep.euclid_drift_margin = std::isfinite(min_euclid_drift) ? min_euclid_drift : 0.0;
    rep.euclid_cond_a_margin = std::isfinite(min_cond_a) ? min_cond_a : 0.0;

    auto near_boundary = [&](const std::array<double, 3>& xs) {
        for (int ax = 0; ax < dim; ++ax) {
            const auto a = static_cast<std::size_t>(ax);
            const double gap = window.width(ax) / static_cast<double>(per_axis - 1);
            if (xs[a] <= window.lo[a] + 1.5 * gap || xs[a] >= window.hi[a] - 1.5 * gap) return true;
        }
        return false;
    };
    rep.lambda_at_boundary = rep.lambda_hat > 0.0 && near_boundary(lambda_argmin);
    rep.c_drift_at_boundary = rep.c_drift_hat > 0.0 && near_boundary(drift_argmin);
    return rep;
}

}  // namespace driftwalk
