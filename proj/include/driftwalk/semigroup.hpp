#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "driftwalk/kernel.hpp"

namespace driftwalk {

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

/// The walk scale: one iteration flows for delta = rho^2 / (2(n+2)) and kills
/// at rate delta * V; floor(t/delta) iterations approximate time t. The
/// constant 2(n+2) matches the second moment of the uniform law on a ball.
struct ScaleParams {
    double rho = 0.0;
    int n = 1;
    double delta = 0.0;

    std::int64_t steps(double t) const {
        if (t < 0.0) throw std::invalid_argument("steps: negative time");
        // Nudge absorbs the last-ulp error of t/delta so exact ratios
        // (e.g. t = 1, rho = 0.1, n = 1 -> 600) floor as in real arithmetic.
        return static_cast<std::int64_t>(std::floor(t / delta + 1e-9));
    }
};

inline ScaleParams scale(double rho, int n) {
    if (!(rho > 0.0)) throw std::invalid_argument("scale: rho must be positive");
    ScaleParams sp;
    sp.rho = rho;
    sp.n = n;
    sp.delta = rho * rho / (2.0 * (n + 2));
    return sp;
}

// ---------------------------------------------------------------------------
// Discretization maps
// ---------------------------------------------------------------------------

/// [f]: sample f at the reference points.
inline GraphFunction discretize_pointwise(const TestFn& f, const Partition& part) {
    GraphFunction out;
    out.values.resize(static_cast<std::size_t>(part.size()));
    for (std::int32_t i = 0; i < part.size(); ++i)
        out.values[static_cast<std::size_t>(i)] = f(part.cell(i).ref_point);
    return out;
}

namespace detail {

inline double cell_mean(const Manifold& m, const TestFn& f, const Cell& cell) {
    switch (m.kind()) {
        case ManifoldKind::Euclidean: {
            const AxisBox& box = std::get<BoxShape>(cell.shape).box;
            double integral = 0.0;
            if (box.n == 1) {
                integral = integrate_adaptive(box.lo[0], box.hi[0], [&](double x) {
                    const Point p = Point::line(x);
                    return f(p) * m.measure_density(p);
                });
            } else if (box.n == 2) {
                integral = integrate_adaptive(box.lo[0], box.hi[0], [&](double x) {
                    return integrate_adaptive(box.lo[1], box.hi[1], [&](double y) {
                        const Point p = Point::plane(x, y);
                        return f(p) * m.measure_density(p);
                    });
                });
            } else {
                integral = integrate_adaptive(box.lo[0], box.hi[0], [&](double x) {
                    return integrate_adaptive(box.lo[1], box.hi[1], [&](double y) {
                        return integrate_adaptive(box.lo[2], box.hi[2], [&](double z) {
                            const Point p = Point::space(x, y, z);
                            return f(p) * m.measure_density(p);
                        });
                    });
                });
            }
            return integral / cell.volume;
        }
        case ManifoldKind::Circle: {
            const ArcShape& arc = std::get<ArcShape>(cell.shape);
            const double integral = integrate_adaptive(arc.a, arc.b, [&](double th) {
                const Point p = Point::circle(th);
                return f(p) * m.measure_density(p);
            });
            return integral / cell.volume;
        }
        case ManifoldKind::Model2D: {
            const PolarRectShape& pr = std::get<PolarRectShape>(cell.shape);
            const double integral = integrate_adaptive(pr.r_lo, pr.r_hi, [&](double r) {
                return m.psi().value(r) * integrate_adaptive(pr.th_lo, pr.th_hi, [&](double th) {
                    return f(Point::polar(r, th));
                });
            });
            return integral / cell.volume;
        }
    }
    throw std::logic_error("cell_mean: unknown manifold kind");
}

}  // namespace detail

/// P f: cell averages with respect to the (possibly weighted) measure.
inline GraphFunction discretize_mean(const TestFn& f, const Partition& part,
                                     const ExecContext& ctx = {}) {
    GraphFunction out;
    out.values.resize(static_cast<std::size_t>(part.size()));
    const Manifold& m = part.manifold();
    parallel_for(part.size(), ctx.threads, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i)
            out.values[static_cast<std::size_t>(i)] =
                detail::cell_mean(m, f, part.cell(static_cast<std::int32_t>(i)));
    });
    return out;
}

// ---------------------------------------------------------------------------
// The iterated discrete semigroup
// ---------------------------------------------------------------------------

enum class Track { C0, Lp };

struct SemigroupResult {
    GraphFunction values;
    double rho = 0.0;
    double delta = 0.0;
    std::int64_t steps = 0;
    double sim_time = 0.0;          // delta * steps
    double compensator = 1.0;       // e^{v0 * delta * steps} for shifted killing
    double lost_mass_fraction = 0.0;
    std::int64_t window_kill_rows = 0;
    std::int64_t exploded_rows = 0;
};

/// L^{floor(t/delta)} applied to [f] (C0 track) or P f (Lp track), where L is
/// the one-step operator with alpha = s = delta. A lower bound -v0 on V runs
/// the walk with killing rate delta (V + v0) and multiplies the result by
/// e^{v0 * delta * steps}; the compensator uses the simulated horizon, not t,
/// so shift and killing stay at the same clock.
inline SemigroupResult run_semigroup(std::shared_ptr<const ProximityGraph> graph,
                                     const VectorField& b, const ScalarField& V, double v0,
                                     const TestFn& f, double t, Track track = Track::C0,
                                     const ExecContext& ctx = {}) {
    const ProximityGraph& g = *graph;
    const Partition& part = g.partition();
    if (!(part.mesh() < g.rho() / 3.0))
        throw std::invalid_argument("run_semigroup: requires mesh < rho/3");
    if (v0 < 0.0) throw std::invalid_argument("run_semigroup: v0 must be >= 0");

    const ScaleParams sp = scale(g.rho(), part.manifold().dim());
    const std::int64_t steps = sp.steps(t);
    const ScalarField killing = V.shifted(v0);
    const TransitionOperator op = build_operator(graph, b, killing, sp.delta, sp.delta, ctx);

    SemigroupResult res;
    res.rho = g.rho();
    res.delta = sp.delta;
    res.steps = steps;
    res.sim_time = sp.delta * static_cast<double>(steps);
    res.lost_mass_fraction = op.lost_mass_fraction();
    res.window_kill_rows = op.count_rows(RowKind::WindowKill);
    res.exploded_rows = op.count_rows(RowKind::Exploded);

    GraphFunction cur = track == Track::C0 ? discretize_pointwise(f, part) : discretize_mean(f, part, ctx);
    GraphFunction next;
    std::vector<double> scratch;
    for (std::int64_t k = 0; k < steps; ++k) {
        op.apply(cur, next, ctx, scratch);
        std::swap(cur, next);
    }
    res.compensator = std::exp(v0 * res.sim_time);
    if (res.compensator != 1.0)
        for (double& v : cur.values) v *= res.compensator;
    res.values = std::move(cur);
    return res;
}

// ---------------------------------------------------------------------------
// Generator residual diagnostic
// ---------------------------------------------------------------------------

struct ResidualReport {
    double sup = 0.0;
    std::vector<std::int32_t> cells;      // cells inside the support region
    std::vector<double> residuals;        // matching per-cell residuals
    double delta = 0.0;
};

/// (2(n+2)/rho^2)(I - L_delta)[f](X) - [A f](X) over cells near the support
/// of f; its sup is bounded by K1 mesh/rho^2 + K2 rho.
inline ResidualReport generator_residual(std::shared_ptr<const ProximityGraph> graph,
                                         const VectorField& b, const ScalarField& V, const TestFn& f,
                                         const ExecContext& ctx = {}) {
    const ProximityGraph& g = *graph;
    const Partition& part = g.partition();
    const Manifold& m = part.manifold();
    const ScaleParams sp = scale(g.rho(), m.dim());

    double vmax = 0.0;
    for (std::int32_t i = 0; i < part.size(); ++i)
        vmax = std::max(vmax, V(part.cell(i).ref_point));
    if (sp.delta > std::min(1.0, vmax > 0.0 ? 1.0 / vmax : 1.0))
        throw std::invalid_argument("generator_residual: delta exceeds min{1, 1/max V}");

    const TransitionOperator op = build_operator(graph, b, V, sp.delta, sp.delta, ctx);
    const GraphFunction F = discretize_pointwise(f, part);
    const GraphFunction LF = op.apply(F, ctx);

    const SupportHint hint = f.support(m);
    ResidualReport rep;
    rep.delta = sp.delta;
    for (std::int32_t i = 0; i < part.size(); ++i) {
        const Point& x = part.cell(i).ref_point;
        if (!hint.everywhere) {
            double gap = 0.0;
            for (int ax = 0; ax < m.dim(); ++ax) {
                const auto a = static_cast<std::size_t>(ax);
                const double lo = hint.box.lo[a], hi = hint.box.hi[a];
                const double d = x[ax] < lo ? lo - x[ax] : (x[ax] > hi ? x[ax] - hi : 0.0);
                gap += d * d;
            }
            if (std::sqrt(gap) > 2.0) continue;
        }
        const auto idx = static_cast<std::size_t>(i);
        const double discrete = (F.values[idx] - LF.values[idx]) / sp.delta;
        const double res = discrete - apply_A(m, b, V, f, x);
        rep.cells.push_back(i);
        rep.residuals.push_back(res);
        rep.sup = std::max(rep.sup, std::abs(res));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Pointwise / mean readout
// ---------------------------------------------------------------------------

inline double pointwise_eval(const GraphFunction& result, const Partition& part, const Point& x) {
    const std::int32_t id = part.locate(x);
    if (id == Partition::kCemetery)
        throw std::invalid_argument("pointwise_eval: point outside the window");
    return result.values[static_cast<std::size_t>(id)];
}

inline double mean_eval(const GraphFunction& result, const Partition& part,
                        std::span<const std::int32_t> ids) {
    if (ids.empty()) throw std::invalid_argument("mean_eval: empty cell set");
    double s = 0.0;
    for (std::int32_t id : ids) s += result.values[static_cast<std::size_t>(id)] * part.volume(id);
    return s;
}

// ---------------------------------------------------------------------------
// Ball moment identity (the origin of the 2(n+2) scale constant)
// ---------------------------------------------------------------------------

inline double unit_ball_volume(int n) {
    switch (n) {
        case 1: return 2.0;
        case 2: return kPi;
        case 3: return 4.0 * kPi / 3.0;
    }
    throw std::invalid_argument("unit_ball_volume: n must be 1..3");
}

/// Exact second moment: int_{B(rho)} u_j u_k du = delta_jk omega_n rho^{n+2}/(n+2).
inline double ball_second_moment_exact(int n, double rho, int j, int k) {
    if (j != k) return 0.0;
    return unit_ball_volume(n) * std::pow(rho, n + 2) / (n + 2);
}

struct MomentEstimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Monte Carlo estimate of the same moment by rejection from the cube; each
/// sample index owns a counter RNG stream, so the estimate is reproducible
/// and thread-count independent.
inline MomentEstimate ball_second_moment_mc(int n, double rho, int j, int k, std::int64_t samples,
                                            std::uint64_t seed, const ExecContext& ctx = {}) {
    if (samples < 2) throw std::invalid_argument("ball_second_moment_mc: need samples >= 2");
    std::vector<double> vals(static_cast<std::size_t>(samples));
    std::vector<std::uint8_t> accepted(static_cast<std::size_t>(samples));
    parallel_for(samples, ctx.threads, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) {
            CounterRng rng(seed, static_cast<std::uint64_t>(i));
            double u[3] = {0, 0, 0};
            double norm2 = 0.0;
            for (int d = 0; d < n; ++d) {
                u[d] = rho * (2.0 * rng.uniform() - 1.0);
                norm2 += u[d] * u[d];
            }
            const auto ii = static_cast<std::size_t>(i);
            accepted[ii] = norm2 <= rho * rho ? 1 : 0;
            vals[ii] = accepted[ii] ? u[j] * u[k] : 0.0;
        }
    });
    std::vector<double> kept;
    kept.reserve(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i)
        if (accepted[i]) kept.push_back(vals[i]);
    if (kept.size() < 2) throw std::runtime_error("ball_second_moment_mc: rejection left too few samples");
    const double nacc = static_cast<double>(kept.size());
    const double mean = pairwise_sum(kept) / nacc;
    std::vector<double> sq(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) sq[i] = (kept[i] - mean) * (kept[i] - mean);
    const double var = pairwise_sum(sq) / (nacc - 1.0);
    const double ball_vol = unit_ball_volume(n) * std::pow(rho, n);
    MomentEstimate est;
    est.mean = mean * ball_vol;
    est.se = std::sqrt(var / nacc) * ball_vol;
    return est;
}

}  // namespace driftwalk
