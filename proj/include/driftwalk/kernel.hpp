#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "driftwalk/flow.hpp"
#include "driftwalk/proximity.hpp"

namespace driftwalk {

/// Values over cells; the cemetery value is structurally zero and never stored.
struct GraphFunction {
    std::vector<double> values;

    double sup_norm() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }

    /// (sum |F(X)|^p m(X))^(1/p) over all cells.
    double lp_norm(double p, const Partition& part) const {
        std::vector<double> terms(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            terms[i] = std::pow(std::abs(values[i]), p) * part.volume(static_cast<std::int32_t>(i));
        return std::pow(pairwise_sum(terms), 1.0 / p);
    }
};

enum class RowKind : std::uint8_t {
    Interior,    // flow point landed in a cell; mass spreads over its rho-neighbors
    Exploded,    // flow left the manifold before s: the whole row feeds the cemetery
    WindowKill,  // flow point alive but outside the truncated window
};

/// Sparse substochastic realization of the one-step transition probability:
/// row X sends min{alpha V(x(X)),1} to the cemetery and distributes the
/// surviving mass over the rho-neighbors of the cell containing phi_s(x(X)),
/// each weighted by m(Y)/m(union). Row supports are borrowed from the graph's
/// run-compressed adjacency, so apply() works off volume prefix sums.
class TransitionOperator {
public:
    TransitionOperator(std::shared_ptr<const ProximityGraph> graph, double alpha, double s,
                       bool zero_drift, bool zero_potential, std::vector<RowKind> kind,
                       std::vector<std::int32_t> landed, std::vector<double> survival,
                       std::vector<double> kill, std::vector<double> inv_nvol)
        : graph_(std::move(graph)),
          alpha_(alpha),
          s_(s),
          zero_drift_(zero_drift),
          zero_potential_(zero_potential),
          kind_(std::move(kind)),
          landed_(std::move(landed)),
          survival_(std::move(survival)),
          kill_(std::move(kill)),
          inv_nvol_(std::move(inv_nvol)) {}

    const ProximityGraph& graph() const { return *graph_; }
    const Partition& partition() const { return graph_->partition(); }
    std::int32_t rows() const { return graph_->size(); }
    double alpha() const { return alpha_; }
    double s() const { return s_; }
    bool zero_drift() const { return zero_drift_; }
    bool zero_potential() const { return zero_potential_; }

    RowKind kind(std::int32_t x) const { return kind_[static_cast<std::size_t>(x)]; }
    double survival(std::int32_t x) const { return survival_[static_cast<std::size_t>(x)]; }
    double kill_mass(std::int32_t x) const { return kill_[static_cast<std::size_t>(x)]; }
    std::int32_t landed_cell(std::int32_t x) const { return landed_[static_cast<std::size_t>(x)]; }

    std::span<const IdRun> row_support(std::int32_t x) const {
        if (kind_[static_cast<std::size_t>(x)] != RowKind::Interior) return {};
        return graph_->runs(landed_[static_cast<std::size_t>(x)]);
    }

    /// p(X,Y) for an in-window target cell Y.
    double prob(std::int32_t x, std::int32_t y) const {
        if (kind_[static_cast<std::size_t>(x)] != RowKind::Interior) return 0.0;
        for (const IdRun& r : row_support(x))
            if (y >= r.first && y <= r.last)
                return survival_[static_cast<std::size_t>(x)] * partition().volume(y) *
                       inv_nvol_[static_cast<std::size_t>(x)];
        return 0.0;
    }

    /// Sum of the stored row weights (before the survival factor); equals the
    /// neighborhood mass ratio and is exactly 1 by shared-prefix arithmetic.
    double row_weight_sum(std::int32_t x) const {
        if (kind_[static_cast<std::size_t>(x)] != RowKind::Interior) return 0.0;
        const std::span<const double> pre = partition().volume_prefix();
        double s = 0.0;
        for (const IdRun& r : row_support(x))
            s += pre[static_cast<std::size_t>(r.last) + 1] - pre[static_cast<std::size_t>(r.first)];
        return s * inv_nvol_[static_cast<std::size_t>(x)];
    }

    /// kill + survival * sum(weights); 1 within 1e-12 for every row.
    double row_sum(std::int32_t x) const {
        if (kind_[static_cast<std::size_t>(x)] != RowKind::Interior) return 1.0;  // pure cemetery row
        return kill_[static_cast<std::size_t>(x)] + survival_[static_cast<std::size_t>(x)] * row_weight_sum(x);
    }

    template <typename Fn>
    void for_each_entry(std::int32_t x, Fn&& fn) const {
        if (kind_[static_cast<std::size_t>(x)] != RowKind::Interior) return;
        const double scale = survival_[static_cast<std::size_t>(x)] * inv_nvol_[static_cast<std::size_t>(x)];
        for (const IdRun& r : row_support(x))
            for (std::int32_t y = r.first; y <= r.last; ++y) fn(y, scale * partition().volume(y));
    }

    void apply(const GraphFunction& in, GraphFunction& out, const ExecContext& ctx,
               std::vector<double>& prefix_scratch) const {
        const auto n = static_cast<std::size_t>(rows());
        if (in.values.size() != n) throw std::invalid_argument("apply: size mismatch with the partition");
        out.values.resize(n);
        prefix_scratch.resize(n + 1);
        const Partition& part = partition();
        prefix_scratch[0] = 0.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += part.volume(static_cast<std::int32_t>(i)) * in.values[i];
            prefix_scratch[i + 1] = acc;
        }
        const double* pre = prefix_scratch.data();
        parallel_for(static_cast<std::int64_t>(n), ctx.threads, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t x = b; x < e; ++x) {
                const auto xi = static_cast<std::size_t>(x);
                if (kind_[xi] != RowKind::Interior) {
                    out.values[xi] = 0.0;
                    continue;
                }
                double s = 0.0;
                for (const IdRun& r : graph_->runs(landed_[xi]))
                    s += pre[static_cast<std::size_t>(r.last) + 1] - pre[static_cast<std::size_t>(r.first)];
                out.values[xi] = survival_[xi] * inv_nvol_[xi] * s;
            }
        });
    }

    GraphFunction apply(const GraphFunction& in, const ExecContext& ctx = {}) const {
        GraphFunction out;
        std::vector<double> scratch;
        apply(in, out, ctx, scratch);
        return out;
    }

    /// 1 - (m-weighted fraction of row mass that reaches in-window cells);
    /// counts killing, explosion and window truncation together.
    double lost_mass_fraction() const {
        const auto n = static_cast<std::size_t>(rows());
        std::vector<double> kept(n);
        for (std::size_t x = 0; x < n; ++x) {
            const auto xi = static_cast<std::int32_t>(x);
            kept[x] = partition().volume(xi) *
                      (kind_[x] == RowKind::Interior ? survival_[x] * row_weight_sum(xi) : 0.0);
        }
        return 1.0 - pairwise_sum(kept) / partition().total_volume();
    }

    std::int64_t count_rows(RowKind k) const {
        std::int64_t c = 0;
        for (RowKind rk : kind_)
            if (rk == k) ++c;
        return c;
    }

private:
    std::shared_ptr<const ProximityGraph> graph_;
    double alpha_, s_;
    bool zero_drift_, zero_potential_;
    std::vector<RowKind> kind_;
    std::vector<std::int32_t> landed_;
    std::vector<double> survival_, kill_, inv_nvol_;
};

/// Builds p_{alpha,s}: flows each reference point for duration s, locates the
/// landing cell, and weights its rho-neighborhood by volume. Exploded flows
/// and out-of-window landings become pure cemetery rows (the latter tracked
/// separately as window kills).
inline TransitionOperator build_operator(std::shared_ptr<const ProximityGraph> graph,
                                         const VectorField& b, const ScalarField& V, double alpha,
                                         double s, const ExecContext& ctx = {}) {
    if (alpha < 0.0 || s < 0.0) throw std::invalid_argument("build_operator: alpha and s must be >= 0");
    const ProximityGraph& g = *graph;
    const Partition& part = g.partition();
    const Manifold& m = part.manifold();
    const auto n = static_cast<std::size_t>(part.size());

    std::vector<RowKind> kind(n, RowKind::Interior);
    std::vector<std::int32_t> landed(n, Partition::kCemetery);
    std::vector<double> survival(n, 0.0), kill(n, 1.0), inv_nvol(n, 0.0);

    parallel_for(static_cast<std::int64_t>(n), ctx.threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t x = lo; x < hi; ++x) {
            const auto xi = static_cast<std::size_t>(x);
            const Point& ref = part.cell(static_cast<std::int32_t>(x)).ref_point;
            const FlowResult fr = flow(m, b, ref, s);
            if (fr.exploded) {
                kind[xi] = RowKind::Exploded;
                continue;
            }
            const std::int32_t lc = part.locate(fr.endpoint);
            if (lc == Partition::kCemetery) {
                kind[xi] = RowKind::WindowKill;
                continue;
            }
            const double av = alpha * V(ref);
            if (av < 0.0)
                throw std::invalid_argument(
                    "build_operator: negative killing rate; shift the potential first");
            kind[xi] = RowKind::Interior;
            landed[xi] = lc;
            survival[xi] = std::max(1.0 - av, 0.0);
            kill[xi] = std::min(av, 1.0);
            inv_nvol[xi] = 1.0 / g.neighborhood_volume(lc);
        }
    });

    return TransitionOperator(std::move(graph), alpha, s, b.is_zero(), V.is_zero(), std::move(kind),
                              std::move(landed), std::move(survival), std::move(kill),
                              std::move(inv_nvol));
}

struct SymmetryReport {
    double max_violation = 0.0;   // |p(X,Y) m(X) m(N(X)) - m(X) m(Y)| and the Y/X mirror
    std::int64_t pairs_checked = 0;
    bool within_tolerance = true;
};

/// Detailed-balance audit for the driftless, killing-free walk:
/// p(X,Y) m(X) m(N(X)) must equal m(X) m(Y) (= the same with X and Y swapped).
inline SymmetryReport symmetry_check(const TransitionOperator& op, double tolerance) {
    if (!op.zero_drift() || !op.zero_potential())
        throw std::invalid_argument("symmetry_check: only defined for b = 0, V = 0 operators");
    SymmetryReport rep;
    const Partition& part = op.partition();
    for (std::int32_t x = 0; x < op.rows(); ++x) {
        if (op.kind(x) != RowKind::Interior) continue;
        const double mx = part.volume(x);
        for (const IdRun& r : op.row_support(x)) {
            for (std::int32_t y = r.first; y <= r.last; ++y) {
                const double my = part.volume(y);
                const double pxy_mx_nx = op.prob(x, y) * mx * op.graph().neighborhood_volume(op.landed_cell(x));
                const double pyx_my_ny = op.prob(y, x) * my * op.graph().neighborhood_volume(op.landed_cell(y));
                rep.max_violation = std::max(rep.max_violation, std::abs(pxy_mx_nx - mx * my));
                rep.max_violation = std::max(rep.max_violation, std::abs(pxy_mx_nx - pyx_my_ny));
                ++rep.pairs_checked;
            }
        }
    }
    rep.within_tolerance = rep.max_violation <= tolerance;
    return rep;
}

}  // namespace driftwalk
