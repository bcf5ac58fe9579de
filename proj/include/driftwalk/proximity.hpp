#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "driftwalk/common.hpp"
#include "driftwalk/partition.hpp"

namespace driftwalk {

// ---------------------------------------------------------------------------
// Hausdorff distance between cell shapes
// ---------------------------------------------------------------------------

namespace detail {

inline void arc_sample_points(const ArcShape& arc, const CellShape& other,
                              std::vector<Point>& out) {
    out.push_back(Point::circle(arc.a));
    out.push_back(Point::circle(arc.b));
    // d(., other) on the circle peaks at the antipode of the other arc's
    // midpoint; include it when it falls inside this arc.
    if (const auto* oa = std::get_if<ArcShape>(&other)) {
        const double peak = canonical_angle(0.5 * (oa->a + oa->b) + kPi);
        if (peak >= arc.a && peak <= arc.b) out.push_back(Point::circle(peak));
    }
}

inline void box_sample_points(const AxisBox& box, std::vector<Point>& out) {
    // Corners are exact maximizers: distance-to-a-box is convex, boxes are
    // polytopes, so the directed sup is attained at a vertex.
    const int corners = 1 << box.n;
    for (int mask = 0; mask < corners; ++mask) {
        std::array<double, 3> xs{};
        for (int ax = 0; ax < box.n; ++ax)
            xs[static_cast<std::size_t>(ax)] =
                (mask >> ax) & 1 ? box.hi[static_cast<std::size_t>(ax)] : box.lo[static_cast<std::size_t>(ax)];
        out.push_back(Point::euclidean(std::span<const double>(xs.data(), static_cast<std::size_t>(box.n))));
    }
}

inline void polar_sample_points(const PolarRectShape& pr, const CellShape& other,
                                std::vector<Point>& out) {
    const double rs[3] = {pr.r_lo, 0.5 * (pr.r_lo + pr.r_hi), pr.r_hi};
    const double ts[3] = {pr.th_lo, 0.5 * (pr.th_lo + pr.th_hi), pr.th_hi};
    for (double r : rs)
        for (double t : ts) out.push_back(Point::polar(r, t));
    if (const auto* opr = std::get_if<PolarRectShape>(&other)) {
        const double peak = canonical_angle(0.5 * (opr->th_lo + opr->th_hi) + kPi);
        if (peak >= pr.th_lo && peak <= pr.th_hi) {
            out.push_back(Point::polar(pr.r_lo, peak));
            out.push_back(Point::polar(pr.r_hi, peak));
        }
    }
}

inline double directed_hausdorff(const Manifold& m, const CellShape& from, const CellShape& to) {
    std::vector<Point> samples;
    samples.reserve(16);
    switch (m.kind()) {
        case ManifoldKind::Euclidean: box_sample_points(std::get<BoxShape>(from).box, samples); break;
        case ManifoldKind::Circle: arc_sample_points(std::get<ArcShape>(from), to, samples); break;
        case ManifoldKind::Model2D: polar_sample_points(std::get<PolarRectShape>(from), to, samples); break;
    }
    double sup = 0.0;
    for (const Point& p : samples) sup = std::max(sup, point_shape_distance(m, p, to));
    return sup;
}

inline bool shape_matches_manifold(const Manifold& m, const CellShape& s) {
    switch (m.kind()) {
        case ManifoldKind::Euclidean: return std::holds_alternative<BoxShape>(s);
        case ManifoldKind::Circle: return std::holds_alternative<ArcShape>(s);
        case ManifoldKind::Model2D: return std::holds_alternative<PolarRectShape>(s);
    }
    return false;
}

}  // namespace detail

/// d_H(A,B) = max of the two directed sups. Exact for intervals, boxes and
/// arc pairs; boundary-sampled (corners, midpoints, angular peaks) for polar
/// rectangles in the chart surrogate metric.
inline double hausdorff(const Manifold& m, const CellShape& a, const CellShape& b) {
    if (!detail::shape_matches_manifold(m, a) || !detail::shape_matches_manifold(m, b))
        throw std::invalid_argument("hausdorff: shapes do not belong to this manifold");
    return std::max(detail::directed_hausdorff(m, a, b), detail::directed_hausdorff(m, b, a));
}

// ---------------------------------------------------------------------------
// Proximity graph
// ---------------------------------------------------------------------------

/// Inclusive run of consecutive cell ids; adjacency lists are stored as runs
/// since d_H-neighborhoods of lattice cells are unions of few index intervals.
struct IdRun {
    std::int32_t first = 0;
    std::int32_t last = 0;
};

class ProximityGraph {
public:
    ProximityGraph(std::shared_ptr<const Partition> part, double rho,
                   std::vector<std::int64_t> run_ptr, std::vector<IdRun> runs)
        : part_(std::move(part)), rho_(rho), run_ptr_(std::move(run_ptr)), runs_(std::move(runs)) {
        edge_count_ = 0;
        max_degree_ = 0;
        for (std::int32_t id = 0; id < size(); ++id) {
            const std::int64_t deg = neighbor_count(id);
            edge_count_ += deg;
            max_degree_ = std::max(max_degree_, deg);
        }
    }

    const Partition& partition() const { return *part_; }
    std::shared_ptr<const Partition> partition_ptr() const { return part_; }
    double rho() const { return rho_; }
    std::int32_t size() const { return part_->size(); }
    std::int64_t edge_count() const { return edge_count_; }
    std::int64_t max_degree() const { return max_degree_; }
    /// Quantitative-bound sanity: mesh < rho/3.
    bool third_bound_ok() const { return part_->mesh() < rho_ / 3.0; }

    std::span<const IdRun> runs(std::int32_t id) const {
        const auto i = static_cast<std::size_t>(id);
        return {runs_.data() + run_ptr_[i], static_cast<std::size_t>(run_ptr_[i + 1] - run_ptr_[i])};
    }

    std::int64_t neighbor_count(std::int32_t id) const {
        std::int64_t n = 0;
        for (const IdRun& r : runs(id)) n += r.last - r.first + 1;
        return n;
    }

    bool adjacent(std::int32_t a, std::int32_t b) const {
        for (const IdRun& r : runs(a))
            if (b >= r.first && b <= r.last) return true;
        return false;
    }

    template <typename Fn>
    void for_each_neighbor(std::int32_t id, Fn&& fn) const {
        for (const IdRun& r : runs(id))
            for (std::int32_t j = r.first; j <= r.last; ++j) fn(j);
    }

    std::vector<std::int32_t> neighbor_ids(std::int32_t id) const {
        std::vector<std::int32_t> out;
        out.reserve(static_cast<std::size_t>(neighbor_count(id)));
        for_each_neighbor(id, [&](std::int32_t j) { out.push_back(j); });
        return out;
    }

    /// Volume of the (disjoint) union of a cell's neighbors, via the shared
    /// volume prefix so it matches the transition-operator arithmetic exactly.
    double neighborhood_volume(std::int32_t id) const {
        const std::span<const double> pre = part_->volume_prefix();
        double s = 0.0;
        for (const IdRun& r : runs(id))
            s += pre[static_cast<std::size_t>(r.last) + 1] - pre[static_cast<std::size_t>(r.first)];
        return s;
    }

private:
    std::shared_ptr<const Partition> part_;
    double rho_;
    std::vector<std::int64_t> run_ptr_;
    std::vector<IdRun> runs_;
    std::int64_t edge_count_ = 0;
    std::int64_t max_degree_ = 0;
};

namespace detail {

inline std::vector<IdRun> compress_runs(std::vector<std::int32_t>& ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());  // wrapped windows can revisit
    std::vector<IdRun> runs;
    for (std::size_t i = 0; i < ids.size();) {
        std::size_t j = i + 1;
        while (j < ids.size() && ids[j] == ids[j - 1] + 1) ++j;
        runs.push_back(IdRun{ids[i], ids[j - 1]});
        i = j;
    }
    return runs;
}

template <typename Fn>
void candidate_neighbors(const Partition& part, double rho, std::int32_t id, Fn&& fn) {
    const double reach = rho + 2.0 * part.mesh();
    if (const auto* g = std::get_if<Partition::GridIndex>(&part.index())) {
        const int n = part.manifold().dim();
        std::array<std::int32_t, 3> iv{};
        std::int64_t rem = id;
        for (int ax = n - 1; ax >= 0; --ax) {
            iv[static_cast<std::size_t>(ax)] = static_cast<std::int32_t>(rem % g->dims[static_cast<std::size_t>(ax)]);
            rem /= g->dims[static_cast<std::size_t>(ax)];
        }
        const auto ra = static_cast<std::int32_t>(std::ceil(reach * g->k)) + 1;
        std::array<std::int32_t, 3> lo{}, hi{};
        for (int ax = 0; ax < n; ++ax) {
            const auto a = static_cast<std::size_t>(ax);
            lo[a] = std::max(0, iv[a] - ra);
            hi[a] = std::min(g->dims[a] - 1, iv[a] + ra);
        }
        std::array<std::int32_t, 3> cur = lo;
        while (true) {
            std::int64_t cid = 0;
            for (int ax = 0; ax < n; ++ax) cid = cid * g->dims[static_cast<std::size_t>(ax)] + cur[static_cast<std::size_t>(ax)];
            fn(static_cast<std::int32_t>(cid));
            int ax = n - 1;
            while (ax >= 0) {
                if (++cur[static_cast<std::size_t>(ax)] <= hi[static_cast<std::size_t>(ax)]) break;
                cur[static_cast<std::size_t>(ax)] = lo[static_cast<std::size_t>(ax)];
                --ax;
            }
            if (ax < 0) break;
        }
        return;
    }
    if (const auto* c = std::get_if<Partition::CircleIndex>(&part.index())) {
        const double w = kTwoPi / c->K;
        auto d = static_cast<std::int64_t>(std::ceil(reach / w)) + 1;
        d = std::min<std::int64_t>(d, c->K / 2 + 1);
        for (std::int64_t off = -d; off <= d; ++off) {
            std::int64_t j = (id + off) % c->K;
            if (j < 0) j += c->K;
            fn(static_cast<std::int32_t>(j));
        }
        return;
    }
    const auto& mi = std::get<Partition::Model2DIndex>(part.index());
    // Annulus of this cell by binary search on offsets.
    const auto it = std::upper_bound(mi.offset.begin(), mi.offset.end(), id);
    const auto m = static_cast<std::int32_t>(std::distance(mi.offset.begin(), it)) - 1;
    const std::int32_t j = id - mi.offset[static_cast<std::size_t>(m)];
    const double theta = kTwoPi * (static_cast<double>(j) + 0.5) / mi.sectors[static_cast<std::size_t>(m)];
    const auto band = static_cast<std::int32_t>(std::ceil(reach * mi.l)) + 1;
    const PsiProfile& psi = part.manifold().psi();
    for (std::int32_t m2 = std::max(0, m - band); m2 <= std::min(mi.annuli - 1, m + band); ++m2) {
        const std::int32_t K2 = mi.sectors[static_cast<std::size_t>(m2)];
        const double w2 = kTwoPi / K2;
        const double r_lo = static_cast<double>(std::min(m, m2)) / mi.l;
        const double r_hi = static_cast<double>(std::max(m, m2) + 1) / mi.l;
        const double psi_min = std::max(psi.min_on(r_lo, r_hi), 1e-12);
        const double ang = reach / psi_min + w2 + kTwoPi / mi.sectors[static_cast<std::size_t>(m)];
        auto dj = static_cast<std::int64_t>(std::ceil(ang / w2)) + 1;
        const double center2 = theta / w2 - 0.5;
        const auto jc = static_cast<std::int64_t>(std::llround(center2));
        if (2 * dj + 1 >= K2) {
            for (std::int32_t jj = 0; jj < K2; ++jj) fn(mi.offset[static_cast<std::size_t>(m2)] + jj);
        } else {
            for (std::int64_t off = -dj; off <= dj; ++off) {
                std::int64_t jj = (jc + off) % K2;
                if (jj < 0) jj += K2;
                fn(mi.offset[static_cast<std::size_t>(m2)] + static_cast<std::int32_t>(jj));
            }
        }
    }
}

}  // namespace detail

/// Builds the rho-proximity graph: cells are adjacent iff d_H < rho (strict;
/// ties resolve to non-adjacent). Candidates are pruned by the lattice index
/// so only nearby cells are tested.
inline ProximityGraph build_graph(std::shared_ptr<const Partition> part, double rho,
                                  const ExecContext& ctx = {}) {
    const Partition& p = *part;
    if (!(rho > p.mesh())) throw std::invalid_argument("build_graph: rho must exceed the partition mesh");

    const std::int32_t n = p.size();
    std::vector<std::vector<IdRun>> per_cell(static_cast<std::size_t>(n));
    const Manifold& m = p.manifold();

    parallel_for(n, ctx.threads, [&](std::int64_t b, std::int64_t e) {
        std::vector<std::int32_t> hits;
        for (std::int64_t id = b; id < e; ++id) {
            hits.clear();
            const auto i32 = static_cast<std::int32_t>(id);
            const CellShape& mine = p.cell(i32).shape;
            detail::candidate_neighbors(p, rho, i32, [&](std::int32_t other) {
                if (other == i32) {
                    hits.push_back(other);  // d_H(X,X) = 0
                    return;
                }
                if (hausdorff(m, mine, p.cell(other).shape) < rho) hits.push_back(other);
            });
            per_cell[static_cast<std::size_t>(id)] = detail::compress_runs(hits);
        }
    });

    std::vector<std::int64_t> run_ptr(static_cast<std::size_t>(n) + 1, 0);
    for (std::int32_t i = 0; i < n; ++i)
        run_ptr[static_cast<std::size_t>(i) + 1] =
            run_ptr[static_cast<std::size_t>(i)] + static_cast<std::int64_t>(per_cell[static_cast<std::size_t>(i)].size());
    std::vector<IdRun> runs;
    runs.reserve(static_cast<std::size_t>(run_ptr.back()));
    for (auto& rs : per_cell) runs.insert(runs.end(), rs.begin(), rs.end());
    return ProximityGraph(std::move(part), rho, std::move(run_ptr), std::move(runs));
}

/// Sum of cell volumes over a set of ids (cells are disjoint).
inline double neighborhood_union_volume(const ProximityGraph& g, std::span<const std::int32_t> ids) {
    if (ids.empty()) throw std::invalid_argument("neighborhood_union_volume: empty id set");
    double s = 0.0;
    for (std::int32_t id : ids) s += g.partition().volume(id);
    return s;
}

}  // namespace driftwalk
