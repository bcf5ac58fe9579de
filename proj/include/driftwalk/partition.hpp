#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "driftwalk/geometry.hpp"

namespace driftwalk {

inline constexpr std::int64_t kMaxCells = 10'000'000;

/// How reference points are placed inside cells. Center is the default.
/// Dithered spreads them on a low-discrepancy lattice; it removes the
/// resonance between a constant drift step and a perfectly regular reference
/// lattice (every row would otherwise snap to the same intra-cell offset,
/// turning an O(mesh) rounding into a coherent per-step drift error).
enum class RefPolicy { Center, Dithered };

namespace detail {

inline double dither_fraction(std::int64_t id, int axis) {
    static constexpr double kWeyl[3] = {0.6180339887498949, 0.7548776662466927, 0.8191725133961645};
    const double u = 0.5 + static_cast<double>(id) * kWeyl[axis];
    double f = u - std::floor(u);
    return std::clamp(f, 0.001, 0.999);
}

inline double axis_fraction(RefPolicy policy, std::int64_t id, int axis) {
    return policy == RefPolicy::Center ? 0.5 : dither_fraction(id, axis);
}

}  // namespace detail

struct Cell {
    std::int32_t id = 0;
    CellShape shape;
    double volume = 0.0;
    Point ref_point;
    double diameter_bound = 0.0;
};

class Partition {
public:
    static constexpr std::int32_t kCemetery = -1;

    struct GridIndex {
        int k = 1;                                  // lattice density: faces at integers / k
        std::array<std::int64_t, 3> i0{};           // lower face indices
        std::array<std::int32_t, 3> dims{};         // cells per axis
    };
    struct CircleIndex {
        std::int32_t K = 0;
    };
    struct Model2DIndex {
        int l = 1;
        std::int32_t annuli = 0;
        std::vector<std::int32_t> sectors;          // K(l,m) per annulus
        std::vector<std::int32_t> offset;           // first cell id per annulus
        double r_max = 0.0;
    };
    using Index = std::variant<GridIndex, CircleIndex, Model2DIndex>;

    Partition(Manifold m, std::vector<Cell> cells, Index index, RefPolicy policy)
        : manifold_(std::move(m)), cells_(std::move(cells)), index_(std::move(index)), policy_(policy) {
        mesh_ = 0.0;
        vol_prefix_.resize(cells_.size() + 1, 0.0);
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            mesh_ = std::max(mesh_, cells_[i].diameter_bound);
            vol_prefix_[i + 1] = vol_prefix_[i] + cells_[i].volume;
        }
    }

    const Manifold& manifold() const { return manifold_; }
    const std::vector<Cell>& cells() const { return cells_; }
    const Cell& cell(std::int32_t id) const { return cells_[static_cast<std::size_t>(id)]; }
    std::int32_t size() const { return static_cast<std::int32_t>(cells_.size()); }
    double mesh() const { return mesh_; }
    RefPolicy ref_policy() const { return policy_; }
    const Index& index() const { return index_; }

    double volume(std::int32_t id) const { return cells_[static_cast<std::size_t>(id)].volume; }
    double total_volume() const { return vol_prefix_.back(); }
    /// Prefix sums of cell volumes; shared by the transition operator.
    std::span<const double> volume_prefix() const { return vol_prefix_; }

    /// Unique cell containing x; kCemetery for the cemetery point and for
    /// points outside the truncated window.
    std::int32_t locate(const Point& p) const {
        if (p.is_cemetery()) return kCemetery;
        return std::visit([&](const auto& idx) { return locate_impl(idx, p); }, index_);
    }

private:
    std::int32_t locate_impl(const GridIndex& g, const Point& p) const {
        if (p.dim() != manifold_.dim()) return kCemetery;
        std::int64_t id = 0;
        for (int ax = 0; ax < manifold_.dim(); ++ax) {
            const auto a = static_cast<std::size_t>(ax);
            const double x = p[ax];
            std::int64_t i = static_cast<std::int64_t>(std::floor(x * g.k)) - g.i0[a];
            // Half-open faces are decided by the stored boundary arithmetic.
            while (i >= 0 && x < face(g, ax, i)) --i;
            while (i < g.dims[a] && x >= face(g, ax, i + 1)) ++i;
            if (i < 0 || i >= g.dims[a]) return kCemetery;
            id = id * g.dims[a] + i;
        }
        return static_cast<std::int32_t>(id);
    }

    double face(const GridIndex& g, int ax, std::int64_t i) const {
        return static_cast<double>(g.i0[static_cast<std::size_t>(ax)] + i) / g.k;
    }

    std::int32_t locate_impl(const CircleIndex& c, const Point& p) const {
        const double t = canonical_angle(p[0]);
        std::int64_t j = static_cast<std::int64_t>(std::floor(t * c.K / kTwoPi));
        j = std::clamp<std::int64_t>(j, 0, c.K - 1);
        while (j > 0 && t < kTwoPi * static_cast<double>(j) / c.K) --j;
        while (j < c.K - 1 && t >= kTwoPi * static_cast<double>(j + 1) / c.K) ++j;
        return static_cast<std::int32_t>(j);
    }

    std::int32_t locate_impl(const Model2DIndex& mi, const Point& p) const {
        const double r = p[0];
        if (r < 0.0 || r >= mi.r_max) return kCemetery;
        std::int64_t m = static_cast<std::int64_t>(std::floor(r * mi.l));
        m = std::clamp<std::int64_t>(m, 0, mi.annuli - 1);
        while (m > 0 && r < static_cast<double>(m) / mi.l) --m;
        while (m < mi.annuli - 1 && r >= static_cast<double>(m + 1) / mi.l) ++m;
        const std::int32_t K = mi.sectors[static_cast<std::size_t>(m)];
        const double t = canonical_angle(p[1]);
        std::int64_t j = static_cast<std::int64_t>(std::floor(t * K / kTwoPi));
        j = std::clamp<std::int64_t>(j, 0, K - 1);
        while (j > 0 && t < kTwoPi * static_cast<double>(j) / K) --j;
        while (j < K - 1 && t >= kTwoPi * static_cast<double>(j + 1) / K) ++j;
        return mi.offset[static_cast<std::size_t>(m)] + static_cast<std::int32_t>(j);
    }

    Manifold manifold_;
    std::vector<Cell> cells_;
    Index index_;
    RefPolicy policy_;
    double mesh_ = 0.0;
    std::vector<double> vol_prefix_;
};

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Cubic lattice cells [i1/k,(i1+1)/k) x ... over a window whose faces sit on
/// the 1/k lattice. Mesh equals sqrt(n)/k.
inline Partition grid_partition(const Manifold& m, int k, const AxisBox& window,
                                RefPolicy policy = RefPolicy::Center) {
    if (m.kind() != ManifoldKind::Euclidean)
        throw std::invalid_argument("grid_partition: Euclidean manifolds only");
    if (k < 1) throw std::invalid_argument("grid_partition: k must be >= 1");
    if (window.n != m.dim()) throw std::invalid_argument("grid_partition: window dimension mismatch");

    Partition::GridIndex idx;
    idx.k = k;
    std::int64_t total = 1;
    for (int ax = 0; ax < window.n; ++ax) {
        const auto a = static_cast<std::size_t>(ax);
        const double lo_scaled = window.lo[a] * k;
        const double hi_scaled = window.hi[a] * k;
        const auto lo_i = static_cast<std::int64_t>(std::llround(lo_scaled));
        const auto hi_i = static_cast<std::int64_t>(std::llround(hi_scaled));
        if (std::abs(lo_scaled - static_cast<double>(lo_i)) > 1e-9 ||
            std::abs(hi_scaled - static_cast<double>(hi_i)) > 1e-9)
            throw std::invalid_argument("grid_partition: window faces must sit on the 1/k lattice");
        idx.i0[a] = lo_i;
        idx.dims[a] = static_cast<std::int32_t>(hi_i - lo_i);
        if (idx.dims[a] <= 0) throw std::invalid_argument("grid_partition: empty window axis");
        total *= idx.dims[a];
        if (total > kMaxCells) throw ConfigError("grid_partition: cell count exceeds the 1e7 guard");
    }

    std::vector<Cell> cells;
    cells.reserve(static_cast<std::size_t>(total));
    std::array<std::int32_t, 3> iv{};
    for (std::int64_t id = 0; id < total; ++id) {
        std::int64_t rem = id;
        for (int ax = window.n - 1; ax >= 0; --ax) {
            const auto a = static_cast<std::size_t>(ax);
            iv[a] = static_cast<std::int32_t>(rem % idx.dims[a]);
            rem /= idx.dims[a];
        }
        std::array<double, 3> lo{}, hi{}, ref{};
        for (int ax = 0; ax < window.n; ++ax) {
            const auto a = static_cast<std::size_t>(ax);
            lo[a] = static_cast<double>(idx.i0[a] + iv[a]) / k;
            hi[a] = static_cast<double>(idx.i0[a] + iv[a] + 1) / k;
            ref[a] = lo[a] + detail::axis_fraction(policy, id, ax) * (hi[a] - lo[a]);
        }
        Cell c;
        c.id = static_cast<std::int32_t>(id);
        c.shape = BoxShape{AxisBox::make(std::span<const double>(lo.data(), static_cast<std::size_t>(window.n)),
                                         std::span<const double>(hi.data(), static_cast<std::size_t>(window.n)))};
        c.volume = volume_integral(m, c.shape);
        c.ref_point = Point::euclidean(std::span<const double>(ref.data(), static_cast<std::size_t>(window.n)));
        c.diameter_bound = std::get<BoxShape>(c.shape).box.diagonal();
        cells.push_back(std::move(c));
    }
    return Partition(m, std::move(cells), idx, policy);
}

/// K equal arcs [2*pi*j/K, 2*pi*(j+1)/K); mesh = 2*pi/K.
inline Partition circle_partition(std::int32_t K, RefPolicy policy = RefPolicy::Center,
                                  std::optional<Manifold> manifold = std::nullopt) {
    if (K < 3) throw std::invalid_argument("circle_partition: K must be >= 3");
    if (K > kMaxCells) throw ConfigError("circle_partition: cell count exceeds the 1e7 guard");
    Manifold m = manifold.value_or(Manifold::circle());
    if (m.kind() != ManifoldKind::Circle) throw std::invalid_argument("circle_partition: circle manifold required");
    std::vector<Cell> cells;
    cells.reserve(static_cast<std::size_t>(K));
    for (std::int32_t j = 0; j < K; ++j) {
        Cell c;
        c.id = j;
        const double a = kTwoPi * static_cast<double>(j) / K;
        const double b = kTwoPi * static_cast<double>(j + 1) / K;
        c.shape = ArcShape{a, b};
        c.volume = volume_integral(m, c.shape);
        c.ref_point = Point::circle(a + detail::axis_fraction(policy, j, 0) * (b - a));
        c.diameter_bound = b - a;
        cells.push_back(std::move(c));
    }
    return Partition(m, std::move(cells), Partition::CircleIndex{K}, policy);
}

/// Annulus-times-sector cells on a rotationally symmetric surface: annuli of
/// width 1/l, each cut into ceil(l * max(psi) * n * pi) sectors (n = 2), so
/// every cell has diameter at most 2/l.
inline Partition model2d_partition(const Manifold& m, int l, double r_max,
                                   RefPolicy policy = RefPolicy::Center) {
    if (m.kind() != ManifoldKind::Model2D)
        throw std::invalid_argument("model2d_partition: Model2D manifold required");
    if (l < 1) throw std::invalid_argument("model2d_partition: l must be >= 1");
    if (r_max > m.r0() + 1e-12) throw std::invalid_argument("model2d_partition: r_max exceeds r0");
    const double scaled = r_max * l;
    const auto annuli = static_cast<std::int64_t>(std::llround(scaled));
    if (std::abs(scaled - static_cast<double>(annuli)) > 1e-9 || annuli < 1)
        throw std::invalid_argument("model2d_partition: r_max must be a positive multiple of 1/l");

    const PsiProfile& psi = m.psi();
    Partition::Model2DIndex idx;
    idx.l = l;
    idx.annuli = static_cast<std::int32_t>(annuli);
    idx.r_max = r_max;

    std::vector<Cell> cells;
    std::int64_t id = 0;
    for (std::int64_t mm = 1; mm <= annuli; ++mm) {
        const double r_lo = static_cast<double>(mm - 1) / l;
        const double r_hi = static_cast<double>(mm) / l;
        const double psi_max = psi.max_on(r_lo, r_hi);
        const auto K = static_cast<std::int32_t>(
            std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(l * psi_max * 2.0 * kPi))));
        idx.sectors.push_back(K);
        idx.offset.push_back(static_cast<std::int32_t>(id));
        if (id + K > kMaxCells) throw ConfigError("model2d_partition: cell count exceeds the 1e7 guard");
        const double radial_integral =
            integrate_adaptive(r_lo, r_hi, [&](double r) { return psi.value(r); });
        for (std::int32_t j = 0; j < K; ++j, ++id) {
            const double th_lo = kTwoPi * static_cast<double>(j) / K;
            const double th_hi = kTwoPi * static_cast<double>(j + 1) / K;
            Cell c;
            c.id = static_cast<std::int32_t>(id);
            c.shape = PolarRectShape{r_lo, r_hi, th_lo, th_hi};
            c.volume = (th_hi - th_lo) * radial_integral;
            const double rr = r_lo + detail::axis_fraction(policy, id, 0) * (r_hi - r_lo);
            const double tt = th_lo + detail::axis_fraction(policy, id, 1) * (th_hi - th_lo);
            c.ref_point = Point::polar(rr, tt);
            c.diameter_bound = (r_hi - r_lo) + (th_hi - th_lo) * psi_max;
            cells.push_back(std::move(c));
        }
    }
    return Partition(m, std::move(cells), std::move(idx), policy);
}

/// Free-function alias: X(x), with the cemetery mapped to itself.
inline std::int32_t locate(const Partition& p, const Point& x) { return p.locate(x); }

}  // namespace driftwalk
