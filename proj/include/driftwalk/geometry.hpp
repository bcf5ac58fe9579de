#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "driftwalk/common.hpp"
#include "driftwalk/quadrature.hpp"

namespace driftwalk {

inline double canonical_angle(double theta) {
    double t = std::fmod(theta, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    if (t >= kTwoPi) t = 0.0;
    return t;
}

/// Arc distance on the circle of circumference 2*pi.
inline double circle_distance(double a, double b) {
    const double d = std::abs(canonical_angle(a) - canonical_angle(b));
    return std::min(d, kTwoPi - d);
}

// ---------------------------------------------------------------------------
// Points
// ---------------------------------------------------------------------------

/// Chart coordinates of a point, or the absorbing cemetery state.
/// Euclidean: (x1..xn); Circle: angle in [0,2pi); Model2D: (r, theta).
class Point {
public:
    static constexpr int kMaxDim = 3;

    /// Which chart the coordinates live in; radial quantities depend on it.
    enum class Chart : std::uint8_t { Euclidean, Circle, Polar };

    static Point cemetery() {
        Point p;
        p.cemetery_ = true;
        return p;
    }
    static Point euclidean(std::span<const double> xs) {
        if (xs.empty() || xs.size() > kMaxDim)
            throw std::invalid_argument("Point: dimension must be 1..3");
        Point p;
        p.dim_ = static_cast<int>(xs.size());
        for (int i = 0; i < p.dim_; ++i) p.c_[static_cast<std::size_t>(i)] = xs[static_cast<std::size_t>(i)];
        return p;
    }
    static Point line(double x) { return euclidean(std::span<const double>(&x, 1)); }
    static Point plane(double x, double y) {
        const std::array<double, 2> xs{x, y};
        return euclidean(xs);
    }
    static Point space(double x, double y, double z) {
        const std::array<double, 3> xs{x, y, z};
        return euclidean(xs);
    }
    static Point circle(double theta) {
        Point p;
        p.dim_ = 1;
        p.chart_ = Chart::Circle;
        p.c_[0] = canonical_angle(theta);
        return p;
    }
    static Point polar(double r, double theta) {
        Point p;
        p.dim_ = 2;
        p.chart_ = Chart::Polar;
        p.c_[0] = r;
        p.c_[1] = canonical_angle(theta);
        return p;
    }

    bool is_cemetery() const { return cemetery_; }
    int dim() const { return dim_; }
    Chart chart() const { return chart_; }

    /// Distance to the chart base point: |x| (Euclidean), arc distance to
    /// angle 0 (Circle), the radial coordinate (Polar).
    double radial() const {
        switch (chart_) {
            case Chart::Euclidean: return norm();
            case Chart::Circle: return std::min(c_[0], kTwoPi - c_[0]);
            case Chart::Polar: return c_[0];
        }
        return 0.0;
    }
    double operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }
    double& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }

    double norm() const {
        double s = 0;
        for (int i = 0; i < dim_; ++i) s += c_[static_cast<std::size_t>(i)] * c_[static_cast<std::size_t>(i)];
        return std::sqrt(s);
    }

private:
    std::array<double, kMaxDim> c_{};
    int dim_ = 0;
    Chart chart_ = Chart::Euclidean;
    bool cemetery_ = false;
};

// ---------------------------------------------------------------------------
// Radial metric profile psi for rotationally symmetric 2-D manifolds
// ---------------------------------------------------------------------------

/// psi(r) in the metric dr^2 + psi(r)^2 dtheta^2. All forms satisfy
/// psi(0+) = 0 and psi'(0+) = 1 so the pole is regular:
///   identity     psi = r                      (flat plane)
///   sin          psi = sin r  on (0, pi)      (unit sphere)
///   sinh         psi = sinh r                 (hyperbolic plane)
///   poly_growth  psi = r (1+r^2)^((a-1)/2)    (~ r^a at infinity)
///   exp_growth   psi = r exp(a r^b), b >= 2   (~ exp tail)
class PsiProfile {
public:
    enum class Form { Identity, Sin, Sinh, PolyGrowth, ExpGrowth };

    static PsiProfile identity() { return PsiProfile(Form::Identity, 0, 0); }
    static PsiProfile sin_profile() { return PsiProfile(Form::Sin, 0, 0); }
    static PsiProfile sinh_profile() { return PsiProfile(Form::Sinh, 0, 0); }
    static PsiProfile poly_growth(double alpha) { return PsiProfile(Form::PolyGrowth, alpha, 0); }
    static PsiProfile exp_growth(double alpha, double beta) {
        if (beta < 2.0) throw std::invalid_argument("exp_growth: beta must be >= 2 for a regular pole");
        return PsiProfile(Form::ExpGrowth, alpha, beta);
    }

    Form form() const { return form_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }

    double value(double r) const {
        switch (form_) {
            case Form::Identity: return r;
            case Form::Sin: return std::sin(r);
            case Form::Sinh: return std::sinh(r);
            case Form::PolyGrowth: return r * std::pow(1.0 + r * r, 0.5 * (alpha_ - 1.0));
            case Form::ExpGrowth: return r * std::exp(alpha_ * std::pow(r, beta_));
        }
        return r;
    }

    double deriv(double r) const {
        switch (form_) {
            case Form::Identity: return 1.0;
            case Form::Sin: return std::cos(r);
            case Form::Sinh: return std::cosh(r);
            case Form::PolyGrowth: {
                const double g = 1.0 + r * r;
                return std::pow(g, 0.5 * (alpha_ - 3.0)) * (1.0 + alpha_ * r * r);
            }
            case Form::ExpGrowth: {
                const double rb = std::pow(r, beta_);
                return std::exp(alpha_ * rb) * (1.0 + alpha_ * beta_ * rb);
            }
        }
        return 1.0;
    }

    double deriv2(double r) const {
        switch (form_) {
            case Form::Identity: return 0.0;
            case Form::Sin: return -std::sin(r);
            case Form::Sinh: return std::sinh(r);
            case Form::PolyGrowth: {
                const double g = 1.0 + r * r;
                return r * (alpha_ - 1.0) * std::pow(g, 0.5 * (alpha_ - 5.0)) * (3.0 + alpha_ * r * r);
            }
            case Form::ExpGrowth: {
                const double rb = std::pow(r, beta_);
                const double e = std::exp(alpha_ * rb);
                return alpha_ * beta_ * std::pow(r, beta_ - 1.0) * e * (1.0 + beta_ + alpha_ * beta_ * rb);
            }
        }
        return 0.0;
    }

    /// Exact max over [a,b]: endpoints plus interior critical points.
    double max_on(double a, double b) const {
        double m = std::max(value(a), value(b));
        for (double c : critical_points(a, b)) m = std::max(m, value(c));
        return m;
    }

    double min_on(double a, double b) const {
        double m = std::min(value(a), value(b));
        for (double c : critical_points(a, b)) m = std::min(m, value(c));
        return m;
    }

private:
    PsiProfile(Form f, double a, double b) : form_(f), alpha_(a), beta_(b) {}

    std::vector<double> critical_points(double a, double b) const {
        std::vector<double> cs;
        auto push = [&](double c) {
            if (c > a && c < b) cs.push_back(c);
        };
        switch (form_) {
            case Form::Sin:
                for (double c = kPi / 2.0; c < b; c += kPi) push(c);
                break;
            case Form::PolyGrowth:
                if (alpha_ < 0.0) push(1.0 / std::sqrt(-alpha_));
                break;
            case Form::ExpGrowth:
                if (alpha_ < 0.0) push(std::pow(-1.0 / (alpha_ * beta_), 1.0 / beta_));
                break;
            default: break;
        }
        return cs;
    }

    Form form_;
    double alpha_;
    double beta_;
};

// ---------------------------------------------------------------------------
// Axis-aligned boxes and cell shapes
// ---------------------------------------------------------------------------

struct AxisBox {
    int n = 0;
    std::array<double, Point::kMaxDim> lo{};
    std::array<double, Point::kMaxDim> hi{};

    static AxisBox make(std::span<const double> los, std::span<const double> his) {
        if (los.size() != his.size() || los.empty() || los.size() > Point::kMaxDim)
            throw std::invalid_argument("AxisBox: dimension must be 1..3");
        AxisBox b;
        b.n = static_cast<int>(los.size());
        for (int i = 0; i < b.n; ++i) {
            b.lo[static_cast<std::size_t>(i)] = los[static_cast<std::size_t>(i)];
            b.hi[static_cast<std::size_t>(i)] = his[static_cast<std::size_t>(i)];
            if (!(los[static_cast<std::size_t>(i)] < his[static_cast<std::size_t>(i)]))
                throw std::invalid_argument("AxisBox: empty extent");
        }
        return b;
    }

    /// Half-open containment: lo <= x < hi in every axis.
    bool contains(const Point& p) const {
        if (p.is_cemetery() || p.dim() != n) return false;
        for (int i = 0; i < n; ++i)
            if (!(p[i] >= lo[static_cast<std::size_t>(i)] && p[i] < hi[static_cast<std::size_t>(i)])) return false;
        return true;
    }

    double width(int i) const { return hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)]; }

    double volume() const {
        double v = 1.0;
        for (int i = 0; i < n; ++i) v *= width(i);
        return v;
    }

    double diagonal() const {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += width(i) * width(i);
        return std::sqrt(s);
    }
};

struct BoxShape {
    AxisBox box;
};

/// Arc [a, b) with 0 <= a < b <= 2*pi (cells never wrap; the partition handles
/// the seam by construction).
struct ArcShape {
    double a = 0.0;
    double b = 0.0;
    double length() const { return b - a; }
};

struct PolarRectShape {
    double r_lo = 0.0, r_hi = 0.0;
    double th_lo = 0.0, th_hi = 0.0;
};

using CellShape = std::variant<BoxShape, ArcShape, PolarRectShape>;

// ---------------------------------------------------------------------------
// Optional measure weight U (measure e^{-U} dm); Euclidean and Circle only
// ---------------------------------------------------------------------------

struct WeightU {
    enum class Form { Quadratic, CosAngle };
    Form form = Form::Quadratic;
    double a = 0.0;

    static WeightU quadratic(double a) { return WeightU{Form::Quadratic, a}; }
    static WeightU cos_angle(double a) { return WeightU{Form::CosAngle, a}; }

    double value(const Point& p) const {
        switch (form) {
            case Form::Quadratic: {
                double s = 0;
                for (int i = 0; i < p.dim(); ++i) s += p[i] * p[i];
                return a * s;
            }
            case Form::CosAngle: return a * std::cos(p[0]);
        }
        return 0.0;
    }

    double grad(const Point& p, int axis) const {
        switch (form) {
            case Form::Quadratic: return 2.0 * a * p[axis];
            case Form::CosAngle: return axis == 0 ? -a * std::sin(p[0]) : 0.0;
        }
        return 0.0;
    }
};

// ---------------------------------------------------------------------------
// Manifold
// ---------------------------------------------------------------------------

enum class ManifoldKind { Euclidean, Circle, Model2D };

class Manifold {
public:
    static Manifold euclidean(int n, std::optional<AxisBox> domain = std::nullopt) {
        if (n < 1 || n > Point::kMaxDim) throw std::invalid_argument("euclidean: n must be 1..3");
        Manifold m;
        m.kind_ = ManifoldKind::Euclidean;
        m.n_ = n;
        m.domain_ = domain;
        return m;
    }

    static Manifold circle() {
        Manifold m;
        m.kind_ = ManifoldKind::Circle;
        m.n_ = 1;
        return m;
    }

    static Manifold model2d(PsiProfile psi, double r0) {
        if (!(r0 > 0.0)) throw std::invalid_argument("model2d: r0 must be positive");
        // Regular pole: psi -> 0 and psi' -> 1 at r -> 0.
        const double r_probe = 1e-6;
        if (std::abs(psi.value(r_probe)) > 1e-3 || std::abs(psi.deriv(r_probe) - 1.0) > 1e-3)
            throw std::invalid_argument("model2d: psi violates the pole conditions psi(0+)=0, psi'(0+)=1");
        const double r_mid = std::min(1.0, 0.5 * r0);
        if (!(psi.value(r_mid) > 0.0)) throw std::invalid_argument("model2d: psi must be positive on (0,r0)");
        Manifold m;
        m.kind_ = ManifoldKind::Model2D;
        m.n_ = 2;
        m.psi_ = psi;
        m.r0_ = r0;
        return m;
    }

    ManifoldKind kind() const { return kind_; }
    int dim() const { return n_; }
    double r0() const { return r0_; }
    const PsiProfile& psi() const { return psi_; }
    const std::optional<AxisBox>& domain() const { return domain_; }

    bool weighted() const { return weight_.has_value(); }
    const std::optional<WeightU>& weight() const { return weight_; }
    void set_weight(WeightU u) {
        if (kind_ == ManifoldKind::Model2D)
            throw std::invalid_argument("measure weights are supported on Euclidean and Circle geometries only");
        weight_ = u;
    }

    /// e^{-U(p)}, or 1 when unweighted.
    double measure_density(const Point& p) const {
        return weight_ ? std::exp(-weight_->value(p)) : 1.0;
    }

    bool in_chart(const Point& p) const {
        if (p.is_cemetery()) return false;
        switch (kind_) {
            case ManifoldKind::Euclidean:
                if (p.dim() != n_) return false;
                return !domain_ || domain_->contains(p);
            case ManifoldKind::Circle: return p.dim() == 1;
            case ManifoldKind::Model2D: return p.dim() == 2 && p[0] > 0.0 && p[0] < r0_;
        }
        return false;
    }

private:
    ManifoldKind kind_ = ManifoldKind::Euclidean;
    int n_ = 1;
    PsiProfile psi_ = PsiProfile::identity();
    double r0_ = kInf;
    std::optional<AxisBox> domain_;
    std::optional<WeightU> weight_;
};

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

/// Chart surrogate distance on Model2D: |dr| plus the wrapped angle gap scaled
/// by the largest psi between the two radii. Dominates the cell diameter
/// bound; cheap; not a metric (the dip path below is shorter through small
/// psi regions).
inline double model2d_surrogate_distance(const PsiProfile& psi, double r1, double t1, double r2,
                                         double t2) {
    const double lo = std::min(r1, r2);
    const double hi = std::max(r1, r2);
    return (hi - lo) + circle_distance(t1, t2) * psi.max_on(lo, hi);
}

namespace detail {

/// Cost of the radial-dip path: descend to r*, rotate there, climb back.
inline double dip_cost(const PsiProfile& psi, double r1, double r2, double dth, double rstar) {
    return std::abs(r1 - rstar) + std::abs(r2 - rstar) + dth * psi.value(rstar);
}

}  // namespace detail

/// Numeric geodesic upper bound on Model2D: minimum over single-dip paths
/// (move radially to r*, rotate at r*, move radially to the target). The
/// continuous minimum over r* is a metric; a coarse scan plus golden-section
/// refinement approximates it well below the test tolerances.
inline double model2d_dip_distance(const PsiProfile& psi, double r0, double r1, double t1,
                                   double r2, double t2) {
    const double dth = circle_distance(t1, t2);
    if (dth == 0.0) return std::abs(r1 - r2);
    const double r_hi = std::max(r1, r2);
    // A dip beyond r_hi can save at most dth * psi(r_hi) of rotation cost
    // while paying 2(r* - r_hi) radially, which bounds the useful range.
    const double r_cap = std::min(r0, r_hi + 0.5 * dth * psi.max_on(0.0, r_hi) + 1e-12);
    const int kScan = 256;
    double best = kInf;
    double best_r = 0.0;
    for (int i = 0; i <= kScan; ++i) {
        const double r = r_cap * static_cast<double>(i) / kScan;
        const double c = detail::dip_cost(psi, r1, r2, dth, r);
        if (c < best) {
            best = c;
            best_r = r;
        }
    }
    // Golden-section refinement in the bracket around the best scan point.
    const double h = r_cap / kScan;
    double a = std::max(0.0, best_r - h);
    double b = std::min(r_cap, best_r + h);
    const double gr = 0.6180339887498949;
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = detail::dip_cost(psi, r1, r2, dth, x1);
    double f2 = detail::dip_cost(psi, r1, r2, dth, x2);
    for (int it = 0; it < 60; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = detail::dip_cost(psi, r1, r2, dth, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = detail::dip_cost(psi, r1, r2, dth, x2);
        }
    }
    return std::min(best, std::min(f1, f2));
}

/// Geodesic-type distance; +infinity if either point is the cemetery.
inline double distance(const Manifold& m, const Point& x, const Point& y) {
    if (x.is_cemetery() || y.is_cemetery()) return kInf;
    switch (m.kind()) {
        case ManifoldKind::Euclidean: {
            double s = 0;
            for (int i = 0; i < m.dim(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
            return std::sqrt(s);
        }
        case ManifoldKind::Circle: return circle_distance(x[0], y[0]);
        case ManifoldKind::Model2D:
            return model2d_dip_distance(m.psi(), m.r0(), x[0], x[1], y[0], y[1]);
    }
    return kInf;
}

/// Distance used by the proximity machinery: exact for Euclidean and Circle,
/// the chart surrogate for Model2D.
inline double surrogate_distance(const Manifold& m, const Point& x, const Point& y) {
    if (x.is_cemetery() || y.is_cemetery()) return kInf;
    if (m.kind() == ManifoldKind::Model2D)
        return model2d_surrogate_distance(m.psi(), x[0], x[1], y[0], y[1]);
    return distance(m, x, y);
}

// ---------------------------------------------------------------------------
// Volume integrals
// ---------------------------------------------------------------------------

namespace detail {

inline double weighted_box_volume(const Manifold& m, const AxisBox& box) {
    if (!m.weighted()) return box.volume();
    // Tensor Gauss-Legendre over the box with the e^{-U} density.
    const int n = box.n;
    auto density = [&](const Point& p) { return m.measure_density(p); };
    if (n == 1) {
        return integrate_adaptive(box.lo[0], box.hi[0],
                                  [&](double x) { return density(Point::line(x)); });
    }
    if (n == 2) {
        return integrate_adaptive(box.lo[0], box.hi[0], [&](double x) {
            return integrate_adaptive(box.lo[1], box.hi[1],
                                      [&](double y) { return density(Point::plane(x, y)); });
        });
    }
    return integrate_adaptive(box.lo[0], box.hi[0], [&](double x) {
        return integrate_adaptive(box.lo[1], box.hi[1], [&](double y) {
            return integrate_adaptive(box.lo[2], box.hi[2],
                                      [&](double z) { return density(Point::space(x, y, z)); });
        });
    });
}

}  // namespace detail

/// Measure of a cell shape: Lebesgue volume (Euclidean), arc length (Circle),
/// or the polar integral of psi(r) dr dtheta (Model2D, n = 2). A configured
/// weight U replaces dm by e^{-U} dm.
inline double volume_integral(const Manifold& m, const CellShape& shape) {
    switch (m.kind()) {
        case ManifoldKind::Euclidean: {
            const auto* bs = std::get_if<BoxShape>(&shape);
            if (!bs || bs->box.n != m.dim())
                throw std::invalid_argument("volume_integral: expected a box of matching dimension");
            if (m.domain()) {
                for (int i = 0; i < bs->box.n; ++i) {
                    if (bs->box.lo[static_cast<std::size_t>(i)] < m.domain()->lo[static_cast<std::size_t>(i)] - 1e-12 ||
                        bs->box.hi[static_cast<std::size_t>(i)] > m.domain()->hi[static_cast<std::size_t>(i)] + 1e-12)
                        throw std::invalid_argument("volume_integral: box outside the manifold domain");
                }
            }
            return detail::weighted_box_volume(m, bs->box);
        }
        case ManifoldKind::Circle: {
            const auto* arc = std::get_if<ArcShape>(&shape);
            if (!arc) throw std::invalid_argument("volume_integral: expected an arc");
            if (arc->a < 0.0 || arc->b > kTwoPi + 1e-12 || !(arc->a < arc->b))
                throw std::invalid_argument("volume_integral: arc outside [0,2pi)");
            if (!m.weighted()) return arc->length();
            return integrate_adaptive(arc->a, arc->b,
                                      [&](double th) { return m.measure_density(Point::circle(th)); });
        }
        case ManifoldKind::Model2D: {
            const auto* pr = std::get_if<PolarRectShape>(&shape);
            if (!pr) throw std::invalid_argument("volume_integral: expected a polar rectangle");
            if (pr->r_lo < 0.0 || pr->r_hi > m.r0() + 1e-12 || !(pr->r_lo < pr->r_hi))
                throw std::invalid_argument("volume_integral: polar rectangle outside the chart");
            const double dth = pr->th_hi - pr->th_lo;
            const PsiProfile& psi = m.psi();
            return dth * integrate_adaptive(pr->r_lo, pr->r_hi, [&](double r) { return psi.value(r); });
        }
    }
    throw std::logic_error("volume_integral: unknown manifold kind");
}

// ---------------------------------------------------------------------------
// Point-to-shape distances (closed shapes; surrogate metric on Model2D)
// ---------------------------------------------------------------------------

namespace detail {

inline double interval_gap(double x, double lo, double hi) {
    if (x < lo) return lo - x;
    if (x > hi) return x - hi;
    return 0.0;
}

/// Arc-distance from angle t to the closed angular interval [a,b].
inline double angular_gap(double t, double a, double b) {
    const double tt = canonical_angle(t);
    if (tt >= a && tt <= b) return 0.0;
    return std::min(circle_distance(tt, a), circle_distance(tt, b));
}

}  // namespace detail

inline double point_shape_distance(const Manifold& m, const Point& p, const CellShape& shape) {
    if (p.is_cemetery()) return kInf;
    switch (m.kind()) {
        case ManifoldKind::Euclidean: {
            const auto& box = std::get<BoxShape>(shape).box;
            double s = 0;
            for (int i = 0; i < box.n; ++i) {
                const double g = detail::interval_gap(p[i], box.lo[static_cast<std::size_t>(i)],
                                                      box.hi[static_cast<std::size_t>(i)]);
                s += g * g;
            }
            return std::sqrt(s);
        }
        case ManifoldKind::Circle: {
            const auto& arc = std::get<ArcShape>(shape);
            return detail::angular_gap(p[0], arc.a, arc.b);
        }
        case ManifoldKind::Model2D: {
            const auto& pr = std::get<PolarRectShape>(shape);
            const double rq = std::clamp(p[0], pr.r_lo, pr.r_hi);
            const double rgap = std::abs(p[0] - rq);
            const double tgap = detail::angular_gap(p[1], pr.th_lo, pr.th_hi);
            const double lo = std::min(p[0], rq);
            const double hi = std::max(p[0], rq);
            return rgap + tgap * m.psi().max_on(lo, hi);
        }
    }
    return kInf;
}

inline bool shape_contains(const Manifold& m, const CellShape& shape, const Point& p) {
    if (p.is_cemetery()) return false;
    switch (m.kind()) {
        case ManifoldKind::Euclidean: return std::get<BoxShape>(shape).box.contains(p);
        case ManifoldKind::Circle: {
            const auto& arc = std::get<ArcShape>(shape);
            const double t = canonical_angle(p[0]);
            return t >= arc.a && t < arc.b;
        }
        case ManifoldKind::Model2D: {
            const auto& pr = std::get<PolarRectShape>(shape);
            const double t = canonical_angle(p[1]);
            return p[0] >= pr.r_lo && p[0] < pr.r_hi && t >= pr.th_lo && t < pr.th_hi;
        }
    }
    return false;
}

}  // namespace driftwalk
