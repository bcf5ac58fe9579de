#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "driftwalk/geometry.hpp"

namespace driftwalk {

namespace detail {

inline double poly_eval(std::span<const double> coeffs, double x) {
    double acc = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * x + coeffs[i];
    return acc;
}

inline double poly_deriv(std::span<const double> coeffs, double x) {
    double acc = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 1;) acc = acc * x + static_cast<double>(i) * coeffs[i];
    return acc;
}

// Quintic smoothstep complement: 1 on u<=0, 0 on u>=1, C^2 across the joins.
inline double taper(double u) {
    if (u <= 0.0) return 1.0;
    if (u >= 1.0) return 0.0;
    return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}
inline double taper_d1(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return -30.0 * u * u * (1.0 - u) * (1.0 - u);
}
inline double taper_d2(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return -60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Test functions f (the semigroup acts on their discretizations)
// ---------------------------------------------------------------------------

/// Effective support interval/box hint used to restrict error evaluation and
/// residual checks. `everywhere` means no useful localization (circle, consts).
struct SupportHint {
    bool everywhere = true;
    AxisBox box;  // valid when !everywhere
};

class TestFn {
public:
    struct Constant {
        double c = 1.0;
    };
    /// Finite Fourier sum on the circle: sum a_m cos(m t) + b_m sin(m t),
    /// cos coefficients indexed from m = 0, sin from m = 1.
    struct Fourier {
        std::vector<double> cos_coeffs;
        std::vector<double> sin_coeffs;
    };
    /// exp(-c |x - x0|^2) on Euclidean charts.
    struct Gaussian {
        double c = 1.0;
        std::vector<double> center;
    };
    /// f(y) = y smoothly clipped to zero outside [lo-margin, hi+margin] (1-D).
    struct LinearClipped {
        double lo = -5.0;
        double hi = 5.0;
        double margin = 1.0;
    };
    struct Poly1D {
        std::vector<double> coeffs;
    };
    /// exp(-c (r - rc)^2) cos(m theta) on Model2D charts.
    struct RadialBump {
        double c = 4.0;
        double rc = 1.0;
        int m = 1;
    };

    using Form = std::variant<Constant, Fourier, Gaussian, LinearClipped, Poly1D, RadialBump>;

    explicit TestFn(Form form) : form_(std::move(form)) {}

    static TestFn constant(double c) { return TestFn(Constant{c}); }
    static TestFn cosine() { return TestFn(Fourier{{0.0, 1.0}, {}}); }
    static TestFn fourier(std::vector<double> cs, std::vector<double> ss) {
        return TestFn(Fourier{std::move(cs), std::move(ss)});
    }
    static TestFn gaussian(double c, std::vector<double> center) {
        return TestFn(Gaussian{c, std::move(center)});
    }
    static TestFn linear_clipped(double lo, double hi, double margin = 1.0) {
        return TestFn(LinearClipped{lo, hi, margin});
    }
    static TestFn poly1d(std::vector<double> coeffs) { return TestFn(Poly1D{std::move(coeffs)}); }
    static TestFn radial_bump(double c, double rc, int m) { return TestFn(RadialBump{c, rc, m}); }

    const Form& form() const { return form_; }

    double operator()(const Point& p) const {
        if (p.is_cemetery()) return 0.0;
        return std::visit([&](const auto& f) { return eval(f, p); }, form_);
    }

    /// All built-in forms carry closed-form derivatives.
    bool analytic() const { return true; }

    double d1(const Point& p, int axis) const {
        return std::visit([&](const auto& f) { return deriv1(f, p, axis); }, form_);
    }

    double d2(const Point& p, int i, int j) const {
        return std::visit([&](const auto& f) { return deriv2(f, p, i, j); }, form_);
    }

    /// Abscissae where the closed form changes piece (finite smoothness);
    /// quadratures split their panels here.
    std::vector<double> breakpoints() const {
        if (const auto* lc = std::get_if<LinearClipped>(&form_)) {
            return {-(lc->hi + lc->margin), -lc->hi, lc->hi, lc->hi + lc->margin};
        }
        return {};
    }

    SupportHint support(const Manifold& m) const {
        SupportHint hint;
        if (const auto* g = std::get_if<Gaussian>(&form_)) {
            if (m.kind() == ManifoldKind::Euclidean) {
                const double half = 6.0 / std::sqrt(std::max(g->c, 1e-12));
                std::vector<double> lo(g->center.size()), hi(g->center.size());
                for (std::size_t i = 0; i < g->center.size(); ++i) {
                    lo[i] = g->center[i] - half;
                    hi[i] = g->center[i] + half;
                }
                hint.everywhere = false;
                hint.box = AxisBox::make(lo, hi);
            }
        } else if (const auto* lc = std::get_if<LinearClipped>(&form_)) {
            if (m.kind() == ManifoldKind::Euclidean && m.dim() == 1) {
                const double lo = lc->lo - lc->margin, hi = lc->hi + lc->margin;
                hint.everywhere = false;
                hint.box = AxisBox::make(std::span<const double>(&lo, 1), std::span<const double>(&hi, 1));
            }
        }
        return hint;
    }

private:
    static double eval(const Constant& f, const Point&) { return f.c; }
    static double eval(const Fourier& f, const Point& p) {
        const double t = p[0];
        double acc = 0.0;
        for (std::size_t m = 0; m < f.cos_coeffs.size(); ++m)
            acc += f.cos_coeffs[m] * std::cos(static_cast<double>(m) * t);
        for (std::size_t m = 1; m <= f.sin_coeffs.size(); ++m)
            acc += f.sin_coeffs[m - 1] * std::sin(static_cast<double>(m) * t);
        return acc;
    }
    static double eval(const Gaussian& f, const Point& p) {
        double s = 0;
        for (int i = 0; i < p.dim(); ++i) {
            const double d = p[i] - f.center[static_cast<std::size_t>(i)];
            s += d * d;
        }
        return std::exp(-f.c * s);
    }
    static double eval(const LinearClipped& f, const Point& p) {
        const double y = p[0];
        const double u = (std::abs(y) - f.hi) / f.margin;
        return y * detail::taper(u);
    }
    static double eval(const Poly1D& f, const Point& p) { return detail::poly_eval(f.coeffs, p[0]); }
    static double eval(const RadialBump& f, const Point& p) {
        const double g = std::exp(-f.c * (p[0] - f.rc) * (p[0] - f.rc));
        return g * std::cos(f.m * p[1]);
    }

    static double deriv1(const Constant&, const Point&, int) { return 0.0; }
    static double deriv1(const Fourier& f, const Point& p, int) {
        const double t = p[0];
        double acc = 0.0;
        for (std::size_t m = 1; m < f.cos_coeffs.size(); ++m)
            acc -= f.cos_coeffs[m] * static_cast<double>(m) * std::sin(static_cast<double>(m) * t);
        for (std::size_t m = 1; m <= f.sin_coeffs.size(); ++m)
            acc += f.sin_coeffs[m - 1] * static_cast<double>(m) * std::cos(static_cast<double>(m) * t);
        return acc;
    }
    static double deriv1(const Gaussian& f, const Point& p, int axis) {
        return -2.0 * f.c * (p[axis] - f.center[static_cast<std::size_t>(axis)]) * eval(f, p);
    }
    static double deriv1(const LinearClipped& f, const Point& p, int) {
        const double y = p[0];
        const double u = (std::abs(y) - f.hi) / f.margin;
        const double sgn = y < 0 ? -1.0 : 1.0;
        return detail::taper(u) + y * detail::taper_d1(u) * sgn / f.margin;
    }
    static double deriv1(const Poly1D& f, const Point& p, int) { return detail::poly_deriv(f.coeffs, p[0]); }
    static double deriv1(const RadialBump& f, const Point& p, int axis) {
        const double dr = p[0] - f.rc;
        const double g = std::exp(-f.c * dr * dr);
        if (axis == 0) return -2.0 * f.c * dr * g * std::cos(f.m * p[1]);
        return -g * f.m * std::sin(f.m * p[1]);
    }

    static double deriv2(const Constant&, const Point&, int, int) { return 0.0; }
    static double deriv2(const Fourier& f, const Point& p, int, int) {
        const double t = p[0];
        double acc = 0.0;
        for (std::size_t m = 1; m < f.cos_coeffs.size(); ++m) {
            const double mm = static_cast<double>(m);
            acc -= f.cos_coeffs[m] * mm * mm * std::cos(mm * t);
        }
        for (std::size_t m = 1; m <= f.sin_coeffs.size(); ++m) {
            const double mm = static_cast<double>(m);
            acc -= f.sin_coeffs[m - 1] * mm * mm * std::sin(mm * t);
        }
        return acc;
    }
    static double deriv2(const Gaussian& f, const Point& p, int i, int j) {
        const double di = p[i] - f.center[static_cast<std::size_t>(i)];
        const double dj = p[j] - f.center[static_cast<std::size_t>(j)];
        const double v = eval(f, p);
        const double diag = (i == j) ? -2.0 * f.c : 0.0;
        return (diag + 4.0 * f.c * f.c * di * dj) * v;
    }
    static double deriv2(const LinearClipped& f, const Point& p, int, int) {
        const double y = p[0];
        const double u = (std::abs(y) - f.hi) / f.margin;
        const double sgn = y < 0 ? -1.0 : 1.0;
        return 2.0 * detail::taper_d1(u) * sgn / f.margin +
               y * detail::taper_d2(u) / (f.margin * f.margin);
    }
    static double deriv2(const Poly1D& f, const Point& p, int, int) {
        double acc = 0.0;
        const double x = p[0];
        for (std::size_t i = f.coeffs.size(); i-- > 2;)
            acc = acc * x + static_cast<double>(i) * static_cast<double>(i - 1) * f.coeffs[i];
        return acc;
    }
    static double deriv2(const RadialBump& f, const Point& p, int i, int j) {
        const double dr = p[0] - f.rc;
        const double g = std::exp(-f.c * dr * dr);
        const double gp = -2.0 * f.c * dr * g;
        const double gpp = (-2.0 * f.c + 4.0 * f.c * f.c * dr * dr) * g;
        const double h = std::cos(f.m * p[1]);
        const double hp = -f.m * std::sin(f.m * p[1]);
        const double hpp = -f.m * f.m * h;
        if (i == 0 && j == 0) return gpp * h;
        if (i == 1 && j == 1) return g * hpp;
        return gp * hp;
    }

    Form form_;
};

// ---------------------------------------------------------------------------
// Potentials V (killing rates; nonnegative up to a declared shift)
// ---------------------------------------------------------------------------

class ScalarField {
public:
    struct Zero {};
    struct Constant {
        double c = 0.0;
    };
    struct Poly1D {
        std::vector<double> coeffs;
    };
    /// amp * (1 + cos theta)/2 on the circle; a nonnegative bump peaking at 0.
    struct CosBump {
        double amp = 1.0;
    };
    /// c * r^k with r the Euclidean/Model2D radial coordinate.
    struct RadialPower {
        double c = 1.0;
        int k = 2;
    };

    using Form = std::variant<Zero, Constant, Poly1D, CosBump, RadialPower>;

    ScalarField() : form_(Zero{}) {}
    explicit ScalarField(Form form, double offset = 0.0) : form_(std::move(form)), offset_(offset) {}

    static ScalarField zero() { return ScalarField(); }
    static ScalarField constant(double c) { return ScalarField(Constant{c}); }
    static ScalarField poly1d(std::vector<double> coeffs) { return ScalarField(Poly1D{std::move(coeffs)}); }
    static ScalarField cos_bump(double amp) { return ScalarField(CosBump{amp}); }
    static ScalarField radial_power(double c, int k) { return ScalarField(RadialPower{c, k}); }

    /// Same field plus a constant; used for the shifted-killing variant.
    ScalarField shifted(double dv) const {
        ScalarField out = *this;
        out.offset_ += dv;
        return out;
    }

    double offset() const { return offset_; }

    bool is_zero() const { return std::holds_alternative<Zero>(form_) && offset_ == 0.0; }

    double operator()(const Point& p) const {
        if (p.is_cemetery()) return 0.0;
        return offset_ + std::visit([&](const auto& f) { return eval(f, p); }, form_);
    }

private:
    static double eval(const Zero&, const Point&) { return 0.0; }
    static double eval(const Constant& f, const Point&) { return f.c; }
    static double eval(const Poly1D& f, const Point& p) { return detail::poly_eval(f.coeffs, p[0]); }
    static double eval(const CosBump& f, const Point& p) { return 0.5 * f.amp * (1.0 + std::cos(p[0])); }
    static double eval(const RadialPower& f, const Point& p) {
        return f.c * std::pow(p.radial(), f.k);
    }

    Form form_;
    double offset_ = 0.0;
};

// ---------------------------------------------------------------------------
// Drift vector fields b
// ---------------------------------------------------------------------------

class VectorField {
public:
    struct Zero {};
    /// Constant components in the Euclidean chart.
    struct ConstantE {
        std::vector<double> values;
    };
    /// b^i(x) = poly_i(x_i): each component a polynomial in its own coordinate.
    struct CoordPoly {
        std::vector<std::vector<double>> polys;
    };
    /// Angular speed on the circle: c0 + a1 cos t + b1 sin t.
    struct Rotation {
        double c0 = 1.0;
        double a1 = 0.0;
        double b1 = 0.0;
    };
    /// Model2D polar components: b^r = poly(r), b^theta = constant.
    struct Polar {
        std::vector<double> br_coeffs;
        double btheta = 0.0;
    };

    using Form = std::variant<Zero, ConstantE, CoordPoly, Rotation, Polar>;

    VectorField() : form_(Zero{}) {}
    explicit VectorField(Form form) : form_(std::move(form)) {}

    static VectorField zero() { return VectorField(); }
    static VectorField constant(std::vector<double> values) {
        return VectorField(ConstantE{std::move(values)});
    }
    static VectorField poly1d(std::vector<double> coeffs) {
        return VectorField(CoordPoly{{std::move(coeffs)}});
    }
    static VectorField coord_poly(std::vector<std::vector<double>> polys) {
        return VectorField(CoordPoly{std::move(polys)});
    }
    static VectorField rotation(double c0, double a1 = 0.0, double b1 = 0.0) {
        return VectorField(Rotation{c0, a1, b1});
    }
    static VectorField polar(std::vector<double> br_coeffs, double btheta) {
        return VectorField(Polar{std::move(br_coeffs), btheta});
    }

    bool is_zero() const { return std::holds_alternative<Zero>(form_); }

    /// Components in the chart coordinate basis.
    void eval(const Manifold& m, const Point& p, std::span<double> out) const {
        for (int i = 0; i < m.dim(); ++i) out[static_cast<std::size_t>(i)] = 0.0;
        if (p.is_cemetery()) return;
        if (const auto* c = std::get_if<ConstantE>(&form_)) {
            for (int i = 0; i < m.dim(); ++i) out[static_cast<std::size_t>(i)] = c->values[static_cast<std::size_t>(i)];
        } else if (const auto* cp = std::get_if<CoordPoly>(&form_)) {
            for (int i = 0; i < m.dim(); ++i)
                out[static_cast<std::size_t>(i)] = detail::poly_eval(cp->polys[static_cast<std::size_t>(i)], p[i]);
        } else if (const auto* rot = std::get_if<Rotation>(&form_)) {
            out[0] = rot->c0 + rot->a1 * std::cos(p[0]) + rot->b1 * std::sin(p[0]);
        } else if (const auto* pol = std::get_if<Polar>(&form_)) {
            out[0] = detail::poly_eval(pol->br_coeffs, p[0]);
            out[1] = pol->btheta;
        }
    }

    double component(const Manifold& m, const Point& p, int axis) const {
        std::array<double, Point::kMaxDim> buf{};
        eval(m, p, std::span<double>(buf.data(), static_cast<std::size_t>(m.dim())));
        return buf[static_cast<std::size_t>(axis)];
    }

    /// Riemannian divergence in the chart:
    ///   Euclidean: sum d b^i / d x_i
    ///   Circle:    d b / d theta
    ///   Model2D:   (psi'/psi) b^r + d b^r/dr + d b^theta/d theta
    double divergence(const Manifold& m, const Point& p) const {
        if (p.is_cemetery()) return 0.0;
        switch (m.kind()) {
            case ManifoldKind::Euclidean: {
                if (const auto* cp = std::get_if<CoordPoly>(&form_)) {
                    double s = 0;
                    for (int i = 0; i < m.dim(); ++i)
                        s += detail::poly_deriv(cp->polys[static_cast<std::size_t>(i)], p[i]);
                    return s;
                }
                return 0.0;  // zero and constant fields
            }
            case ManifoldKind::Circle: {
                if (const auto* rot = std::get_if<Rotation>(&form_))
                    return -rot->a1 * std::sin(p[0]) + rot->b1 * std::cos(p[0]);
                return 0.0;
            }
            case ManifoldKind::Model2D: {
                if (const auto* pol = std::get_if<Polar>(&form_)) {
                    const double br = detail::poly_eval(pol->br_coeffs, p[0]);
                    const double dbr = detail::poly_deriv(pol->br_coeffs, p[0]);
                    const PsiProfile& psi = m.psi();
                    return psi.deriv(p[0]) / psi.value(p[0]) * br + dbr;
                }
                return 0.0;
            }
        }
        return 0.0;
    }

    /// b applied to the radial function r(x) = d(o, x): the radial component.
    double radial_component(const Manifold& m, const Point& p) const {
        switch (m.kind()) {
            case ManifoldKind::Euclidean: {
                double r = 0;
                for (int i = 0; i < m.dim(); ++i) r += p[i] * p[i];
                r = std::sqrt(r);
                if (r == 0.0) return 0.0;
                double s = 0;
                for (int i = 0; i < m.dim(); ++i) s += component(m, p, i) * p[i];
                return s / r;
            }
            case ManifoldKind::Model2D: return component(m, p, 0);
            case ManifoldKind::Circle:
                throw std::invalid_argument("radial_component: no radial function on the circle");
        }
        return 0.0;
    }

private:
    Form form_;
};

// ---------------------------------------------------------------------------
// The drifted Schrodinger operator A f = -Lap f - b f + V f
// ---------------------------------------------------------------------------

namespace detail {

struct Derivs {
    std::array<double, Point::kMaxDim> d1{};
    std::array<double, Point::kMaxDim> d2{};  // pure second derivatives only
};

template <typename F>
Derivs finite_differences(const F& f, const Point& x) {
    Derivs d;
    for (int i = 0; i < x.dim(); ++i) {
        const double h = 1e-4 * std::max(1.0, std::abs(x[i]));
        auto shift = [&](double dx) {
            Point p = x;
            p[i] = x[i] + dx;
            return f(p);
        };
        const double fm2 = shift(-2 * h), fm1 = shift(-h), f0 = f(x), fp1 = shift(h), fp2 = shift(2 * h);
        d.d1[static_cast<std::size_t>(i)] = (-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h);
        d.d2[static_cast<std::size_t>(i)] = (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h * h);
    }
    return d;
}

inline Derivs test_fn_derivs(const TestFn& f, const Point& x, bool use_analytic) {
    if (use_analytic && f.analytic()) {
        Derivs d;
        for (int i = 0; i < x.dim(); ++i) {
            d.d1[static_cast<std::size_t>(i)] = f.d1(x, i);
            d.d2[static_cast<std::size_t>(i)] = f.d2(x, i, i);
        }
        return d;
    }
    return finite_differences([&](const Point& p) { return f(p); }, x);
}

}  // namespace detail

/// A f(x) = -Lap f(x) - (b f)(x) + V(x) f(x) with the chart Laplacian; a
/// configured weight U swaps in the weighted Laplacian Lap f - <grad U, grad f>.
inline double apply_A(const Manifold& m, const VectorField& b, const ScalarField& V, const TestFn& f,
                      const Point& x, bool use_analytic = true) {
    if (x.is_cemetery()) throw std::invalid_argument("apply_A: cemetery input");
    const detail::Derivs d = detail::test_fn_derivs(f, x, use_analytic);

    double lap = 0.0;
    switch (m.kind()) {
        case ManifoldKind::Euclidean:
            for (int i = 0; i < m.dim(); ++i) lap += d.d2[static_cast<std::size_t>(i)];
            break;
        case ManifoldKind::Circle: lap = d.d2[0]; break;
        case ManifoldKind::Model2D: {
            const PsiProfile& psi = m.psi();
            const double pv = psi.value(x[0]);
            lap = d.d2[0] + psi.deriv(x[0]) / pv * d.d1[0] + d.d2[1] / (pv * pv);
            break;
        }
    }
    if (m.weighted()) {
        for (int i = 0; i < m.dim(); ++i)
            lap -= m.weight()->grad(x, i) * d.d1[static_cast<std::size_t>(i)];
    }

    double bf = 0.0;
    if (!b.is_zero()) {
        std::array<double, Point::kMaxDim> bv{};
        b.eval(m, x, std::span<double>(bv.data(), static_cast<std::size_t>(m.dim())));
        for (int i = 0; i < m.dim(); ++i) bf += bv[static_cast<std::size_t>(i)] * d.d1[static_cast<std::size_t>(i)];
    }

    return -lap - bf + V(x) * f(x);
}

}  // namespace driftwalk
