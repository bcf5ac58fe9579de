#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "driftwalk/fields.hpp"
#include "driftwalk/quadrature.hpp"

namespace driftwalk {

struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
};

namespace detail {

/// Integral of exp(-z^2) g(z) over the real line via 200-node Gauss-Legendre
/// on [-9,9] (the tail mass beyond 9 is ~5e-36), cross-checked against the
/// 400-node rule. Panels split at the supplied breakpoints so piecewise
/// test functions keep spectral convergence.
template <typename G>
double gauss_weighted_integral(G&& g, const std::vector<double>& breaks = {}) {
    std::vector<double> edges{-9.0};
    for (double b : breaks)
        if (b > -9.0 && b < 9.0) edges.push_back(b);
    edges.push_back(9.0);
    std::sort(edges.begin(), edges.end());
    auto eval = [&](int nodes) {
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < edges.size(); ++i)
            acc += integrate_gl(edges[i], edges[i + 1], nodes,
                                [&](double z) { return std::exp(-z * z) * g(z); });
        return acc;
    };
    const double coarse = eval(200);
    const double fine = eval(400);
    if (std::abs(fine - coarse) > 1e-8 * std::max(1.0, std::abs(fine)))
        throw std::runtime_error("reference quadrature did not converge");
    return fine;
}

inline const double kInvSqrtPi = 1.0 / std::sqrt(kPi);

}  // namespace detail

/// Closed-form and Monte Carlo evaluations of e^{-tA} f, independent of the
/// graph scheme; these are the trusted comparison targets.
class ReferenceSolution {
public:
    enum class Kind { FourierCircle, GaussianLine, OuLine, FeynmanKacMc };

    /// u_t = u_xx + c u_x - v u on the circle for finite Fourier data:
    /// each mode decays by e^{-(m^2+v)t} and translates by ct.
    static ReferenceSolution fourier_circle(const TestFn& f, double c, double v, double t) {
        const auto* four = std::get_if<TestFn::Fourier>(&f.form());
        std::vector<double> cos_coeffs, sin_coeffs;
        if (four) {
            cos_coeffs = four->cos_coeffs;
            sin_coeffs = four->sin_coeffs;
        } else if (const auto* cf = std::get_if<TestFn::Constant>(&f.form())) {
            cos_coeffs = {cf->c};
        } else {
            throw std::invalid_argument("fourier_circle: f must be a finite Fourier sum");
        }
        ReferenceSolution r(Kind::FourierCircle);
        r.cos_coeffs_ = std::move(cos_coeffs);
        r.sin_coeffs_ = std::move(sin_coeffs);
        r.drift_ = c;
        r.potential_ = v;
        r.t_ = t;
        return r;
    }

    /// Heat kernel convolution on the line with constant drift and killing:
    /// e^{-vt} (4 pi t)^{-1/2} integral of exp(-(x+ct-y)^2/4t) f(y) dy.
    static ReferenceSolution gaussian_line(TestFn f, double c, double v, double t) {
        ReferenceSolution r(Kind::GaussianLine);
        r.f_ = std::move(f);
        r.drift_ = c;
        r.potential_ = v;
        r.t_ = t;
        return r;
    }

    /// Semigroup of Lap - theta x d/dx (the dX = -theta X dt + sqrt(2) dW
    /// diffusion): E[f(x e^{-theta t} + sigma_t Z)], sigma_t^2 = (1-e^{-2 theta t})/theta.
    static ReferenceSolution ou_line(TestFn f, double theta, double t) {
        if (!(theta > 0.0)) throw std::invalid_argument("ou_line: theta must be positive");
        ReferenceSolution r(Kind::OuLine);
        r.f_ = std::move(f);
        r.theta_ = theta;
        r.t_ = t;
        return r;
    }

    /// Euler-Maruyama estimator of the killed functional
    /// E[exp(-int_0^t V(X_s) ds) f(X_t); t < exit], diffusion dX = b dt + sqrt(2) dW,
    /// fixed step t/512, left-endpoint potential rule, window exit kills the path.
    static ReferenceSolution feynman_kac_mc(Manifold m, VectorField b, ScalarField V, TestFn f,
                                            double t, std::int64_t paths, std::uint64_t seed,
                                            std::optional<AxisBox> window = std::nullopt) {
        if (paths < 1000) throw std::invalid_argument("feynman_kac_mc: need at least 1e3 paths");
        if (m.kind() == ManifoldKind::Model2D)
            throw std::invalid_argument("feynman_kac_mc: Euclidean or Circle geometry only");
        ReferenceSolution r(Kind::FeynmanKacMc);
        r.manifold_ = std::move(m);
        r.b_ = std::move(b);
        r.V_ = std::move(V);
        r.f_ = std::move(f);
        r.t_ = t;
        r.paths_ = paths;
        r.seed_ = seed;
        r.window_ = window;
        return r;
    }

    Kind kind() const { return kind_; }
    std::int64_t paths() const { return paths_; }
    double step() const { return t_ / 512.0; }

    double eval(const Point& x, const ExecContext& ctx = {}) const { return estimate(x, ctx).mean; }

    McEstimate estimate(const Point& x, const ExecContext& ctx = {}) const {
        switch (kind_) {
            case Kind::FourierCircle: return {eval_fourier(x[0]), 0.0};
            case Kind::GaussianLine: return {eval_gaussian(x[0]), 0.0};
            case Kind::OuLine: return {eval_ou(x[0]), 0.0};
            case Kind::FeynmanKacMc: return run_mc(x, ctx);
        }
        throw std::logic_error("ReferenceSolution: unknown kind");
    }

private:
    explicit ReferenceSolution(Kind k) : kind_(k) {}

    double eval_fourier(double theta) const {
        const double arg = theta + drift_ * t_;
        double acc = 0.0;
        for (std::size_t m = 0; m < cos_coeffs_.size(); ++m) {
            const double mm = static_cast<double>(m);
            acc += cos_coeffs_[m] * std::exp(-(mm * mm + potential_) * t_) * std::cos(mm * arg);
        }
        for (std::size_t m = 1; m <= sin_coeffs_.size(); ++m) {
            const double mm = static_cast<double>(m);
            acc += sin_coeffs_[m - 1] * std::exp(-(mm * mm + potential_) * t_) * std::sin(mm * arg);
        }
        return acc;
    }

    static std::vector<double> z_breaks(const TestFn& f, double shift, double width) {
        std::vector<double> zs;
        for (double y : f.breakpoints()) zs.push_back((y - shift) / width);
        return zs;
    }

    double eval_gaussian(double x) const {
        if (t_ <= 0.0) return (*f_)(Point::line(x));
        const double shift = x + drift_ * t_;
        const double width = 2.0 * std::sqrt(t_);
        const double integral = detail::gauss_weighted_integral(
            [&](double z) { return (*f_)(Point::line(shift + width * z)); }, z_breaks(*f_, shift, width));
        return std::exp(-potential_ * t_) * detail::kInvSqrtPi * integral;
    }

    double eval_ou(double x) const {
        if (t_ <= 0.0) return (*f_)(Point::line(x));
        const double mean = x * std::exp(-theta_ * t_);
        const double sigma = std::sqrt((1.0 - std::exp(-2.0 * theta_ * t_)) / theta_);
        const double width = sigma * std::sqrt(2.0);
        const double integral = detail::gauss_weighted_integral(
            [&](double z) { return (*f_)(Point::line(mean + width * z)); }, z_breaks(*f_, mean, width));
        return detail::kInvSqrtPi * integral;
    }

    McEstimate run_mc(const Point& x0, const ExecContext& ctx) const {
        const Manifold& m = *manifold_;
        const int dim = m.dim();
        const double h = t_ / 512.0;
        const double noise = std::sqrt(2.0 * h);
        std::vector<double> vals(static_cast<std::size_t>(paths_));
        parallel_for(paths_, ctx.threads, [&](std::int64_t lo, std::int64_t hi) {
            std::array<double, Point::kMaxDim> bx{};
            for (std::int64_t i = lo; i < hi; ++i) {
                CounterRng rng(seed_, static_cast<std::uint64_t>(i));
                Point x = x0;
                double v_acc = 0.0;
                bool alive = true;
                for (int k = 0; k < 512 && alive; ++k) {
                    v_acc += (*V_)(x);
                    b_->eval(m, x, std::span<double>(bx.data(), static_cast<std::size_t>(dim)));
                    for (int d = 0; d < dim; ++d) x[d] += bx[static_cast<std::size_t>(d)] * h + noise * rng.normal();
                    if (m.kind() == ManifoldKind::Circle) {
                        x[0] = canonical_angle(x[0]);
                    } else if (window_ && !window_->contains(x)) {
                        alive = false;  // killed at the boundary: contributes zero
                    }
                }
                vals[static_cast<std::size_t>(i)] =
                    alive ? std::exp(-h * v_acc) * (*f_)(x) : 0.0;
            }
        });
        const double n = static_cast<double>(paths_);
        const double mean = pairwise_sum(vals) / n;
        std::vector<double> sq(vals.size());
        for (std::size_t i = 0; i < vals.size(); ++i) sq[i] = (vals[i] - mean) * (vals[i] - mean);
        const double var = pairwise_sum(sq) / (n - 1.0);
        return {mean, std::sqrt(var / n)};
    }

    Kind kind_;
    // Fourier data
    std::vector<double> cos_coeffs_, sin_coeffs_;
    double drift_ = 0.0;
    double potential_ = 0.0;
    double theta_ = 1.0;
    double t_ = 0.0;
    // functional data
    std::optional<Manifold> manifold_;
    std::optional<VectorField> b_;
    std::optional<ScalarField> V_;
    std::optional<TestFn> f_;
    std::int64_t paths_ = 0;
    std::uint64_t seed_ = 0;
    std::optional<AxisBox> window_;
};

}  // namespace driftwalk
