#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftwalk/fields.hpp"
#include "driftwalk/flow.hpp"
#include "driftwalk/partition.hpp"
#include "driftwalk/reference.hpp"
#include "driftwalk/semigroup.hpp"

namespace driftwalk {

using Json = nlohmann::ordered_json;

enum class ReferenceKind { None, FourierCircle, GaussianLine, OuLine, FeynmanKacMc };

struct ExplicitPartition {
    enum class Type { Grid, Circle, Model2D } type = Type::Circle;
    int k = 1;            // grid
    std::int32_t K = 3;   // circle
    int l = 1;            // model2d
};

struct CheckThresholds {
    std::optional<double> max_sup_error;
    std::optional<double> min_slope;
    std::optional<bool> monotone;
    std::optional<double> residual_r2_min;
    std::optional<bool> residual_monotone;
    std::optional<double> pointwise_se_mult;
    std::optional<double> pointwise_abs_tol;
};

struct StudyConfig {
    std::uint64_t seed = 1;
    int threads = 1;
    Manifold manifold = Manifold::circle();
    std::optional<AxisBox> window;   // euclidean partition window / MC kill box
    double r_max = 0.0;              // model2d truncation radius (pre-alignment)
    VectorField b;
    ScalarField V;
    double v0 = 0.0;
    TestFn f = TestFn::constant(1.0);
    double t = 0.0;
    Track track = Track::C0;
    double p = 2.0;
    std::vector<double> rhos;
    double mesh_a = 1.0;
    bool mesh_o2 = false;            // |X| = rho^2 / log(1/rho) instead of rho^{2+a}
    RefPolicy ref_policy = RefPolicy::Center;
    std::optional<ExplicitPartition> partition;
    ReferenceKind ref_kind = ReferenceKind::None;
    double ref_c = 0.0;
    double ref_v = 0.0;
    double ref_theta = 1.0;
    std::int64_t mc_paths = 100000;
    std::vector<Point> eval_points;
    bool residual = false;
    double audit_p = 2.0;
    KappaProfile kappa = KappaProfile::One;
    std::int64_t audit_samples = 2001;
    CheckThresholds check;
    Json echo;                       // the raw parsed config, for report echoing
};

namespace detail {

inline double jget(const Json& j, const char* key, double dflt) {
    return j.contains(key) ? j.at(key).get<double>() : dflt;
}

inline std::vector<double> jvec(const Json& j) {
    std::vector<double> out;
    for (const auto& v : j) out.push_back(v.get<double>());
    return out;
}

inline AxisBox parse_window(const Json& j) {
    std::vector<double> lo, hi;
    for (const auto& pair : j) {
        if (!pair.is_array() || pair.size() != 2)
            throw ConfigError("window: expected [[lo,hi], ...] per axis");
        lo.push_back(pair[0].get<double>());
        hi.push_back(pair[1].get<double>());
    }
    return AxisBox::make(lo, hi);
}

inline PsiProfile parse_psi(const Json& j) {
    const std::string form = j.at("form").get<std::string>();
    if (form == "identity" || form == "r") return PsiProfile::identity();
    if (form == "sin") return PsiProfile::sin_profile();
    if (form == "sinh") return PsiProfile::sinh_profile();
    if (form == "poly_growth") return PsiProfile::poly_growth(j.at("alpha").get<double>());
    if (form == "exp_growth")
        return PsiProfile::exp_growth(j.at("alpha").get<double>(), j.at("beta").get<double>());
    throw ConfigError("psi: unknown form '" + form + "'");
}

inline Manifold parse_manifold(const Json& j, const std::optional<AxisBox>& window) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "euclidean") {
        const int n = j.at("n").get<int>();
        return Manifold::euclidean(n, std::nullopt);
    }
    if (kind == "circle") return Manifold::circle();
    if (kind == "model2d") {
        const double r0 = j.contains("r0") ? j.at("r0").get<double>() : kInf;
        return Manifold::model2d(parse_psi(j.at("psi")), r0);
    }
    (void)window;
    throw ConfigError("manifold: unknown kind '" + kind + "'");
}

inline WeightU parse_weight(const Json& j) {
    const std::string form = j.at("form").get<std::string>();
    const double a = j.at("a").get<double>();
    if (form == "quadratic") return WeightU::quadratic(a);
    if (form == "cos_angle") return WeightU::cos_angle(a);
    throw ConfigError("weight: unknown form '" + form + "'");
}

inline VectorField parse_vector_field(const Json& j) {
    const std::string form = j.at("form").get<std::string>();
    if (form == "zero") return VectorField::zero();
    if (form == "constant") return VectorField::constant(jvec(j.at("values")));
    if (form == "poly1d") return VectorField::poly1d(jvec(j.at("coeffs")));
    if (form == "coord_poly") {
        std::vector<std::vector<double>> polys;
        for (const auto& p : j.at("polys")) polys.push_back(jvec(p));
        return VectorField::coord_poly(std::move(polys));
    }
    if (form == "rotation")
        return VectorField::rotation(j.at("c").get<double>(), jget(j, "a1", 0.0), jget(j, "b1", 0.0));
    if (form == "polar") return VectorField::polar(jvec(j.at("br")), jget(j, "btheta", 0.0));
    throw ConfigError("b: unknown form '" + form + "'");
}

inline ScalarField parse_scalar_field(const Json& j, double offset) {
    const std::string form = j.at("form").get<std::string>();
    ScalarField base;
    if (form == "zero")
        base = ScalarField::zero();
    else if (form == "constant")
        base = ScalarField::constant(j.at("c").get<double>());
    else if (form == "poly1d")
        base = ScalarField::poly1d(jvec(j.at("coeffs")));
    else if (form == "cos_bump")
        base = ScalarField::cos_bump(j.at("amp").get<double>());
    else if (form == "radial_power")
        base = ScalarField::radial_power(j.at("c").get<double>(), j.at("k").get<int>());
    else
        throw ConfigError("V: unknown form '" + form + "'");
    return offset != 0.0 ? base.shifted(offset) : base;
}

inline TestFn parse_test_fn(const Json& j) {
    const std::string form = j.at("form").get<std::string>();
    if (form == "constant") return TestFn::constant(j.at("c").get<double>());
    if (form == "cos") return TestFn::cosine();
    if (form == "fourier") {
        std::vector<double> cs = j.contains("cos") ? jvec(j.at("cos")) : std::vector<double>{};
        std::vector<double> ss = j.contains("sin") ? jvec(j.at("sin")) : std::vector<double>{};
        return TestFn::fourier(std::move(cs), std::move(ss));
    }
    if (form == "gaussian") return TestFn::gaussian(j.at("c").get<double>(), jvec(j.at("center")));
    if (form == "linear_clipped")
        return TestFn::linear_clipped(j.at("lo").get<double>(), j.at("hi").get<double>(),
                                      jget(j, "margin", 1.0));
    if (form == "poly1d") return TestFn::poly1d(jvec(j.at("coeffs")));
    if (form == "radial_bump")
        return TestFn::radial_bump(j.at("c").get<double>(), j.at("rc").get<double>(),
                                   j.at("m").get<int>());
    throw ConfigError("f: unknown form '" + form + "'");
}

inline KappaProfile parse_kappa(const std::string& s) {
    if (s == "one") return KappaProfile::One;
    if (s == "inv_r") return KappaProfile::InvR;
    if (s == "inv_r_log_r") return KappaProfile::InvRLogR;
    throw ConfigError("kappa: unknown profile '" + s + "'");
}

}  // namespace detail

inline StudyConfig parse_config(const Json& j) {
    if (!j.contains("schema") || j.at("schema").get<int>() != 1)
        throw ConfigError("config: missing or unsupported schema (expected \"schema\": 1)");
    StudyConfig cfg;
    cfg.echo = j;
    cfg.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : 1;
    cfg.threads = j.contains("threads") ? j.at("threads").get<int>() : 1;
    if (j.contains("window")) cfg.window = detail::parse_window(j.at("window"));
    cfg.manifold = detail::parse_manifold(j.at("manifold"), cfg.window);
    if (j.contains("weight")) cfg.manifold.set_weight(detail::parse_weight(j.at("weight")));
    if (cfg.manifold.kind() == ManifoldKind::Euclidean && !cfg.window)
        throw ConfigError("config: euclidean studies need a window");
    cfg.r_max = detail::jget(j, "r_max", 0.0);
    if (cfg.manifold.kind() == ManifoldKind::Model2D && !(cfg.r_max > 0.0))
        throw ConfigError("config: model2d studies need r_max > 0");

    cfg.b = j.contains("b") ? detail::parse_vector_field(j.at("b")) : VectorField::zero();
    const double v_offset = detail::jget(j, "V_offset", 0.0);
    cfg.V = j.contains("V") ? detail::parse_scalar_field(j.at("V"), v_offset) : ScalarField::zero();
    cfg.v0 = detail::jget(j, "v0", 0.0);
    if (j.contains("f")) cfg.f = detail::parse_test_fn(j.at("f"));
    cfg.t = detail::jget(j, "t", 0.0);
    cfg.track = (j.contains("track") && j.at("track").get<std::string>() == "lp") ? Track::Lp : Track::C0;
    cfg.p = detail::jget(j, "p", 2.0);
    if (!(cfg.p > 1.0 && cfg.p < kInf)) throw ConfigError("config: p must lie in (1, inf)");

    if (j.contains("rho")) {
        if (j.at("rho").is_array())
            cfg.rhos = detail::jvec(j.at("rho"));
        else
            cfg.rhos = {j.at("rho").get<double>()};
    }
    for (double r : cfg.rhos)
        if (!(r > 0.0)) throw ConfigError("config: rho values must be positive");

    if (j.contains("mesh_law")) {
        const Json& ml = j.at("mesh_law");
        if (ml.contains("mode") && ml.at("mode").get<std::string>() == "o2") {
            cfg.mesh_o2 = true;
        } else {
            cfg.mesh_a = ml.at("a").get<double>();
            if (!(cfg.mesh_a > 0.0))
                throw ConfigError(
                    "config: mesh_law a must be > 0 for rate studies; use {\"mode\":\"o2\"} for "
                    "convergence-only studies");
        }
    }
    if (j.contains("ref_points")) {
        const std::string rp = j.at("ref_points").get<std::string>();
        if (rp == "dithered")
            cfg.ref_policy = RefPolicy::Dithered;
        else if (rp != "center")
            throw ConfigError("config: ref_points must be 'center' or 'dithered'");
    }
    if (j.contains("partition")) {
        const Json& pj = j.at("partition");
        ExplicitPartition ep;
        if (pj.contains("window")) cfg.window = detail::parse_window(pj.at("window"));
        const std::string type = pj.at("type").get<std::string>();
        if (type == "grid") {
            ep.type = ExplicitPartition::Type::Grid;
            ep.k = pj.at("k").get<int>();
        } else if (type == "circle") {
            ep.type = ExplicitPartition::Type::Circle;
            ep.K = pj.at("K").get<std::int32_t>();
        } else if (type == "model2d") {
            ep.type = ExplicitPartition::Type::Model2D;
            ep.l = pj.at("l").get<int>();
        } else {
            throw ConfigError("partition: unknown type '" + type + "'");
        }
        cfg.partition = ep;
    }

    if (j.contains("reference")) {
        const Json& rj = j.at("reference");
        const std::string kind = rj.at("kind").get<std::string>();
        if (kind == "none")
            cfg.ref_kind = ReferenceKind::None;
        else if (kind == "fourier_circle")
            cfg.ref_kind = ReferenceKind::FourierCircle;
        else if (kind == "gaussian_line")
            cfg.ref_kind = ReferenceKind::GaussianLine;
        else if (kind == "ou_line")
            cfg.ref_kind = ReferenceKind::OuLine;
        else if (kind == "feynman_kac_mc")
            cfg.ref_kind = ReferenceKind::FeynmanKacMc;
        else
            throw ConfigError("reference: unknown kind '" + kind + "'");
        cfg.ref_c = detail::jget(rj, "c", 0.0);
        cfg.ref_v = detail::jget(rj, "v", 0.0);
        cfg.ref_theta = detail::jget(rj, "theta", 1.0);
        cfg.mc_paths = rj.contains("paths") ? rj.at("paths").get<std::int64_t>() : 100000;
    }

    if (j.contains("eval_points")) {
        for (const auto& pt : j.at("eval_points")) {
            const std::vector<double> xs = detail::jvec(pt);
            switch (cfg.manifold.kind()) {
                case ManifoldKind::Euclidean: cfg.eval_points.push_back(Point::euclidean(xs)); break;
                case ManifoldKind::Circle: cfg.eval_points.push_back(Point::circle(xs.at(0))); break;
                case ManifoldKind::Model2D:
                    cfg.eval_points.push_back(Point::polar(xs.at(0), xs.at(1)));
                    break;
            }
        }
    }

    cfg.residual = j.contains("residual") && j.at("residual").get<bool>();
    cfg.audit_p = detail::jget(j, "audit_p", 2.0);
    if (j.contains("kappa")) cfg.kappa = detail::parse_kappa(j.at("kappa").get<std::string>());
    cfg.audit_samples = j.contains("audit_samples") ? j.at("audit_samples").get<std::int64_t>() : 2001;

    if (j.contains("check")) {
        const Json& cj = j.at("check");
        auto opt = [&](const char* key) -> std::optional<double> {
            if (cj.contains(key)) return cj.at(key).get<double>();
            return std::nullopt;
        };
        cfg.check.max_sup_error = opt("max_sup_error");
        cfg.check.min_slope = opt("min_slope");
        cfg.check.residual_r2_min = opt("residual_r2_min");
        cfg.check.pointwise_se_mult = opt("pointwise_se_mult");
        cfg.check.pointwise_abs_tol = opt("pointwise_abs_tol");
        if (cj.contains("monotone")) cfg.check.monotone = cj.at("monotone").get<bool>();
        if (cj.contains("residual_monotone"))
            cfg.check.residual_monotone = cj.at("residual_monotone").get<bool>();
    }
    return cfg;
}

}  // namespace driftwalk
