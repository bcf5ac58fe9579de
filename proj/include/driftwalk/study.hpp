#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "driftwalk/config.hpp"

namespace driftwalk {

inline constexpr const char* kArtifactVersion = "driftwalk 0.1.0";

// ---------------------------------------------------------------------------
// Partition construction from the mesh law
// ---------------------------------------------------------------------------

/// Target mesh for a given rho: rho^{2+a} for rate studies, rho^2/log(1/rho)
/// for convergence-only studies (which keeps |X| = o(rho^2)).
inline double mesh_target(const StudyConfig& cfg, double rho) {
    if (cfg.mesh_o2) {
        if (!(rho < 1.0)) throw ConfigError("mesh law o2 requires rho < 1");
        return rho * rho / std::log(1.0 / rho);
    }
    return std::pow(rho, 2.0 + cfg.mesh_a);
}

inline std::shared_ptr<const Partition> build_partition_for(const StudyConfig& cfg, double rho) {
    const double target = mesh_target(cfg, rho);
    switch (cfg.manifold.kind()) {
        case ManifoldKind::Circle: {
            const auto K = static_cast<std::int64_t>(std::ceil(kTwoPi / target));
            if (K > kMaxCells) throw ConfigError("mesh law needs more than 1e7 circle cells; refusing");
            return std::make_shared<const Partition>(
                circle_partition(static_cast<std::int32_t>(std::max<std::int64_t>(K, 3)), cfg.ref_policy,
                                 cfg.manifold));
        }
        case ManifoldKind::Euclidean: {
            const double root_n = std::sqrt(static_cast<double>(cfg.manifold.dim()));
            const auto k = static_cast<std::int64_t>(std::ceil(root_n / target));
            if (k <= 0 || k > kMaxCells) throw ConfigError("mesh law gives an infeasible grid density");
            return std::make_shared<const Partition>(
                grid_partition(cfg.manifold, static_cast<int>(k), *cfg.window, cfg.ref_policy));
        }
        case ManifoldKind::Model2D: {
            const auto l = static_cast<std::int64_t>(std::ceil(2.0 / target));
            if (l <= 0 || l > kMaxCells) throw ConfigError("mesh law gives an infeasible annulus density");
            const double aligned = std::floor(cfg.r_max * static_cast<double>(l)) / static_cast<double>(l);
            return std::make_shared<const Partition>(
                model2d_partition(cfg.manifold, static_cast<int>(l), aligned, cfg.ref_policy));
        }
    }
    throw std::logic_error("build_partition_for: unknown manifold kind");
}

inline std::shared_ptr<const Partition> build_explicit_partition(const StudyConfig& cfg) {
    if (!cfg.partition) throw ConfigError("config: this command needs an explicit \"partition\" block");
    const ExplicitPartition& ep = *cfg.partition;
    switch (ep.type) {
        case ExplicitPartition::Type::Grid:
            if (!cfg.window) throw ConfigError("partition: grid needs a window");
            return std::make_shared<const Partition>(
                grid_partition(cfg.manifold, ep.k, *cfg.window, cfg.ref_policy));
        case ExplicitPartition::Type::Circle:
            return std::make_shared<const Partition>(circle_partition(ep.K, cfg.ref_policy, cfg.manifold));
        case ExplicitPartition::Type::Model2D: {
            const double aligned = std::floor(cfg.r_max * ep.l) / ep.l;
            return std::make_shared<const Partition>(
                model2d_partition(cfg.manifold, ep.l, aligned, cfg.ref_policy));
        }
    }
    throw std::logic_error("build_explicit_partition: unknown type");
}

// ---------------------------------------------------------------------------
// Study records and report
// ---------------------------------------------------------------------------

struct PointwiseCheck {
    std::vector<double> x;
    double discrete = 0.0;
    double oracle = 0.0;
    double oracle_se = 0.0;
};

struct StudyRecord {
    double rho = 0.0, mesh = 0.0, delta = 0.0;
    std::int64_t cells = 0, steps = 0;
    double sup_error = std::numeric_limits<double>::quiet_NaN();
    double lp_error = std::numeric_limits<double>::quiet_NaN();
    double residual_sup = std::numeric_limits<double>::quiet_NaN();
    double window_kill_mass = 0.0;
    std::int64_t window_kill_rows = 0, exploded_rows = 0;
    double runtime_ms = 0.0;  // reported under meta only; wall time is not deterministic
    // Field dump for fields.csv:
    int coord_dim = 0;
    std::vector<std::array<double, 3>> coords;
    std::vector<double> values;
    std::vector<double> refvals;  // empty when no field oracle was configured
};

struct StudyReport {
    std::vector<StudyRecord> records;  // sorted by descending rho
    bool slope_defined = false;
    double slope = std::numeric_limits<double>::quiet_NaN();
    double slope_r2 = std::numeric_limits<double>::quiet_NaN();
    bool residual_fit_defined = false;
    double residual_beta = std::numeric_limits<double>::quiet_NaN();
    double residual_r2 = std::numeric_limits<double>::quiet_NaN();
    std::vector<PointwiseCheck> pointwise;
    std::uint64_t seed = 0;
    int threads = 1;
    double p = 2.0;
    Json config_echo;
};

namespace detail {

inline std::optional<ReferenceSolution> make_field_oracle(const StudyConfig& cfg) {
    switch (cfg.ref_kind) {
        case ReferenceKind::FourierCircle:
            return ReferenceSolution::fourier_circle(cfg.f, cfg.ref_c, cfg.ref_v, cfg.t);
        case ReferenceKind::GaussianLine:
            return ReferenceSolution::gaussian_line(cfg.f, cfg.ref_c, cfg.ref_v, cfg.t);
        case ReferenceKind::OuLine: return ReferenceSolution::ou_line(cfg.f, cfg.ref_theta, cfg.t);
        default: return std::nullopt;
    }
}

inline ReferenceSolution make_mc_oracle(const StudyConfig& cfg) {
    return ReferenceSolution::feynman_kac_mc(cfg.manifold, cfg.b, cfg.V, cfg.f, cfg.t, cfg.mc_paths,
                                             cfg.seed, cfg.window);
}

/// Cells over which field errors are measured: everything, unless f carries a
/// support hint, in which case cells within distance 1 of the padded hint.
inline std::vector<std::int32_t> eval_region(const StudyConfig& cfg, const Partition& part) {
    const SupportHint hint = cfg.f.support(part.manifold());
    std::vector<std::int32_t> ids;
    ids.reserve(static_cast<std::size_t>(part.size()));
    for (std::int32_t i = 0; i < part.size(); ++i) {
        if (!hint.everywhere) {
            const Point& x = part.cell(i).ref_point;
            double gap2 = 0.0;
            for (int ax = 0; ax < part.manifold().dim(); ++ax) {
                const auto a = static_cast<std::size_t>(ax);
                const double d = x[ax] < hint.box.lo[a] ? hint.box.lo[a] - x[ax]
                                                        : (x[ax] > hint.box.hi[a] ? x[ax] - hint.box.hi[a] : 0.0);
                gap2 += d * d;
            }
            if (std::sqrt(gap2) > 1.0) continue;
        }
        ids.push_back(i);
    }
    return ids;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The study driver
// ---------------------------------------------------------------------------

inline StudyReport run_study(const StudyConfig& cfg, const ExecContext& ctx) {
    if (cfg.rhos.empty()) throw ConfigError("config: study needs a rho list");
    if (!(cfg.t > 0.0)) throw ConfigError("config: study needs t > 0");

    StudyReport report;
    report.seed = cfg.seed;
    report.threads = ctx.threads;
    report.p = cfg.p;
    report.config_echo = cfg.echo;

    std::vector<double> rhos = cfg.rhos;
    std::sort(rhos.begin(), rhos.end(), std::greater<>());

    const std::optional<ReferenceSolution> oracle = detail::make_field_oracle(cfg);
    std::shared_ptr<const Partition> last_part;

    for (double rho : rhos) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shared_ptr<const Partition> part = build_partition_for(cfg, rho);
        if (!(part->mesh() < rho / 3.0))
            throw ConfigError("infeasible mesh law: mesh >= rho/3 at rho = " + std::to_string(rho));
        auto graph = std::make_shared<const ProximityGraph>(build_graph(part, rho, ctx));
        const SemigroupResult run = run_semigroup(graph, cfg.b, cfg.V, cfg.v0, cfg.f, cfg.t, cfg.track, ctx);

        StudyRecord rec;
        rec.rho = rho;
        rec.mesh = part->mesh();
        rec.delta = run.delta;
        rec.cells = part->size();
        rec.steps = run.steps;
        rec.window_kill_mass = run.lost_mass_fraction;
        rec.window_kill_rows = run.window_kill_rows;
        rec.exploded_rows = run.exploded_rows;

        rec.coord_dim = part->manifold().dim();
        rec.coords.resize(static_cast<std::size_t>(part->size()));
        for (std::int32_t i = 0; i < part->size(); ++i)
            for (int ax = 0; ax < rec.coord_dim; ++ax)
                rec.coords[static_cast<std::size_t>(i)][static_cast<std::size_t>(ax)] =
                    part->cell(i).ref_point[ax];
        rec.values = run.values.values;

        if (oracle) {
            const std::vector<std::int32_t> region = detail::eval_region(cfg, *part);
            rec.refvals.assign(static_cast<std::size_t>(part->size()),
                               std::numeric_limits<double>::quiet_NaN());
            double sup = 0.0;
            std::vector<double> lp_terms;
            lp_terms.reserve(region.size());
            for (std::int32_t id : region) {
                const double ref = oracle->eval(part->cell(id).ref_point);
                rec.refvals[static_cast<std::size_t>(id)] = ref;
                const double diff = std::abs(rec.values[static_cast<std::size_t>(id)] - ref);
                sup = std::max(sup, diff);
                lp_terms.push_back(std::pow(diff, cfg.p) * part->volume(id));
            }
            rec.sup_error = sup;
            rec.lp_error = std::pow(pairwise_sum(lp_terms), 1.0 / cfg.p);
        }

        if (cfg.residual) {
            if (cfg.v0 != 0.0)
                throw ConfigError("residual diagnostics need the unshifted potential (v0 = 0)");
            rec.residual_sup = generator_residual(graph, cfg.b, cfg.V, cfg.f, ctx).sup;
        }

        rec.runtime_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        report.records.push_back(std::move(rec));
        last_part = part;
    }

    // Pointwise oracle comparisons at the finest rho.
    if (!cfg.eval_points.empty() && last_part) {
        const StudyRecord& fine = report.records.back();
        GraphFunction values;
        values.values = fine.values;
        for (const Point& x : cfg.eval_points) {
            PointwiseCheck pc;
            for (int ax = 0; ax < last_part->manifold().dim(); ++ax) pc.x.push_back(x[ax]);
            pc.discrete = pointwise_eval(values, *last_part, x);
            if (cfg.ref_kind == ReferenceKind::FeynmanKacMc) {
                const McEstimate est = detail::make_mc_oracle(cfg).estimate(x, ctx);
                pc.oracle = est.mean;
                pc.oracle_se = est.se;
            } else if (oracle) {
                pc.oracle = oracle->eval(x);
                pc.oracle_se = 0.0;
            } else {
                throw ConfigError("eval_points given but no reference configured");
            }
            report.pointwise.push_back(std::move(pc));
        }
    }

    // Log-log slope of sup_error against rho.
    {
        std::vector<double> lx, ly;
        for (const StudyRecord& r : report.records)
            if (std::isfinite(r.sup_error) && r.sup_error > 0.0) {
                lx.push_back(std::log(r.rho));
                ly.push_back(std::log(r.sup_error));
            }
        if (lx.size() >= 3) {
            const LinearFit fit = linear_fit(lx, ly);
            report.slope_defined = true;
            report.slope = fit.slope;
            report.slope_r2 = fit.r2;
        }
    }
    // Through-origin fit of the generator residual against rho.
    {
        std::vector<double> xs, ys;
        for (const StudyRecord& r : report.records)
            if (std::isfinite(r.residual_sup)) {
                xs.push_back(r.rho);
                ys.push_back(r.residual_sup);
            }
        if (xs.size() >= 2) {
            const ProportionalFit fit = fit_through_origin(xs, ys);
            report.residual_fit_defined = true;
            report.residual_beta = fit.beta;
            report.residual_r2 = fit.r2;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Threshold checks (exit code 3 when they fail)
// ---------------------------------------------------------------------------

struct CheckOutcome {
    bool passed = true;
    std::vector<std::string> failures;
};

inline CheckOutcome evaluate_checks(const StudyReport& rep, const CheckThresholds& thr) {
    CheckOutcome out;
    auto fail = [&](const std::string& msg) {
        out.passed = false;
        out.failures.push_back(msg);
    };
    if (thr.monotone.value_or(false)) {
        for (std::size_t i = 1; i < rep.records.size(); ++i)
            if (!(rep.records[i].sup_error < rep.records[i - 1].sup_error))
                fail("sup_error not monotonically decreasing in rho");
    }
    if (thr.max_sup_error && !rep.records.empty()) {
        const double last = rep.records.back().sup_error;
        if (!(last <= *thr.max_sup_error))
            fail("sup_error " + std::to_string(last) + " exceeds " + std::to_string(*thr.max_sup_error));
    }
    if (thr.min_slope) {
        if (!rep.slope_defined || !(rep.slope >= *thr.min_slope))
            fail("slope " + (rep.slope_defined ? std::to_string(rep.slope) : std::string("n/a")) +
                 " below " + std::to_string(*thr.min_slope));
    }
    if (thr.residual_monotone.value_or(false)) {
        for (std::size_t i = 1; i < rep.records.size(); ++i)
            if (!(rep.records[i].residual_sup < rep.records[i - 1].residual_sup))
                fail("generator residual not monotonically decreasing in rho");
    }
    if (thr.residual_r2_min) {
        if (!rep.residual_fit_defined || !(rep.residual_r2 >= *thr.residual_r2_min))
            fail("residual through-origin R^2 below the threshold");
    }
    if (thr.pointwise_se_mult || thr.pointwise_abs_tol) {
        const double mult = thr.pointwise_se_mult.value_or(3.0);
        const double abs_tol = thr.pointwise_abs_tol.value_or(0.0);
        for (const PointwiseCheck& pc : rep.pointwise) {
            const double tol = mult * pc.oracle_se + abs_tol;
            if (!(std::abs(pc.discrete - pc.oracle) <= tol))
                fail("pointwise check failed: |" + std::to_string(pc.discrete) + " - " +
                     std::to_string(pc.oracle) + "| > " + std::to_string(tol));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report emission: study.json, errors.csv, fields.csv, plot.svg
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline Json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

inline std::string svg_plot(const StudyReport& rep) {
    std::vector<std::pair<double, double>> pts;  // (log10 rho, log10 err)
    for (const StudyRecord& r : rep.records)
        if (std::isfinite(r.sup_error) && r.sup_error > 0.0)
            pts.emplace_back(std::log10(r.rho), std::log10(r.sup_error));
    std::string svg =
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 480\" "
        "font-family=\"monospace\" font-size=\"12\">\n"
        "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    if (pts.size() < 2) {
        svg += "<text x=\"40\" y=\"60\">insufficient data for a log-log plot</text>\n</svg>\n";
        return svg;
    }
    double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
    for (auto& [x, y] : pts) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    const double padx = 0.1 * std::max(1e-6, xmax - xmin), pady = 0.1 * std::max(1e-6, ymax - ymin);
    xmin -= padx;
    xmax += padx;
    ymin -= pady;
    ymax += pady;
    auto X = [&](double x) { return 70.0 + (x - xmin) / (xmax - xmin) * 520.0; };
    auto Y = [&](double y) { return 430.0 - (y - ymin) / (ymax - ymin) * 380.0; };
    char buf[256];
    svg += "<line x1=\"70\" y1=\"430\" x2=\"590\" y2=\"430\" stroke=\"black\"/>\n";
    svg += "<line x1=\"70\" y1=\"50\" x2=\"70\" y2=\"430\" stroke=\"black\"/>\n";
    svg += "<text x=\"280\" y=\"465\">log10 rho</text>\n";
    svg += "<text x=\"8\" y=\"240\" transform=\"rotate(-90 16 240)\">log10 sup error</text>\n";
    if (rep.slope_defined) {
        // Fitted line in natural logs: ln e = slope ln rho + b; same line in log10.
        const double b10 = (std::log(rep.records.front().sup_error) -
                            rep.slope * std::log(rep.records.front().rho)) /
                           std::log(10.0);
        const double yl = rep.slope * xmin + b10, yr = rep.slope * xmax + b10;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.6g\" y1=\"%.6g\" x2=\"%.6g\" y2=\"%.6g\" stroke=\"steelblue\"/>\n",
                      X(xmin), Y(yl), X(xmax), Y(yr));
        svg += buf;
        std::snprintf(buf, sizeof buf, "<text x=\"80\" y=\"70\">slope %.4g (R2 %.4g)</text>\n",
                      rep.slope, rep.slope_r2);
        svg += buf;
    }
    for (auto& [x, y] : pts) {
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.6g\" cy=\"%.6g\" r=\"4\" fill=\"crimson\"/>\n",
                      X(x), Y(y));
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace detail

inline Json report_to_json(const StudyReport& rep, bool include_meta, std::string timestamp = "") {
    Json j;
    j["schema"] = 1;
    j["version"] = kArtifactVersion;
    j["seed"] = rep.seed;
    j["threads"] = rep.threads;
    j["p"] = rep.p;
    Json records = Json::array();
    for (const StudyRecord& r : rep.records) {
        Json rj;
        rj["rho"] = r.rho;
        rj["mesh"] = r.mesh;
        rj["delta"] = r.delta;
        rj["cells"] = r.cells;
        rj["steps"] = r.steps;
        rj["sup_error"] = detail::finite_or_null(r.sup_error);
        rj["lp_error"] = detail::finite_or_null(r.lp_error);
        rj["generator_residual"] = detail::finite_or_null(r.residual_sup);
        rj["window_kill_mass"] = r.window_kill_mass;
        rj["window_kill_rows"] = r.window_kill_rows;
        rj["exploded_rows"] = r.exploded_rows;
        records.push_back(std::move(rj));
    }
    j["records"] = std::move(records);
    j["slope"] = rep.slope_defined ? Json(rep.slope) : Json(nullptr);
    j["slope_r2"] = rep.slope_defined ? Json(rep.slope_r2) : Json(nullptr);
    j["residual_fit"] = rep.residual_fit_defined
                            ? Json{{"beta", rep.residual_beta}, {"r2", rep.residual_r2}}
                            : Json(nullptr);
    Json pw = Json::array();
    for (const PointwiseCheck& pc : rep.pointwise) {
        Json pj;
        pj["x"] = pc.x;
        pj["discrete"] = pc.discrete;
        pj["oracle"] = pc.oracle;
        pj["oracle_se"] = pc.oracle_se;
        pw.push_back(std::move(pj));
    }
    j["pointwise"] = std::move(pw);
    j["config"] = rep.config_echo;
    if (include_meta) {
        Json meta;
        meta["timestamp"] = timestamp;
        Json runtimes = Json::array();
        for (const StudyRecord& r : rep.records) runtimes.push_back(r.runtime_ms);
        meta["runtime_ms"] = std::move(runtimes);
        j["meta"] = std::move(meta);
    }
    return j;
}

/// Writes study.json, errors.csv, fields.csv and plot.svg. Everything except
/// the study.json "meta" block is byte-deterministic for a fixed
/// (config, seed), independent of thread count.
inline void emit_report(const StudyReport& rep, const std::filesystem::path& out_dir,
                        std::string timestamp = "") {
    if (rep.records.empty()) throw ConfigError("emit_report: refusing to write an empty report");
    std::filesystem::create_directories(out_dir);

    {
        std::ofstream js(out_dir / "study.json");
        if (!js) throw std::runtime_error("emit_report: cannot write " + (out_dir / "study.json").string());
        js << report_to_json(rep, /*include_meta=*/true, std::move(timestamp)).dump(2) << "\n";
    }
    {
        std::ofstream csv(out_dir / "errors.csv");
        if (!csv) throw std::runtime_error("emit_report: cannot write " + (out_dir / "errors.csv").string());
        csv << "rho,mesh,cells,steps,delta,sup_error,lp_error,generator_residual,window_kill_mass\n";
        for (const StudyRecord& r : rep.records) {
            csv << detail::fmt_double(r.rho) << ',' << detail::fmt_double(r.mesh) << ',' << r.cells
                << ',' << r.steps << ',' << detail::fmt_double(r.delta) << ','
                << detail::fmt_double(r.sup_error) << ',' << detail::fmt_double(r.lp_error) << ','
                << detail::fmt_double(r.residual_sup) << ',' << detail::fmt_double(r.window_kill_mass)
                << '\n';
        }
    }
    {
        std::ofstream csv(out_dir / "fields.csv");
        if (!csv) throw std::runtime_error("emit_report: cannot write " + (out_dir / "fields.csv").string());
        csv << "rho,cell_id,ref_0,ref_1,ref_2,value,reference,abs_error\n";
        for (const StudyRecord& r : rep.records) {
            for (std::size_t i = 0; i < r.values.size(); ++i) {
                csv << detail::fmt_double(r.rho) << ',' << i;
                for (int ax = 0; ax < 3; ++ax)
                    csv << ',' << (ax < r.coord_dim ? detail::fmt_double(r.coords[i][static_cast<std::size_t>(ax)]) : "");
                const double ref = r.refvals.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                     : r.refvals[i];
                csv << ',' << detail::fmt_double(r.values[i]) << ',' << detail::fmt_double(ref) << ','
                    << detail::fmt_double(std::isfinite(ref) ? std::abs(r.values[i] - ref)
                                                             : std::numeric_limits<double>::quiet_NaN())
                    << '\n';
            }
        }
    }
    {
        std::ofstream svg(out_dir / "plot.svg");
        if (!svg) throw std::runtime_error("emit_report: cannot write " + (out_dir / "plot.svg").string());
        svg << detail::svg_plot(rep);
    }
}

}  // namespace driftwalk
