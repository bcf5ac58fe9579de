// studyctl: build partitions and proximity graphs, run single semigroup
// approximations or rho-sweeps against reference oracles, and audit drift
// conditions. Configuration is a JSON file; outputs are CSV/JSON/SVG.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "driftwalk/study.hpp"

namespace dw = driftwalk;
namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool dump_graph = false;
    bool dump_operator = false;
    bool check = false;
};

dw::StudyConfig load_config(const GlobalOpts& g) {
    std::ifstream in(g.config_path);
    if (!in) throw dw::ConfigError("cannot open config file: " + g.config_path);
    dw::Json j;
    try {
        j = dw::Json::parse(in);
    } catch (const std::exception& e) {
        throw dw::ConfigError("config parse error in " + g.config_path + ": " + e.what());
    }
    dw::StudyConfig cfg = dw::parse_config(j);
    if (g.seed) cfg.seed = *g.seed;
    if (g.threads) cfg.threads = *g.threads;
    return cfg;
}

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[64];
    std::tm tm_utc{};
    gmtime_r(&tt, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::shared_ptr<const dw::Partition> partition_from(const dw::StudyConfig& cfg) {
    if (cfg.partition) return dw::build_explicit_partition(cfg);
    if (cfg.rhos.empty())
        throw dw::ConfigError("config: need either a \"partition\" block or a rho value");
    return dw::build_partition_for(cfg, cfg.rhos.front());
}

void dump_cells(const dw::Partition& p, const fs::path& path) {
    std::ofstream csv(path);
    if (!csv) throw std::runtime_error("cannot write " + path.string());
    csv << "id,volume,diameter_bound,ref_0,ref_1,p0,p1,p2,p3\n";
    for (const dw::Cell& c : p.cells()) {
        double params[4] = {0, 0, 0, 0};
        if (const auto* b = std::get_if<dw::BoxShape>(&c.shape)) {
            params[0] = b->box.lo[0];
            params[1] = b->box.hi[0];
            if (b->box.n > 1) {
                params[2] = b->box.lo[1];
                params[3] = b->box.hi[1];
            }
        } else if (const auto* a = std::get_if<dw::ArcShape>(&c.shape)) {
            params[0] = a->a;
            params[1] = a->b;
        } else if (const auto* pr = std::get_if<dw::PolarRectShape>(&c.shape)) {
            params[0] = pr->r_lo;
            params[1] = pr->r_hi;
            params[2] = pr->th_lo;
            params[3] = pr->th_hi;
        }
        csv << c.id << ',' << dw::detail::fmt_double(c.volume) << ','
            << dw::detail::fmt_double(c.diameter_bound) << ','
            << dw::detail::fmt_double(c.ref_point[0]) << ','
            << (c.ref_point.dim() > 1 ? dw::detail::fmt_double(c.ref_point[1]) : "");
        for (double v : params) csv << ',' << dw::detail::fmt_double(v);
        csv << '\n';
    }
}

void dump_graph_csv(const dw::ProximityGraph& g, const fs::path& path) {
    std::ofstream csv(path);
    if (!csv) throw std::runtime_error("cannot write " + path.string());
    csv << "cell_id,neighbor_id\n";
    for (std::int32_t i = 0; i < g.size(); ++i)
        g.for_each_neighbor(i, [&](std::int32_t j) { csv << i << ',' << j << '\n'; });
}

void dump_operator_csv(const dw::TransitionOperator& op, const fs::path& dir) {
    std::ofstream entries(dir / "operator.csv");
    if (!entries) throw std::runtime_error("cannot write operator.csv");
    entries << "row_id,col_id,prob\n";
    for (std::int32_t x = 0; x < op.rows(); ++x)
        op.for_each_entry(x, [&](std::int32_t y, double w) {
            entries << x << ',' << y << ',' << dw::detail::fmt_double(w) << '\n';
        });
    std::ofstream kills(dir / "kill.csv");
    if (!kills) throw std::runtime_error("cannot write kill.csv");
    kills << "row_id,kill_mass,kind\n";
    for (std::int32_t x = 0; x < op.rows(); ++x) {
        const char* kind = op.kind(x) == dw::RowKind::Interior
                               ? "interior"
                               : (op.kind(x) == dw::RowKind::Exploded ? "exploded" : "window_kill");
        const double mass = op.kind(x) == dw::RowKind::Interior ? op.kill_mass(x) : 1.0;
        kills << x << ',' << dw::detail::fmt_double(mass) << ',' << kind << '\n';
    }
}

int cmd_partition(const GlobalOpts& g) {
    const dw::StudyConfig cfg = load_config(g);
    auto part = partition_from(cfg);
    fs::create_directories(g.out_dir);
    dump_cells(*part, fs::path(g.out_dir) / "cells.csv");
    dw::Json s;
    s["cells"] = part->size();
    s["mesh"] = part->mesh();
    s["total_volume"] = part->total_volume();
    std::cout << s.dump(2) << "\n";
    return 0;
}

int cmd_graph(const GlobalOpts& g) {
    const dw::StudyConfig cfg = load_config(g);
    auto part = partition_from(cfg);
    if (cfg.rhos.empty()) throw dw::ConfigError("config: graph command needs a rho value");
    const dw::ExecContext ctx{cfg.threads};
    const auto graph = dw::build_graph(part, cfg.rhos.front(), ctx);
    if (!graph.third_bound_ok())
        std::cerr << "warning: mesh >= rho/3; quantitative error bounds do not apply\n";
    fs::create_directories(g.out_dir);
    if (g.dump_graph) dump_graph_csv(graph, fs::path(g.out_dir) / "graph.csv");
    dw::Json s;
    s["cells"] = graph.size();
    s["rho"] = graph.rho();
    s["mesh"] = part->mesh();
    s["edges"] = graph.edge_count();
    s["max_degree"] = graph.max_degree();
    s["mesh_below_rho_third"] = graph.third_bound_ok();
    std::cout << s.dump(2) << "\n";
    return 0;
}

int cmd_run(const GlobalOpts& g) {
    dw::StudyConfig cfg = load_config(g);
    if (cfg.rhos.size() != 1)
        throw dw::ConfigError("config: run command needs exactly one rho value");
    const dw::ExecContext ctx{cfg.threads};
    const auto t0 = std::chrono::steady_clock::now();
    const dw::StudyReport rep = dw::run_study(cfg, ctx);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    dw::emit_report(rep, g.out_dir, timestamp_now());
    if (g.dump_operator) {
        auto part = dw::build_partition_for(cfg, cfg.rhos.front());
        auto graph = std::make_shared<const dw::ProximityGraph>(
            dw::build_graph(part, cfg.rhos.front(), ctx));
        const double delta = dw::scale(cfg.rhos.front(), part->manifold().dim()).delta;
        const auto op =
            dw::build_operator(graph, cfg.b, cfg.V.shifted(cfg.v0), delta, delta, ctx);
        dump_operator_csv(op, g.out_dir);
    }
    const dw::StudyRecord& r = rep.records.front();
    dw::Json s;
    s["rho"] = r.rho;
    s["mesh"] = r.mesh;
    s["cells"] = r.cells;
    s["steps"] = r.steps;
    s["delta"] = r.delta;
    s["sup_error"] = dw::detail::finite_or_null(r.sup_error);
    s["lp_error"] = dw::detail::finite_or_null(r.lp_error);
    s["window_kill_mass"] = r.window_kill_mass;
    s["runtime_ms"] = ms;
    std::cout << s.dump(2) << "\n";
    return 0;
}

int cmd_study(const GlobalOpts& g) {
    const dw::StudyConfig cfg = load_config(g);
    const dw::ExecContext ctx{cfg.threads};
    const dw::StudyReport rep = dw::run_study(cfg, ctx);
    dw::emit_report(rep, g.out_dir, timestamp_now());
    std::cout << dw::report_to_json(rep, /*include_meta=*/false).dump(2) << "\n";
    if (g.check) {
        const dw::CheckOutcome outcome = dw::evaluate_checks(rep, cfg.check);
        if (!outcome.passed) {
            for (const std::string& f : outcome.failures) std::cerr << "check failed: " << f << "\n";
            return 3;
        }
    }
    return 0;
}

int cmd_oracle(const GlobalOpts& g) {
    const dw::StudyConfig cfg = load_config(g);
    if (cfg.eval_points.empty()) throw dw::ConfigError("config: oracle command needs eval_points");
    const dw::ExecContext ctx{cfg.threads};
    dw::Json results = dw::Json::array();
    for (const dw::Point& x : cfg.eval_points) {
        dw::McEstimate est;
        if (cfg.ref_kind == dw::ReferenceKind::FeynmanKacMc) {
            est = dw::detail::make_mc_oracle(cfg).estimate(x, ctx);
        } else {
            const auto oracle = dw::detail::make_field_oracle(cfg);
            if (!oracle) throw dw::ConfigError("config: oracle command needs a reference");
            est = oracle->estimate(x, ctx);
        }
        dw::Json r;
        std::vector<double> xs;
        for (int ax = 0; ax < cfg.manifold.dim(); ++ax) xs.push_back(x[ax]);
        r["x"] = xs;
        r["mean"] = est.mean;
        r["se"] = est.se;
        results.push_back(std::move(r));
    }
    dw::Json s;
    s["results"] = std::move(results);
    if (cfg.ref_kind == dw::ReferenceKind::FeynmanKacMc) {
        s["paths"] = cfg.mc_paths;
        s["h"] = cfg.t / 512.0;
    }
    std::cout << s.dump(2) << "\n";
    return 0;
}

int cmd_audit(const GlobalOpts& g) {
    const dw::StudyConfig cfg = load_config(g);
    dw::AxisBox window{};
    if (cfg.manifold.kind() == dw::ManifoldKind::Euclidean) {
        if (!cfg.window) throw dw::ConfigError("config: audit needs a window");
        window = *cfg.window;
    } else if (cfg.manifold.kind() == dw::ManifoldKind::Model2D) {
        const std::array<double, 2> lo{1e-3, 0.0}, hi{cfg.r_max, dw::kTwoPi};
        window = dw::AxisBox::make(lo, hi);
    } else {
        throw dw::ConfigError("audit: circle geometries are compact; nothing to audit");
    }
    const dw::AuditReport rep = dw::audit_conditions(cfg.manifold, cfg.b, cfg.V, cfg.audit_p,
                                                     cfg.kappa, cfg.audit_samples, window);
    dw::Json s;
    s["lambda_hat"] = rep.lambda_hat;
    s["c_drift_hat"] = rep.c_drift_hat;
    s["c_radial_hat"] = rep.c_radial_hat;
    s["lambda_at_boundary"] = rep.lambda_at_boundary;
    s["c_drift_at_boundary"] = rep.c_drift_at_boundary;
    s["euclid_drift_margin"] = rep.euclid_drift_margin;
    s["euclid_cond_a_margin"] = rep.euclid_cond_a_margin;
    s["samples_used"] = rep.samples_used;
    s["samples_skipped"] = rep.samples_skipped;
    s["note"] = "sampled inequality margins; numerical evidence only, not a proof";
    std::cout << s.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph-discretized semigroup approximation studies"};
    app.require_subcommand(1);
    app.fallthrough(true);  // accept global flags after the subcommand

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config path")->required();
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--threads", g.threads, "override the config thread count");
    app.add_flag("--dump-graph", g.dump_graph, "write adjacency CSV (graph command)");
    app.add_flag("--dump-operator", g.dump_operator, "write operator CSV (run command)");

    auto* sub_partition = app.add_subcommand("partition", "build a partition and dump its cells");
    auto* sub_graph = app.add_subcommand("graph", "build the proximity graph");
    auto* sub_run = app.add_subcommand("run", "single-rho semigroup run");
    auto* sub_study = app.add_subcommand("study", "rho sweep with error reports");
    sub_study->add_flag("--check", g.check, "apply the config check thresholds (exit 3 on failure)");
    auto* sub_oracle = app.add_subcommand("oracle", "evaluate a reference oracle");
    auto* sub_audit = app.add_subcommand("audit", "sample the generator conditions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (sub_partition->parsed()) return cmd_partition(g);
        if (sub_graph->parsed()) return cmd_graph(g);
        if (sub_run->parsed()) return cmd_run(g);
        if (sub_study->parsed()) return cmd_study(g);
        if (sub_oracle->parsed()) return cmd_oracle(g);
        if (sub_audit->parsed()) return cmd_audit(g);
        std::cerr << "unknown subcommand\n";
        return 1;
    } catch (const dw::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
