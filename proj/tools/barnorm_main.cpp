// barnorm: command-line surface for switched-system stability analysis.
// Subcommands: validate, simulate, extremal, rho, norm, dual, cycles, omega,
// diag-uniqueness, diag-convexity, diag-supgap, reproduce.
// Exit codes: 0 success, 1 validation/convergence failure, 2 input error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "barnorm/cycles.hpp"
#include "barnorm/diagnostics.hpp"
#include "barnorm/extremal.hpp"
#include "barnorm/flow.hpp"
#include "barnorm/io.hpp"
#include "barnorm/model.hpp"
#include "barnorm/norm_field.hpp"
#include "barnorm/rho.hpp"
#include "barnorm/systems.hpp"

namespace fs = std::filesystem;
using namespace barnorm;

namespace {

constexpr const char* kVersion = "barnorm 0.1.0";

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 20240901ULL;
    int workers = 1;
    std::string out_dir = "barnorm-out";
    double tol = -1.0;  // per-command principal tolerance override
    std::string system_spec;  // file path or bundled name
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config_path, "JSON config file; flags override its entries");
    cmd->add_option("--seed", c.seed, "seed for every stochastic choice");
    cmd->add_option("--workers", c.workers, "worker threads for node-parallel sweeps");
    cmd->add_option("--out", c.out_dir, "output directory");
    cmd->add_option("--tol", c.tol, "principal tolerance override for this command");
}

json load_config(const CommonOpts& c) {
    if (c.config_path.empty()) return json::object();
    std::ifstream in(c.config_path);
    if (!in) throw ParseError("cannot open config file: " + c.config_path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config file: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("config file: top level must be an object");
    return j;
}

SwitchedSystem resolve_system(const std::string& spec) {
    if (spec == "example1") return example1_system();
    if (spec == "example2") return example2_system();
    if (spec == "supgap") return supgap_system(solve_supgap_tangency().alpha);
    if (spec == "demopair") return demo_pair_system();
    return load_system(spec);
}

struct Manifest {
    std::string command;
    json config;
    std::vector<std::string> outputs;
};

void write_manifest(const fs::path& dir, const Manifest& m, const CommonOpts& c) {
    json j;
    j["command"] = m.command;
    j["version"] = kVersion;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["config"] = m.config;
    j["outputs"] = m.outputs;
    write_json((dir / "manifest.json").string(), j);
}

fs::path prepare_out(const CommonOpts& c) {
    fs::path dir(c.out_dir);
    fs::create_directories(dir);
    return dir;
}

SwitchingSignal parse_signal_arg(const std::string& arg) {
    // "dur:control,dur:control,..."
    SwitchingSignal sig;
    std::stringstream ss(arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        auto pos = tok.find(':');
        if (pos == std::string::npos) throw ParseError("field 'signal': expected dur:control segments");
        sig.segments.push_back({std::stod(tok.substr(0, pos)), std::stod(tok.substr(pos + 1))});
    }
    if (sig.segments.empty()) throw ParseError("field 'signal': empty");
    return sig;
}

Vec parse_vec_arg(const std::string& arg, int n) {
    std::stringstream ss(arg);
    std::string tok;
    std::vector<double> xs;
    while (std::getline(ss, tok, ',')) xs.push_back(std::stod(tok));
    if (static_cast<int>(xs.size()) != n)
        throw ParseError("field 'x0': expected " + std::to_string(n) + " comma-separated numbers");
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = xs[i];
    return v;
}

json validation_to_json(const ValidationReport& rep) {
    json j;
    j["hurwitz_vertices"] = rep.hurwitz_vertices;
    j["controllable_b"] = rep.controllable_b;
    j["controllable_c"] = rep.controllable_c;
    j["detB_value"] = rep.detB_value;
    j["irreducible"] = rep.irreducible.irreducible;
    j["irreducibility_conclusive"] = rep.irreducible.conclusive;
    j["algebra_dim"] = rep.irreducible.algebra_dim;
    j["u_grid"] = rep.u_grid;
    j["hull_abscissa_profile"] = rep.hull_abscissa_profile;
    j["delta_profile"] = rep.delta_profile;
    j["passed"] = rep.passed;
    return j;
}

json rho_to_json(const RhoEstimate& est) {
    return json{{"value", est.value},
                {"bracket", {est.lo, est.hi}},
                {"iterations", est.iterations},
                {"method_trace", est.method_trace}};
}

json uniqueness_to_json(const UniquenessReport& rep) {
    json pts = json::array();
    for (const Vec& p : rep.omega_points) pts.push_back(detail::vec_to_json(p));
    json j;
    j["omega_points"] = pts;
    j["connectivity"] = rep.connectivity == Connectivity::Connected ? "connected" : "disconnected";
    j["component_count"] = rep.component_count;
    j["epsilon"] = rep.epsilon;
    if (rep.lambda_bar) j["lambda_bar"] = *rep.lambda_bar;
    return j;
}

json audit_to_json(const ConvexityAudit& audit) {
    json segs = json::array();
    for (const auto& s : audit.segments)
        segs.push_back({{"a", detail::vec_to_json(s.a)},
                        {"b", detail::vec_to_json(s.b)},
                        {"angle", s.angle},
                        {"midpoint_value", s.midpoint_value}});
    return json{{"segments", segs},
                {"flagged_pairs", audit.flagged_pairs},
                {"flat_tol", audit.flat_tol},
                {"seg_tol", audit.seg_tol}};
}

NormField build_field(const SwitchedSystem& sys, const json& cfg, const CommonOpts& c, double* rho_out = nullptr) {
    double rho_tol = cfg.value("rho_tol", 1e-3);
    HorizonPolicy pol;
    pol.workers = c.workers;
    RhoEstimate est = estimate_rho(sys, rho_tol, pol, c.seed);
    if (rho_out) *rho_out = est.value;
    SwitchedSystem shifted = spectral_shift(sys, est.value);
    NormIterationOptions nopt;
    nopt.grid_nodes = cfg.value("grid_nodes", 0);
    nopt.tol = cfg.value("field_tol", 1e-10);
    nopt.max_iters = cfg.value("max_iters", 2000);
    nopt.workers = c.workers;
    nopt.convexify_pass = cfg.value("convexify", false);
    return approximate_barabanov_norm(shifted, nopt);
}

// ---------------------------------------------------------------------------

int cmd_validate(const CommonOpts& c) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = resolve_system(c.system_spec);
    json out;
    bool ok = true;
    if (sys.pair) {
        ValidationReport rep = validate_pair(sys.pair->A, sys.pair->b, sys.pair->c,
                                             cfg.value("u_grid_size", 101));
        out = validation_to_json(rep);
        ok = rep.passed;
    } else {
        IrreducibilityReport ir = irreducibility_check(sys);
        out["irreducible"] = ir.irreducible;
        out["irreducibility_conclusive"] = ir.conclusive;
        out["algebra_dim"] = ir.algebra_dim;
        json absc = json::array();
        for (const Mat& g : sys.generators) absc.push_back(spectral_abscissa(g));
        out["vertex_abscissas"] = absc;
        ok = !(ir.conclusive && !ir.irreducible);
    }
    write_json((dir / "validation.json").string(), out);
    write_manifest(dir, {"validate", cfg, {"validation.json"}}, c);
    std::cout << (ok ? "validation passed" : "validation FAILED") << "\n";
    return ok ? 0 : 1;
}

int cmd_simulate(const CommonOpts& c, const std::string& x0_arg, const std::string& signal_arg,
                 double sample_step) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = resolve_system(c.system_spec);
    Vec x0 = parse_vec_arg(x0_arg, sys.n);
    SwitchingSignal sig = parse_signal_arg(signal_arg);
    Trajectory traj = propagate(sys, sig, x0, sample_step);
    write_text((dir / "trajectory.csv").string(), trajectory_to_csv(traj));
    write_manifest(dir, {"simulate", cfg, {"trajectory.csv"}}, c);
    return 0;
}

int cmd_extremal(const CommonOpts& c, const std::string& x0_arg, double horizon) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = resolve_system(c.system_spec);
    if (!sys.pair) throw ParseError("extremal: the coupled flow requires a pair system");
    NormField field = build_field(sys, cfg, c);
    Vec dir0 = normalized(parse_vec_arg(x0_arg, 3));
    Vec x0 = dir0 * (1.0 / field.query(dir0));
    NormField dual = dual_field(field, c.workers);
    ExtremalPath path = extremal_run_projected(*sys.pair, field, x0, horizon, &dual);
    write_text((dir / "extremal.csv").string(), extremal_to_csv(*sys.pair, path));
    write_json((dir / "extremal_events.json").string(), extremal_events_to_json(path));
    write_manifest(dir, {"extremal", cfg, {"extremal.csv", "extremal_events.json"}}, c);
    return 0;
}

int cmd_rho(const CommonOpts& c) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = resolve_system(c.system_spec);
    double tol = c.tol > 0 ? c.tol : cfg.value("rho_tol", 1e-3);
    HorizonPolicy pol;
    pol.workers = c.workers;
    RhoEstimate est = estimate_rho(sys, tol, pol, c.seed);
    write_json((dir / "rho.json").string(), rho_to_json(est));
    write_manifest(dir, {"rho", cfg, {"rho.json"}}, c);
    std::cout << "rho = " << fmt17(est.value) << "  bracket [" << fmt17(est.lo) << ", " << fmt17(est.hi)
              << "]\n";
    return 0;
}

int cmd_norm(const CommonOpts& c) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = resolve_system(c.system_spec);
    double rho = 0.0;
    NormField field = build_field(sys, cfg, c, &rho);
    write_json((dir / "field.json").string(), field_to_json(field));
    std::vector<std::string> outputs = {"field.json"};
    if (sys.n == 3) {
        write_text((dir / "field.obj").string(), field_to_obj(field));
        outputs.push_back("field.obj");
    }
    json extra = cfg;
    extra["estimated_rho"] = rho;
    write_manifest(dir, {"norm", extra, outputs}, c);
    std::cout << "field residual " << fmt17(field.residual()) << " after " << field.iterations()
              << " iterations (rho shift " << fmt17(rho) << ")\n";
    return 0;
}

int cmd_dual(const CommonOpts& c, const std::string& field_path) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    std::ifstream in(field_path);
    if (!in) throw ParseError("cannot open field file: " + field_path);
    json j;
    in >> j;
    NormField field = field_from_json(j);
    NormField dual = dual_field(field, c.workers);
    write_json((dir / "dual_field.json").string(), field_to_json(dual));
    write_manifest(dir, {"dual", cfg, {"dual_field.json"}}, c);
    return 0;
}

int cmd_omega(const CommonOpts& c, const std::string& x0_arg, const std::string& signal_arg, double horizon) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = resolve_system(c.system_spec);
    Vec x0 = parse_vec_arg(x0_arg, sys.n);
    SwitchingSignal sig;
    if (!signal_arg.empty()) {
        sig = parse_signal_arg(signal_arg);
    } else {
        sig.segments.push_back({horizon, 0.0});
    }
    // extend the signal to cover the horizon by repetition
    double total = sig.total_duration();
    SwitchingSignal rep = sig;
    while (total < horizon) {
        for (const auto& s : sig.segments) rep.segments.push_back(s);
        total += sig.total_duration();
    }
    FlowEvaluator eval(sys, rep, x0);
    Section section = build_section(sys, x0, cfg.value("patch_radius", 0.5));
    OmegaReport omega = omega_estimate(sys, eval, horizon, section);
    json j;
    j["kind"] = omega.kind == OmegaKind::FixedPointZero ? "fixed-point-zero"
                : omega.kind == OmegaKind::Periodic     ? "periodic"
                : omega.kind == OmegaKind::FamilyBand   ? "family-band"
                                                        : "unresolved";
    if (omega.period_estimate) j["period_estimate"] = *omega.period_estimate;
    j["residual"] = omega.residual;
    j["crossings_monotone"] = omega.crossings_monotone;
    json pts = json::array();
    for (const Vec& p : omega.representative_points) pts.push_back(detail::vec_to_json(p));
    j["representative_points"] = pts;
    write_json((dir / "omega.json").string(), j);
    write_manifest(dir, {"omega", cfg, {"omega.json"}}, c);
    return 0;
}

int cmd_diag_uniqueness(const CommonOpts& c, int starts, double horizon) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = resolve_system(c.system_spec);
    NormField field = build_field(sys, cfg, c);
    Rng rng(c.seed);
    UniquenessReport rep = uniqueness_diagnostic(sys, field, starts, horizon, rng);
    write_json((dir / "uniqueness.json").string(), uniqueness_to_json(rep));
    write_manifest(dir, {"diag-uniqueness", cfg, {"uniqueness.json"}}, c);
    std::cout << "omega connectivity: "
              << (rep.connectivity == Connectivity::Connected ? "connected" : "disconnected") << " ("
              << rep.component_count << " components)\n";
    return 0;
}

int cmd_diag_convexity(const CommonOpts& c, int samples) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = resolve_system(c.system_spec);
    NormField field = build_field(sys, cfg, c);
    Rng rng(c.seed);
    ConvexityAudit audit = convexity_audit(field, samples, rng);
    write_json((dir / "convexity.json").string(), audit_to_json(audit));
    write_manifest(dir, {"diag-convexity", cfg, {"convexity.json"}}, c);
    std::cout << audit.segments.size() << " candidate flat segments (" << audit.flagged_pairs
              << " flagged pairs)\n";
    return 0;
}

int cmd_diag_supgap(const CommonOpts& c, const std::string& points_arg, double horizon, int restarts) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = resolve_system(c.system_spec);
    NormField field = build_field(sys, cfg, c);
    Rng rng(c.seed);
    json reports = json::array();
    std::stringstream ss(points_arg);
    std::string tok;
    bool any_positive = false;
    while (std::getline(ss, tok, ';')) {
        Vec y = parse_vec_arg(tok, sys.n);
        SupGapReport rep = sup_vs_max_gap(sys, field, y, horizon, restarts, rng);
        any_positive = any_positive || rep.positive_beyond_tolerance;
        reports.push_back({{"point", detail::vec_to_json(y)},
                           {"field_value", rep.field_value},
                           {"extremal_best", rep.extremal_best},
                           {"gap", rep.gap},
                           {"grid_error", rep.grid_error},
                           {"positive_beyond_tolerance", rep.positive_beyond_tolerance}});
    }
    write_json((dir / "supgap.json").string(), json{{"points", reports}});
    write_manifest(dir, {"diag-supgap", cfg, {"supgap.json"}}, c);
    std::cout << (any_positive ? "gap witnesses found" : "no gap beyond tolerance") << "\n";
    return 0;
}

int cmd_cycles(const CommonOpts& c, double scale, bool tune, int starts, double horizon) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    Mat A = demo_pair_A();
    Vec b = demo_pair_b();
    Vec c_dir = demo_pair_c_direction();
    if (!c.system_spec.empty() && c.system_spec != "demopair") {
        SwitchedSystem sys = resolve_system(c.system_spec);
        if (!sys.pair) throw ParseError("cycles: requires a pair system");
        A = sys.pair->A;
        b = sys.pair->b;
        c_dir = sys.pair->c;
        if (scale <= 0.0 && !tune) scale = 1.0;
    }
    double rho_tol = c.tol > 0 ? c.tol : cfg.value("rho_tol", 1e-3);

    json report;
    if (tune) {
        HorizonPolicy pol;
        pol.workers = c.workers;
        try {
            PairTuning tuning = tune_pair_scale(A, b, c_dir, cfg.value("scale_lo", 0.05),
                                                cfg.value("scale_hi", 0.5), rho_tol, true, pol, c.seed);
            scale = tuning.scale;
            report["tuned_scale"] = tuning.scale;
            report["rho_at_tuned_scale"] = rho_to_json(tuning.rho);
            if (tuning.cycle_multiplier_error)
                report["cycle_multiplier_error"] = *tuning.cycle_multiplier_error;
        } catch (const TuningError& e) {
            json hist = json::array();
            for (const auto& [s, r] : e.history) hist.push_back({{"scale", s}, {"rho", r}});
            write_json((dir / "cycles.json").string(),
                       json{{"error", e.what()}, {"rho_bracket_history", hist}});
            write_manifest(dir, {"cycles", cfg, {"cycles.json"}}, c);
            std::cerr << "tuning failed: " << e.what() << "\n";
            return 1;
        }
    } else if (scale <= 0.0) {
        scale = kDemoPairScaleReference;
    }

    BarabanovPairData pair{A, b, scale * c_dir};
    SwitchedSystem sys = SwitchedSystem::from_pair(pair.A, pair.b, pair.c);
    ValidationReport val = validate_pair(pair.A, pair.b, pair.c);
    report["validation"] = validation_to_json(val);
    if (!val.passed) {
        write_json((dir / "cycles.json").string(), report);
        write_manifest(dir, {"cycles", cfg, {"cycles.json"}}, c);
        std::cerr << "pair validation failed\n";
        return 1;
    }
    NormField field = build_field(sys, cfg, c);
    SurveyResult survey = multistart_cycle_survey(pair, field, starts, horizon);
    report["catalog"] = catalog_to_json(survey.catalog);
    json fams = json::array();
    for (const auto& f : survey.families) fams.push_back(family_to_json(f));
    report["families"] = fams;
    report["verdict"] = survey.verdict;
    report["log"] = survey.log;
    report["scale"] = scale;
    write_json((dir / "cycles.json").string(), report);
    write_manifest(dir, {"cycles", cfg, {"cycles.json"}}, c);
    std::cout << "verdict: " << survey.verdict << " with " << survey.catalog.size() << " cycle(s)\n";
    return survey.catalog.empty() && survey.families.empty() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// reproduce bundles

int cmd_reproduce_example1(const CommonOpts& c) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    SwitchedSystem sys = example1_system();
    Rng rng(c.seed);
    json report;
    bool ok = true;

    HorizonPolicy pol;
    pol.workers = c.workers;
    RhoEstimate est = estimate_rho(sys, cfg.value("rho_tol", 5e-3), pol, c.seed);
    report["rho"] = rho_to_json(est);
    bool rho_ok = std::abs(est.value) <= 1e-2;
    report["checks"]["rho_within_1e-2"] = rho_ok;
    ok = ok && rho_ok;

    // Lyapunov monotonicity of |x| along random signals
    double worst_drift = 0.0;
    for (int trial = 0; trial < cfg.value("signals", 50); ++trial) {
        SwitchingSignal sig;
        double total = 0.0;
        while (total < 25.0) {
            double d = uniform(rng, 0.1, 1.5);
            sig.segments.push_back({d, static_cast<double>(rng() % 2)});
            total += d;
        }
        Vec x0 = random_unit_vec(rng, 3);
        Trajectory traj = propagate(sys, sig, x0, 0.1);
        double prev = norm2(traj.states[0]);
        for (const Vec& x : traj.states) {
            double n = norm2(x);
            worst_drift = std::max(worst_drift, n - prev);
            prev = std::min(prev, n);
        }
    }
    report["checks"]["norm_nonincreasing_drift"] = worst_drift;
    bool drift_ok = worst_drift <= 1e-8;
    report["checks"]["norm_nonincreasing"] = drift_ok;
    ok = ok && drift_ok;

    NormIterationOptions nopt;
    nopt.grid_nodes = cfg.value("grid_nodes", 10242);
    nopt.tol = cfg.value("field_tol", 5e-5);
    nopt.max_iters = cfg.value("max_iters", 600);
    nopt.workers = c.workers;
    NormField field = approximate_barabanov_norm(spectral_shift(sys, est.value), nopt);
    write_json((dir / "field.json").string(), field_to_json(field));

    // extremal runs approach the two invariant circles
    double worst_min = 0.0;
    for (const Vec& dir0 : spread_directions(3, cfg.value("extremal_starts", 8))) {
        GreedyRun run = field_extremal_run(sys, field, dir0, cfg.value("extremal_horizon", 200.0));
        double best = 1e300;
        for (const Vec& x : run.states) best = std::min(best, std::min(std::abs(x[1]), std::abs(x[2])));
        worst_min = std::max(worst_min, best);
    }
    report["checks"]["min_x2_x3_worst"] = worst_min;
    bool circ_ok = worst_min < 1e-2;
    report["checks"]["extremal_reaches_circles"] = circ_ok;
    ok = ok && circ_ok;

    UniquenessReport uniq = uniqueness_diagnostic(sys, field, cfg.value("uniq_starts", 10),
                                                  cfg.value("uniq_horizon", 200.0), rng);
    report["uniqueness"] = uniqueness_to_json(uniq);
    bool conn_ok = uniq.connectivity == Connectivity::Connected;
    report["checks"]["omega_connected"] = conn_ok;
    ok = ok && conn_ok;

    report["passed"] = ok;
    write_json((dir / "report.json").string(), report);
    write_manifest(dir, {"reproduce example1", cfg, {"report.json", "field.json"}}, c);
    std::cout << (ok ? "example1 checks passed" : "example1 checks FAILED") << "\n";
    return ok ? 0 : 1;
}

int cmd_reproduce_example2(const CommonOpts& c) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    double alpha = cfg.value("alpha", 2.0);
    SwitchedSystem sys = example2_system(alpha);
    Rng rng(c.seed);
    json report;
    bool ok = true;

    NormIterationOptions nopt;
    nopt.grid_nodes = cfg.value("grid_nodes", 2048);
    nopt.tol = cfg.value("field_tol", 1e-12);
    nopt.max_iters = cfg.value("max_iters", 4000);
    nopt.workers = c.workers;
    NormField field = approximate_barabanov_norm(sys, nopt);
    write_json((dir / "field.json").string(), field_to_json(field));

    auto v1 = [](const Vec& x) { return std::max(std::abs(x[0]), std::abs(x[1])); };
    double worst = 0.0;
    for (int i = 0; i < field.node_count(); ++i)
        worst = std::max(worst, std::abs(field.value_at(i) - v1(field.node(i))));
    double tol_v1 = 2.0 * field.grid_interp_error();
    report["checks"]["field_vs_v1_worst"] = worst;
    report["checks"]["field_vs_v1_tol"] = tol_v1;
    bool v1_ok = worst <= tol_v1;
    report["checks"]["field_matches_v1"] = v1_ok;
    ok = ok && v1_ok;

    // discrete invariance checks for v_beta over the first two generators
    double h = kBellmanStepCap / sys.max_generator_norm();
    json beta_checks = json::array();
    for (double beta : {0.5, 1.0, 2.0}) {
        auto vb = [beta](const Vec& x) { return std::max(std::abs(x[0]), beta * std::abs(x[1])); };
        Mat E0 = expm(sys.generators[0], h), E1 = expm(sys.generators[1], h);
        double worst_increase = -1e300, worst_extremal = -1e300;
        for (int i = 0; i < field.node_count(); ++i) {
            const Vec& x = field.node(i);
            double v = vb(x);
            double v0 = vb(E0 * x), v1b = vb(E1 * x);
            worst_increase = std::max(worst_increase, std::max(v0, v1b) - v);
            worst_extremal = std::max(worst_extremal, v - std::max(v0, v1b));
        }
        bool pass = worst_increase <= 1e-9 && worst_extremal <= 1e-9;
        beta_checks.push_back({{"beta", beta},
                               {"max_increase", worst_increase},
                               {"max_extremal_deficit", worst_extremal},
                               {"pass", pass}});
        ok = ok && pass;
    }
    report["checks"]["v_beta"] = beta_checks;

    UniquenessReport uniq = uniqueness_diagnostic(sys, field, cfg.value("uniq_starts", 12),
                                                  cfg.value("uniq_horizon", 60.0), rng);
    report["uniqueness"] = uniqueness_to_json(uniq);
    bool disc_ok = uniq.connectivity == Connectivity::Disconnected && uniq.component_count == 2;
    // the four limit points come in antipodal pairs, which the graph glues:
    // (1,0)~(-1,0) and (0,1)~(0,-1) leave two components
    report["checks"]["omega_four_points_disconnected"] = disc_ok;
    ok = ok && disc_ok;

    report["passed"] = ok;
    write_json((dir / "report.json").string(), report);
    write_manifest(dir, {"reproduce example2", cfg, {"report.json", "field.json"}}, c);
    std::cout << (ok ? "example2 checks passed" : "example2 checks FAILED") << "\n";
    return ok ? 0 : 1;
}

int cmd_reproduce_supgap(const CommonOpts& c) {
    json cfg = load_config(c);
    fs::path dir = prepare_out(c);
    Rng rng(c.seed);
    json report;
    bool ok = true;

    TangencySolve sol = solve_supgap_tangency();
    report["alpha"] = sol.alpha;
    report["t_star"] = sol.t_star;
    report["x2_at_touch"] = sol.x2_at_touch;
    bool alpha_ok = std::abs(sol.alpha - kSupgapAlphaReference) <= 5e-3;
    report["checks"]["alpha_near_reference"] = alpha_ok;
    ok = ok && alpha_ok;

    SwitchedSystem sys = supgap_system(sol.alpha);
    HorizonPolicy pol;
    pol.workers = c.workers;
    double rho_tol = c.tol > 0 ? c.tol : cfg.value("rho_tol", 1e-2);
    RhoEstimate est = estimate_rho(sys, rho_tol, pol, c.seed);
    report["rho"] = rho_to_json(est);
    bool rho_ok = std::abs(est.value) <= rho_tol;
    report["checks"]["rho_within_tol"] = rho_ok;
    ok = ok && rho_ok;

    NormIterationOptions nopt;
    nopt.grid_nodes = cfg.value("grid_nodes", 2048);
    nopt.tol = cfg.value("field_tol", 1e-11);
    nopt.max_iters = cfg.value("max_iters", 6000);
    nopt.workers = c.workers;
    NormField field = approximate_barabanov_norm(sys, nopt);
    write_json((dir / "field.json").string(), field_to_json(field));

    ConvexityAudit audit = convexity_audit(field, cfg.value("convexity_samples", 4000), rng);
    report["convexity"] = audit_to_json(audit);
    bool flat_ok = !audit.segments.empty();
    report["checks"]["flat_segments_found"] = flat_ok;
    ok = ok && flat_ok;

    // gap at points of the glued curve V: samples along the B-arc
    json gap_reports = json::array();
    int positive = 0;
    Mat B = supgap_B(sol.alpha);
    for (double frac : {0.25, 0.5, 0.75, 0.95}) {
        Vec y = expm(B, frac * sol.t_star) * Vec{-1.0, 0.0};
        SupGapReport rep = sup_vs_max_gap(sys, field, y, cfg.value("gap_horizon", 120.0),
                                          cfg.value("gap_restarts", 4), rng);
        if (rep.positive_beyond_tolerance) ++positive;
        gap_reports.push_back({{"point", detail::vec_to_json(y)},
                               {"field_value", rep.field_value},
                               {"extremal_best", rep.extremal_best},
                               {"gap", rep.gap},
                               {"grid_error", rep.grid_error},
                               {"positive_beyond_tolerance", rep.positive_beyond_tolerance}});
    }
    report["gap_points"] = gap_reports;
    bool gap_ok = positive >= 3;
    report["checks"]["gap_positive_at_3_points"] = gap_ok;
    ok = ok && gap_ok;

    report["passed"] = ok;
    write_json((dir / "report.json").string(), report);
    write_manifest(dir, {"reproduce supgap", cfg, {"report.json", "field.json"}}, c);
    std::cout << (ok ? "supgap checks passed" : "supgap checks FAILED") << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kVersion) + " - Barabanov norm and extremal-flow toolkit"};
    app.require_subcommand(1);

    CommonOpts c;
    std::string x0_arg = "1,0,0", signal_arg, field_path, points_arg = "1,0";
    double horizon = 200.0, sample_step = 0.05, scale = -1.0;
    int starts = 12, samples = 4000, restarts = 4;
    bool tune = false;

    auto* validate = app.add_subcommand("validate", "structural checks for a system definition");
    validate->add_option("system", c.system_spec, "system file or bundled name")->required();
    add_common(validate, c);

    auto* simulate = app.add_subcommand("simulate", "exact propagation under a piecewise-constant signal");
    simulate->add_option("system", c.system_spec)->required();
    simulate->add_option("--x0", x0_arg, "initial state, comma separated");
    simulate->add_option("--signal", signal_arg, "dur:control[,dur:control...]")->required();
    simulate->add_option("--step", sample_step, "sample step");
    add_common(simulate, c);

    auto* extremal = app.add_subcommand("extremal", "coupled extremal flow for a pair system");
    extremal->add_option("system", c.system_spec)->required();
    extremal->add_option("--x0", x0_arg);
    extremal->add_option("--horizon", horizon);
    add_common(extremal, c);

    auto* rho = app.add_subcommand("rho", "largest Lyapunov exponent estimate");
    rho->add_option("system", c.system_spec)->required();
    add_common(rho, c);

    auto* norm = app.add_subcommand("norm", "Barabanov norm field construction");
    norm->add_option("system", c.system_spec)->required();
    add_common(norm, c);

    auto* dual = app.add_subcommand("dual", "polar field of a stored norm field");
    dual->add_option("field", field_path, "field.json produced by 'norm'")->required();
    add_common(dual, c);

    auto* cycles = app.add_subcommand("cycles", "tuning loop and periodic-orbit survey for a pair");
    cycles->add_option("system", c.system_spec, "pair system (default: built-in demo pair)");
    cycles->add_option("--scale", scale, "c-scale (skips tuning)");
    cycles->add_flag("--tune", tune, "run the c-scaling tuning loop");
    cycles->add_option("--starts", starts);
    cycles->add_option("--horizon", horizon);
    add_common(cycles, c);

    auto* omega = app.add_subcommand("omega", "section crossings and omega-limit classification");
    omega->add_option("system", c.system_spec)->required();
    omega->add_option("--x0", x0_arg);
    omega->add_option("--signal", signal_arg, "repeated to cover the horizon (default: vertex 0)");
    omega->add_option("--horizon", horizon);
    add_common(omega, c);

    auto* diag_u = app.add_subcommand("diag-uniqueness", "omega-connectivity uniqueness diagnostic");
    diag_u->add_option("system", c.system_spec)->required();
    diag_u->add_option("--starts", starts);
    diag_u->add_option("--horizon", horizon);
    add_common(diag_u, c);

    auto* diag_c = app.add_subcommand("diag-convexity", "strict-convexity audit of the norm field");
    diag_c->add_option("system", c.system_spec)->required();
    diag_c->add_option("--samples", samples);
    add_common(diag_c, c);

    auto* diag_s = app.add_subcommand("diag-supgap", "sup-vs-max gap probe at chosen points");
    diag_s->add_option("system", c.system_spec)->required();
    diag_s->add_option("--points", points_arg, "semicolon-separated points");
    diag_s->add_option("--horizon", horizon);
    diag_s->add_option("--restarts", restarts);
    add_common(diag_s, c);

    auto* reproduce = app.add_subcommand("reproduce", "bundled reference reproductions");
    std::string bundle;
    reproduce->add_option("bundle", bundle, "example1 | example2 | supgap")->required();
    add_common(reproduce, c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(c);
        if (simulate->parsed()) return cmd_simulate(c, x0_arg, signal_arg, sample_step);
        if (extremal->parsed()) return cmd_extremal(c, x0_arg, horizon);
        if (rho->parsed()) return cmd_rho(c);
        if (norm->parsed()) return cmd_norm(c);
        if (dual->parsed()) return cmd_dual(c, field_path);
        if (cycles->parsed()) return cmd_cycles(c, scale, tune, starts, horizon);
        if (omega->parsed()) return cmd_omega(c, x0_arg, signal_arg, horizon);
        if (diag_u->parsed()) return cmd_diag_uniqueness(c, starts, horizon);
        if (diag_c->parsed()) return cmd_diag_convexity(c, samples);
        if (diag_s->parsed()) return cmd_diag_supgap(c, points_arg, horizon, restarts);
        if (reproduce->parsed()) {
            if (bundle == "example1") return cmd_reproduce_example1(c);
            if (bundle == "example2") return cmd_reproduce_example2(c);
            if (bundle == "supgap") return cmd_reproduce_supgap(c);
            throw ParseError("reproduce: unknown bundle '" + bundle + "'");
        }
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
