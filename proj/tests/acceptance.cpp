// Acceptance suite: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "barnorm/cycles.hpp"
#include "barnorm/diagnostics.hpp"
#include "barnorm/flow.hpp"
#include "barnorm/io.hpp"
#include "barnorm/norm_field.hpp"
#include "barnorm/rho.hpp"
#include "barnorm/systems.hpp"

using namespace barnorm;
namespace fs = std::filesystem;

namespace {

int failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int criterion, bool pass, const std::string& name, const std::string& detail, double secs) {
    std::printf("%s criterion %d: %s (%s) [%.1fs]\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str(), secs);
    std::fflush(stdout);
    if (!pass) ++failures;
}

// criterion 1: singleton rho oracle --------------------------------------
void criterion1() {
    Timer timer;
    Rng rng(1001);
    double worst = 0.0;
    int tested = 0;
    std::string first_fail;
    auto test_one = [&](bool hurwitz) {
        Mat a = random_matrix(rng, 3, 1.0);
        double shift = spectral_abscissa(a) + (hurwitz ? uniform(rng, 0.05, 0.5) : -uniform(rng, 0.05, 0.5));
        a -= shift * Mat::identity(3);
        double want = spectral_abscissa(a);
        RhoEstimate est = estimate_rho(SwitchedSystem::from_generators({a}), 1e-3);
        double err = std::abs(est.value - want);
        worst = std::max(worst, err);
        ++tested;
        if (err > 1e-3 && first_fail.empty()) {
            std::ostringstream ss;
            ss << "matrix " << tested << " err " << err;
            first_fail = ss.str();
        }
    };
    for (int k = 0; k < 20; ++k) test_one(true);
    for (int k = 0; k < 20; ++k) test_one(false);
    std::ostringstream detail;
    detail << "worst |rho_hat - abscissa| = " << worst << " over " << tested << " matrices";
    if (!first_fail.empty()) detail << "; first failure: " << first_fail;
    report(1, worst <= 1e-3, "singleton rho oracle", detail.str(), timer.seconds());
}

// criterion 2: example 1 ---------------------------------------------------
void criterion2() {
    Timer timer;
    SwitchedSystem sys = example1_system();
    Rng rng(1002);
    std::ostringstream detail;
    bool ok = true;

    RhoEstimate est = estimate_rho(sys, 5e-3);
    detail << "rho=" << est.value;
    ok = ok && std::abs(est.value) <= 1e-2;

    double worst_drift = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        SwitchingSignal sig;
        double total = 0.0;
        while (total < 25.0) {
            double d = uniform(rng, 0.1, 1.5);
            sig.segments.push_back({d, static_cast<double>(rng() % 2)});
            total += d;
        }
        Vec x0 = random_unit_vec(rng, 3);
        Trajectory traj = propagate(sys, sig, x0, 0.1);
        double low = norm2(traj.states[0]);
        for (const Vec& x : traj.states) {
            worst_drift = std::max(worst_drift, norm2(x) - low);
            low = std::min(low, norm2(x));
        }
    }
    detail << ", drift=" << worst_drift;
    ok = ok && worst_drift <= 1e-8;

    NormIterationOptions nopt;
    nopt.grid_nodes = 10242;
    nopt.tol = 5e-5;
    nopt.max_iters = 600;
    nopt.workers = 2;
    NormField field = approximate_barabanov_norm(spectral_shift(sys, est.value), nopt);

    double worst_min = 0.0;
    for (const Vec& dir : spread_directions(3, 8)) {
        GreedyRun run = field_extremal_run(sys, field, dir, 200.0);
        double best = 1e300;
        for (const Vec& x : run.states) best = std::min(best, std::min(std::abs(x[1]), std::abs(x[2])));
        worst_min = std::max(worst_min, best);
    }
    detail << ", min(|x2|,|x3|) worst=" << worst_min;
    ok = ok && worst_min < 1e-2;

    UniquenessReport uniq = uniqueness_diagnostic(sys, field, 10, 200.0, rng);
    detail << ", omega components=" << uniq.component_count;
    ok = ok && uniq.connectivity == Connectivity::Connected;

    report(2, ok, "example 1 reproduction", detail.str(), timer.seconds());
}

// criterion 3: example 2 ---------------------------------------------------
void criterion3() {
    Timer timer;
    SwitchedSystem sys = example2_system(2.0);
    Rng rng(1003);
    std::ostringstream detail;
    bool ok = true;

    NormIterationOptions nopt;
    nopt.grid_nodes = 2048;
    nopt.tol = 1e-12;
    nopt.max_iters = 4000;
    NormField field = approximate_barabanov_norm(sys, nopt);
    double worst = 0.0;
    for (int i = 0; i < field.node_count(); ++i) {
        const Vec& x = field.node(i);
        worst = std::max(worst, std::abs(field.value_at(i) - std::max(std::abs(x[0]), std::abs(x[1]))));
    }
    double tol_v1 = 2.0 * field.grid_interp_error();
    detail << "field-v1 dev=" << worst << " (tol " << tol_v1 << ")";
    ok = ok && worst <= tol_v1;

    double h = kBellmanStepCap / sys.max_generator_norm();
    Mat E0 = expm(sys.generators[0], h), E1 = expm(sys.generators[1], h);
    double worst_inc = -1e300, worst_def = -1e300;
    for (double beta : {0.5, 1.0, 2.0}) {
        auto vb = [beta](const Vec& x) { return std::max(std::abs(x[0]), beta * std::abs(x[1])); };
        for (int i = 0; i < field.node_count(); ++i) {
            const Vec& x = field.node(i);
            double v = vb(x), v0 = vb(E0 * x), v1 = vb(E1 * x);
            worst_inc = std::max(worst_inc, std::max(v0, v1) - v);
            worst_def = std::max(worst_def, v - std::max(v0, v1));
        }
    }
    detail << ", v_beta increase=" << worst_inc << " deficit=" << worst_def;
    ok = ok && worst_inc <= 1e-9 && worst_def <= 1e-9;

    UniquenessReport uniq = uniqueness_diagnostic(sys, field, 12, 60.0, rng);
    detail << ", omega components=" << uniq.component_count;
    ok = ok && uniq.connectivity == Connectivity::Disconnected && uniq.component_count == 4;

    report(3, ok, "example 2 reproduction", detail.str(), timer.seconds());
}

// criterion 4: supgap ------------------------------------------------------
void criterion4() {
    Timer timer;
    Rng rng(1004);
    std::ostringstream detail;
    bool ok = true;

    TangencySolve sol = solve_supgap_tangency();
    detail << "alpha=" << sol.alpha;
    ok = ok && std::abs(sol.alpha - 0.8896) <= 5e-3;

    SwitchedSystem sys = supgap_system(sol.alpha);
    NormIterationOptions nopt;
    nopt.grid_nodes = 2048;
    nopt.tol = 1e-11;
    nopt.max_iters = 6000;
    NormField field = approximate_barabanov_norm(sys, nopt);

    int positive = 0;
    Mat B = supgap_B(sol.alpha);
    double min_gap = 1e300;
    for (double frac : {0.25, 0.5, 0.75, 0.95}) {
        Vec y = expm(B, frac * sol.t_star) * Vec{-1.0, 0.0};
        SupGapReport rep = sup_vs_max_gap(sys, field, y, 120.0, 4, rng);
        if (rep.positive_beyond_tolerance) {
            ++positive;
            min_gap = std::min(min_gap, rep.gap);
        }
    }
    detail << ", gap-positive points=" << positive << "/4";
    ok = ok && positive >= 3;

    ConvexityAudit audit = convexity_audit(field, 4000, rng);
    detail << ", flat segments=" << audit.segments.size();
    ok = ok && !audit.segments.empty();

    report(4, ok, "supremum-gap reproduction", detail.str(), timer.seconds());
}

// criterion 5: cycle property suite ----------------------------------------
void criterion5() {
    Timer timer;
    std::ostringstream detail;
    bool ok = true;
    try {
        HorizonPolicy pol;
        pol.workers = 2;
        PairTuning tuning =
            tune_pair_scale(demo_pair_A(), demo_pair_b(), demo_pair_c_direction(), 0.05, 0.5, 1e-3, true, pol);
        BarabanovPairData pair{demo_pair_A(), demo_pair_b(), tuning.scale * demo_pair_c_direction()};
        SwitchedSystem sys = SwitchedSystem::from_pair(pair.A, pair.b, pair.c);
        RhoEstimate est = estimate_rho(sys, 1e-3, pol);
        detail << "scale=" << tuning.scale << ", rho=" << est.value;
        if (tuning.cycle_multiplier_error) detail << ", |lambda-1|=" << *tuning.cycle_multiplier_error;
        ok = ok && std::abs(est.value) <= 1e-3;

        NormIterationOptions nopt;
        nopt.grid_nodes = 10242;
        nopt.tol = 1e-8;
        nopt.max_iters = 1500;
        nopt.workers = 2;
        NormField field = approximate_barabanov_norm(spectral_shift(sys, 0.0), nopt);
        SurveyResult survey = multistart_cycle_survey(pair, field, 8, 360.0);
        detail << ", cycles=" << survey.catalog.size();
        ok = ok && !survey.catalog.empty();

        PairGeometry geom = compute_pair_geometry(pair);
        for (const Cycle& c : survey.catalog) {
            bool bang_ok = c.bang_count == 2 || c.bang_count == 4;
            bool res_ok = c.residual < 1e-8 && norm2(c.monodromy * c.base_x - c.base_x) < 1e-8;

            // eigenvalue-1 simplicity margin
            double d1 = 1e300, d2 = 1e300;
            for (const auto& ev : c.floquet.eigenvalues) {
                double d = std::abs(ev - std::complex<double>(1.0, 0.0));
                if (d < d1) {
                    d2 = d1;
                    d1 = d;
                } else {
                    d2 = std::min(d2, d);
                }
            }
            bool simple_ok = d1 < 1e-7 && d2 > 1e-7;

            double trsum = 0.0;
            for (std::size_t k = 0; k < c.durations.size(); ++k) {
                double u0 = (c.start == StartGenerator::AFirst) ? 0.0 : 1.0;
                double u = (k % 2 == 0) ? u0 : 1.0 - u0;
                trsum += c.durations[k] * pair.generator(u).trace();
            }
            bool liouville_ok =
                std::abs(determinant(c.monodromy) - std::exp(trsum)) <= 1e-8 * std::exp(trsum);

            OrbitAudit oa = orbit_audit(pair, c, geom);
            bool signs_ok = oa.b_sign_changes == 2 && oa.c_sign_changes == 2;
            bool clear_ok = oa.min_xstar_distance > 1e-3 && oa.min_lstar_distance > 1e-3;

            if (!(bang_ok && res_ok && simple_ok && liouville_ok && signs_ok && clear_ok)) {
                ok = false;
                detail << " [cycle check failed: bang=" << bang_ok << " res=" << res_ok
                       << " simple=" << simple_ok << " liou=" << liouville_ok << " signs=" << signs_ok
                       << " clear=" << clear_ok << "]";
            }
        }
    } catch (const std::exception& e) {
        ok = false;
        detail << " exception: " << e.what();
    }
    report(5, ok, "cycle property suite", detail.str(), timer.seconds());
}

// criterion 6: flow invariant suite ----------------------------------------
void criterion6() {
    Timer timer;
    Rng rng(1006);
    std::ostringstream detail;
    bool ok = true;

    // duality over 100 random signal/start combos on the demo pair
    SwitchedSystem sys = demo_pair_system();
    double worst_pairing = 0.0, worst_liouville = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        SwitchingSignal sig;
        double total = 0.0;
        while (total < 20.0) {
            double d = uniform(rng, 0.1, 1.0);
            sig.segments.push_back({d, static_cast<double>(rng() % 2)});
            total += d;
        }
        Vec x0 = random_unit_vec(rng, 3), l0 = random_unit_vec(rng, 3);
        Trajectory xs = propagate(sys, sig, x0, 0.5, true);
        Trajectory ls = adjoint_propagate(sys, sig, l0, 0.5);
        double p0 = dot(l0, x0);
        for (std::size_t k = 0; k < xs.states.size(); ++k)
            worst_pairing = std::max(worst_pairing, std::abs(dot(ls.states[k], xs.states[k]) - p0));
        double trsum = 0.0;
        for (const auto& seg : sig.segments) trsum += seg.duration * generator_of(sys, seg.control).trace();
        double want = std::exp(trsum);
        worst_liouville =
            std::max(worst_liouville, std::abs(determinant(xs.fundamental.back()) - want) / want);
    }
    detail << "duality=" << worst_pairing << ", liouville=" << worst_liouville;
    ok = ok && worst_pairing <= 1e-9 && worst_liouville <= 1e-8;

    // Bellman operator monotonicity and homogeneity on 100 random field pairs
    SwitchedSystem e2 = example2_system(2.0);
    auto grid = make_sphere_grid(2, 512);
    double h = kBellmanStepCap / e2.max_generator_norm();
    bool bellman_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v1(grid->node_count()), v2(grid->node_count());
        for (int i = 0; i < grid->node_count(); ++i) {
            int a = grid->antipode(i);
            if (a < i) {
                v1[i] = v1[a];
                v2[i] = v2[a];
                continue;
            }
            v1[i] = uniform(rng, 0.5, 2.0);
            v2[i] = v1[i] + uniform(rng, 0.0, 1.0);
        }
        double s = uniform(rng, 0.3, 3.0);
        NormField f1(grid, v1), f2(grid, v2);
        NormField g1 = bellman_step(e2, f1, h), g2 = bellman_step(e2, f2, h);
        std::vector<double> vs(v1);
        for (double& x : vs) x *= s;
        NormField gs = bellman_step(e2, NormField(grid, vs), h);
        for (int i = 0; i < grid->node_count(); ++i) {
            if (g1.value_at(i) > g2.value_at(i) + 1e-12) bellman_ok = false;
            if (std::abs(gs.value_at(i) - s * g1.value_at(i)) > 1e-10 * std::max(1.0, s)) bellman_ok = false;
        }
    }
    detail << ", bellman=" << (bellman_ok ? "ok" : "violated");
    ok = ok && bellman_ok;

    // polar-polar residual within 2x grid error on the converged example2 field
    NormIterationOptions nopt;
    nopt.grid_nodes = 2048;
    nopt.tol = 1e-12;
    nopt.max_iters = 4000;
    NormField field = approximate_barabanov_norm(e2, nopt);
    NormField dd = convexify(field);
    double polar_worst = 0.0;
    for (int i = 0; i < field.node_count(); ++i)
        polar_worst = std::max(polar_worst, std::abs(dd.value_at(i) - field.value_at(i)));
    double polar_tol = 2.0 * field.grid_interp_error();
    detail << ", polar-polar=" << polar_worst << " (tol " << polar_tol << ")";
    ok = ok && polar_worst <= polar_tol;

    report(6, ok, "flow invariant suite", detail.str(), timer.seconds());
}

// criterion 7: determinism --------------------------------------------------
#ifndef BARNORM_CLI_PATH
#define BARNORM_CLI_PATH ""
#endif

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion7() {
    Timer timer;
    std::ostringstream detail;
    bool ok = true;
    fs::path tmp = fs::temp_directory_path() / "barnorm_acceptance_determinism";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    fs::path cfg = tmp / "config.json";
    std::ofstream(cfg) << "{\"grid_nodes\": 1024, \"max_iters\": 3000, \"uniq_starts\": 8}";

    auto run = [&](const std::string& out) {
        std::string cmd = std::string(BARNORM_CLI_PATH) + " reproduce example2 --seed 424242 --config " +
                          cfg.string() + " --out " + (tmp / out).string() + " > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    int rc1 = run("a"), rc2 = run("b");
    if (rc1 != rc2) {
        ok = false;
        detail << "exit codes differ";
    }
    for (const char* f : {"report.json", "field.json", "manifest.json"}) {
        std::string a = slurp(tmp / "a" / f), b = slurp(tmp / "b" / f);
        if (a.empty() || a != b) {
            ok = false;
            detail << " " << f << " differs or missing;";
        }
    }
    if (ok) detail << "byte-identical report.json, field.json, manifest.json";
    report(7, ok, "reproduce determinism", detail.str(), timer.seconds());
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    if (failures == 0)
        std::printf("all acceptance criteria passed\n");
    else
        std::printf("%d criterion(s) FAILED\n", failures);
    return failures;
}
