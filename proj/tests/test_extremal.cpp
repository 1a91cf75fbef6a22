#include <catch2/catch_amalgamated.hpp>

#include "barnorm/diagnostics.hpp"
#include "barnorm/extremal.hpp"
#include "barnorm/model.hpp"
#include "barnorm/random.hpp"
#include "barnorm/systems.hpp"

using namespace barnorm;

namespace {

BarabanovPairData demo_pair() { return *demo_pair_system().pair; }

const NormField& demo_field() {
    static NormField field = [] {
        NormIterationOptions opt;
        opt.grid_nodes = 2562;
        opt.tol = 1e-9;
        opt.max_iters = 2500;
        return approximate_barabanov_norm(demo_pair_system(), opt);
    }();
    return field;
}

}  // namespace

TEST_CASE("switching_values direct evaluation") {
    BarabanovPairData pair = demo_pair();
    PairGeometry g = compute_pair_geometry(pair);

    // l orthogonal to b
    Vec l = normalized(cross3(pair.b, Vec{1, 0, 0}));
    SwitchingValues v = switching_values(pair, Vec{1, 1, 1}, l);
    CHECK(std::abs(v.phi_b) < 1e-14);
    CHECK(std::abs(v.phi) < 1e-13);

    // x at the pair base point: double-zero signature of the c-factor
    SwitchingValues w = switching_values(pair, g.x_star, Vec{0, 0, 1});
    CHECK(std::abs(w.phi_c) < 1e-12);
    CHECK(std::abs(w.dphi_c) < 1e-10);
    CHECK(w.ddphi_c_core > 0.0);

    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        Vec x = random_unit_vec(rng, 3), ll = random_unit_vec(rng, 3);
        SwitchingValues sv = switching_values(pair, x, ll);
        CHECK(sv.phi == dot(pair.b, ll) * dot(pair.c, x));
        CHECK(sv.dphi_b == Catch::Approx(-dot(pair.b, pair.A.transpose() * ll)).margin(1e-15));
    }
}

TEST_CASE("classify_zero: transversal, tangential, degenerate") {
    BarabanovPairData pair = demo_pair();
    PairGeometry g = compute_pair_geometry(pair);

    // transversal b-zero: l orthogonal to b but not to A b
    Vec l = normalized(cross3(pair.b, Vec{0.3, 1, 0.2}));
    SwitchingValues v = switching_values(pair, Vec{1, 0, 0}, l);
    REQUIRE(std::abs(v.phi_b) < 1e-12);
    if (std::abs(v.dphi_b) > 1e-3) CHECK(classify_zero(pair, Vec{1, 0, 0}, l, ZeroFactor::B) == ZeroKind::Transversal);

    // tangential b-zero at l_star: b^T l = b^T A^T l = 0, second derivative clears
    CHECK(classify_zero(pair, Vec{1, 0, 0}, g.l_star, ZeroFactor::B) == ZeroKind::Tangential);
    // tangential c-zero at x_star
    CHECK(classify_zero(pair, g.x_star, Vec{1, 0, 0}, ZeroFactor::C) == ZeroKind::Tangential);

    // degenerate: controllability-violating pair (A diagonal) makes all tests vanish
    BarabanovPairData bad{Mat::diag({-1.0, -2.0, -3.0}), Vec{1, 0, 0}, Vec{0, 1, 0}};
    Vec lbad{0, 0, 1};  // orthogonal to b, A^T b, (A^T)^2 b
    CHECK_THROWS_AS(classify_zero(bad, Vec{1, 0, 0}, lbad, ZeroFactor::B), DegenerateZeroError);
}

TEST_CASE("integrate_extremal: sign rule and event structure") {
    BarabanovPairData pair = demo_pair();
    Rng rng(42);
    Vec x0 = random_unit_vec(rng, 3), l0 = random_unit_vec(rng, 3);
    SwitchingValues v0 = switching_values(pair, x0, l0);
    ExtremalPath path = integrate_extremal(pair, x0, l0, 40.0);

    if (std::abs(v0.phi) > 1e-9) CHECK(path.u_values.front() == (v0.phi > 0 ? 1.0 : 0.0));

    // max-selection rule holds at samples: u phi = max(0, phi)
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        double phi = dot(pair.b, path.l_states[k]) * dot(pair.c, path.x_states[k]);
        double uphi = path.u_values[k] * phi;
        CHECK(uphi >= std::max(0.0, phi) - 1e-9 * std::max(1.0, std::abs(phi)));
    }

    // duality along the coupled flow
    double pairing = dot(l0, x0);
    for (std::size_t k = 0; k < path.times.size(); ++k)
        CHECK(std::abs(dot(path.l_states[k], path.x_states[k]) - pairing) < 1e-8 * std::max(1.0, std::abs(pairing)));

    // isolated zeros: gap between consecutive same-factor events clears 10x time tol
    for (std::size_t k = 1; k < path.switch_times.size(); ++k) {
        double gap = path.switch_times[k].time - path.switch_times[k - 1].time;
        CHECK(gap > 1e-11);
    }

    // no chattering: events on [0,40] are bounded well away from blowup
    CHECK(path.switch_times.size() < 400);
}

TEST_CASE("extremal runs: sign-change count grows with horizon") {
    BarabanovPairData pair = demo_pair();
    const NormField& field = demo_field();
    Vec x0 = normalized(Vec{0.3, -0.5, 0.8});
    ExtremalPath shorter = extremal_run_projected(pair, field, x0, 30.0);
    ExtremalPath longer = extremal_run_projected(pair, field, x0, 90.0);
    auto cs = sign_change_stats(shorter, 0.0, shorter.end_time);
    auto cl = sign_change_stats(longer, 0.0, longer.end_time);
    CHECK(cl.first > cs.first);
    CHECK(cl.second > cs.second);
    CHECK(cl.first >= 2);
    CHECK(cl.second >= 2);
}

TEST_CASE("extremal runs: late-time recurrence toward a periodic pair") {
    BarabanovPairData pair = demo_pair();
    Vec x0 = normalized(Vec{0.4, 0.7, -0.2});
    ExtremalPath path = extremal_run_projected(pair, demo_field(), x0, 260.0);
    const auto& ev = path.switch_times;
    REQUIRE(ev.size() > 24);
    // compare the last two four-switch blocks (period of the locked cycle);
    // the recurrence residual is set by the field resolution
    double recur_tol = 4.0 * demo_field().grid_interp_error();
    double last[4], prev[4];
    std::size_t m = ev.size();
    for (int k = 0; k < 4; ++k) {
        last[k] = ev[m - 1 - k].time - ev[m - 2 - k].time;
        prev[k] = ev[m - 5 - k].time - ev[m - 6 - k].time;
    }
    for (int k = 0; k < 4; ++k) CHECK(std::abs(last[k] - prev[k]) < recur_tol);

    // per-factor changes per detected period: (2,2)
    double T = last[0] + last[1] + last[2] + last[3];
    auto counts = sign_change_stats(path, ev[m - 1].time - T + 1e-9, ev[m - 1].time + 1e-9);
    CHECK(counts.first == 2);
    CHECK(counts.second == 2);

    // doubled window doubles the counts
    auto doubled = sign_change_stats(path, ev[m - 1].time - 2 * T + 1e-9, ev[m - 1].time + 1e-9);
    CHECK(doubled.first == 4);
    CHECK(doubled.second == 4);

    // window shorter than the first bang
    auto none = sign_change_stats(path, 0.0, ev.front().time * 0.5);
    CHECK(none.first == 0);
    CHECK(none.second == 0);
}

TEST_CASE("tangential zero: dense-sampling oracle and event record") {
    BarabanovPairData pair = demo_pair();
    PairGeometry g = compute_pair_geometry(pair);
    const double tstar = 0.4;

    // adjoint flow under u=0 that passes exactly through l_star at t*
    Vec l0 = expm(pair.A.transpose(), tstar) * g.l_star;
    // phi_b along the pure adjoint flow touches zero at t* without sign change
    auto phi_b_at = [&](double t) { return dot(pair.b, expm(-1.0 * pair.A.transpose(), t) * l0); };
    REQUIRE(std::abs(phi_b_at(tstar)) < 1e-10);
    double before = phi_b_at(tstar - 1e-3), after = phi_b_at(tstar + 1e-3);
    CHECK(before * after > 0.0);  // same sign on both sides

    // choose x0 so that phi_c keeps one sign on [0, 2 t*] under u = 0
    Vec x0 = normalized(g.x_star + 2.0 * normalized(pair.A * g.x_star));
    bool csafe = true;
    for (double t = 0.0; t <= 2 * tstar; t += 0.01)
        if (dot(pair.c, expm(pair.A, t) * x0) * dot(pair.c, x0) <= 0.0) csafe = false;
    if (csafe && phi_b_at(0.0) * dot(pair.c, x0) < 0.0) {  // u = 0 on the first bang
        ExtremalPath path = integrate_extremal(pair, x0, l0, 2 * tstar);
        bool found_tangential = false;
        for (const auto& evr : path.switch_times)
            if (evr.kind == ZeroKind::Tangential && evr.which == ZeroFactor::B &&
                std::abs(evr.time - tstar) < 1e-6)
                found_tangential = true;
        CHECK(found_tangential);
        // control is retained across a tangential event
        if (found_tangential) {
            double u_before = -1, u_after = -1;
            for (std::size_t k = 0; k + 1 < path.times.size(); ++k) {
                if (path.times[k] < tstar - 1e-4) u_before = path.u_values[k];
                if (path.times[k] > tstar + 1e-4 && u_after < 0) u_after = path.u_values[k];
            }
            CHECK(u_before == u_after);
        }
    } else {
        WARN("tangential construction not isolated for this pair; oracle part still verified");
    }
}

TEST_CASE("sign_change_stats window validation and Both counting") {
    ExtremalPath path;
    path.end_time = 10.0;
    path.switch_times = {{1.0, ZeroFactor::B, ZeroKind::Transversal},
                         {2.0, ZeroFactor::Both, ZeroKind::Transversal},
                         {3.0, ZeroFactor::C, ZeroKind::Tangential}};
    auto counts = sign_change_stats(path, 0.0, 10.0);
    CHECK(counts.first == 2);   // B + Both
    CHECK(counts.second == 1);  // Both only (the C event is tangential)
    CHECK_THROWS_AS(sign_change_stats(path, 5.0, 20.0), std::domain_error);
}
