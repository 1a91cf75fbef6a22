#include <catch2/catch_amalgamated.hpp>

#include "barnorm/flow.hpp"
#include "barnorm/random.hpp"
#include "barnorm/systems.hpp"

using namespace barnorm;

namespace {

SwitchingSignal random_signal(Rng& rng, int nvertices, double total_time) {
    SwitchingSignal sig;
    double t = 0.0;
    while (t < total_time) {
        double d = uniform(rng, 0.1, 1.2);
        sig.segments.push_back({d, static_cast<double>(rng() % nvertices)});
        t += d;
    }
    return sig;
}

}  // namespace

TEST_CASE("propagate: closed rotation, zero state, sampling") {
    SwitchedSystem rot = SwitchedSystem::from_generators({Mat(2, {0, 1, -1, 0})});
    SwitchingSignal sig;
    sig.segments = {{2.0 * M_PI, 0.0}};
    Trajectory traj = propagate(rot, sig, Vec{1, 0}, 0.1);
    CHECK(norm2(traj.states.back() - Vec{1, 0}) < 1e-9);
    for (std::size_t k = 1; k < traj.times.size(); ++k) CHECK(traj.times[k] > traj.times[k - 1]);

    Trajectory zero = propagate(rot, sig, Vec{0, 0}, 0.5);
    for (const Vec& x : zero.states) CHECK(norm2(x) == 0.0);
}

TEST_CASE("propagate: example1 norm never increases") {
    SwitchedSystem sys = example1_system();
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        SwitchingSignal sig = random_signal(rng, 2, 20.0);
        Vec x0 = random_unit_vec(rng, 3);
        Trajectory traj = propagate(sys, sig, x0, 0.05);
        double prev = norm2(traj.states.front());
        for (const Vec& x : traj.states) {
            CHECK(norm2(x) <= prev + 1e-9);
            prev = norm2(x);
        }
    }
}

TEST_CASE("adjoint: skew-symmetric case and duality invariance") {
    Mat J(2, {0, 1, -1, 0});
    SwitchedSystem rot = SwitchedSystem::from_generators({J});
    SwitchingSignal sig;
    sig.segments = {{1.3, 0.0}};
    Vec l0{0.4, -0.8};
    Trajectory ltraj = adjoint_propagate(rot, sig, l0, 0.05);
    // for skew-symmetric A, the adjoint flow equals the forward flow
    Trajectory xtraj = propagate(rot, sig, l0, 0.05);
    for (std::size_t k = 0; k < ltraj.states.size(); ++k)
        CHECK(norm2(ltraj.states[k] - xtraj.states[k]) < 1e-11);

    Rng rng(32);
    SwitchedSystem sys = demo_pair_system();
    for (int trial = 0; trial < 12; ++trial) {
        SwitchingSignal s = random_signal(rng, 2, 20.0);
        Vec x0 = random_unit_vec(rng, 3), ll = random_unit_vec(rng, 3);
        Trajectory xs = propagate(sys, s, x0, 0.25);
        Trajectory ls = adjoint_propagate(sys, s, ll, 0.25);
        double pairing0 = dot(ll, x0);
        for (std::size_t k = 0; k < xs.states.size(); ++k)
            CHECK(std::abs(dot(ls.states[k], xs.states[k]) - pairing0) <= 1e-9);
    }
}

TEST_CASE("adjoint run backward matches the transposed forward system") {
    SwitchedSystem sys = demo_pair_system();
    Rng rng(33);
    SwitchingSignal sig = random_signal(rng, 2, 8.0);
    double T = sig.total_duration();
    Vec l0 = random_unit_vec(rng, 3);
    Trajectory ls = adjoint_propagate(sys, sig, l0, 0.05);

    // m(t) = l(T - t) solves m' = A^T m + u c b^T m with the reversed signal
    std::vector<Mat> tgen;
    for (const Mat& g : sys.generators) tgen.push_back(g.transpose());
    SwitchedSystem tsys = SwitchedSystem::from_generators(tgen);
    SwitchingSignal rev;
    for (auto it = sig.segments.rbegin(); it != sig.segments.rend(); ++it) rev.segments.push_back(*it);
    Trajectory ms = propagate(tsys, rev, ls.states.back(), 0.05);
    CHECK(norm2(ms.states.back() - l0) < 1e-9);
}

TEST_CASE("concatenation and fundamental-matrix Liouville") {
    SwitchedSystem sys = example1_system();
    Rng rng(34);
    SwitchingSignal s1 = random_signal(rng, 2, 5.0), s2 = random_signal(rng, 2, 5.0);
    Vec x0 = random_unit_vec(rng, 3);
    Trajectory first = propagate(sys, s1, x0, 0.5);
    SwitchingSignal glued = s1;
    for (const auto& seg : s2.segments) glued.segments.push_back(seg);
    Trajectory whole = propagate(sys, glued, x0, 0.5, true);
    Trajectory second = propagate(sys, s2, first.states.back(), 0.5);
    CHECK(norm2(whole.states.back() - second.states.back()) < 1e-10);

    double trsum = 0.0;
    for (const auto& seg : glued.segments) trsum += seg.duration * generator_of(sys, seg.control).trace();
    double detR = determinant(whole.fundamental.back());
    CHECK(std::abs(detR - std::exp(trsum)) <= 1e-8 * std::abs(std::exp(trsum)));
    // recorded states match R(t) x0
    for (std::size_t k = 0; k < whole.states.size(); ++k)
        CHECK(norm2(whole.fundamental[k] * x0 - whole.states[k]) < 1e-9);
}

TEST_CASE("build_section separates the velocity hull") {
    SwitchedSystem rot = SwitchedSystem::from_generators({Mat(2, {0, 1, -1, 0})});
    Section s = build_section(rot, Vec{1, 0}, 0.3);
    CHECK(s.margin > 0.0);
    CHECK(dot(s.normal, rot.generators[0] * Vec{1, 0}) > 0.0);

    SwitchedSystem pairsys = demo_pair_system();
    PairGeometry g = compute_pair_geometry(*pairsys.pair);
    // a point on the c-plane where both generators act identically
    Vec z = g.x_star;
    Section sp = build_section(pairsys, z, 0.3);
    for (const Mat& gen : pairsys.generators) CHECK(dot(sp.normal, gen * z) > 0.0);

    CHECK_THROWS_AS(build_section(rot, Vec{0, 0}, 0.3), StationaryPointError);
}

TEST_CASE("omega_estimate: rotation is periodic with period 2pi") {
    SwitchedSystem rot = SwitchedSystem::from_generators({Mat(2, {0, 1, -1, 0})});
    SwitchingSignal sig;
    sig.segments = {{100.0, 0.0}};
    FlowEvaluator eval(rot, sig, Vec{1, 0});
    Section s = build_section(rot, Vec{1, 0}, 0.4);
    OmegaReport rep = omega_estimate(rot, eval, 100.0, s);
    REQUIRE(rep.kind == OmegaKind::Periodic);
    REQUIRE(rep.period_estimate);
    CHECK(std::abs(*rep.period_estimate - 2.0 * M_PI) < 1e-6);
    CHECK(rep.crossings_monotone);
}

TEST_CASE("omega_estimate: Hurwitz singleton decays to zero") {
    Mat a(2, {-0.5, 1.0, -1.0, -0.5});
    SwitchedSystem sys = SwitchedSystem::from_generators({a});
    SwitchingSignal sig;
    sig.segments = {{60.0, 0.0}};
    FlowEvaluator eval(sys, sig, Vec{1, 0});
    Section s = build_section(sys, Vec{1, 0}, 0.4);
    OmegaReport rep = omega_estimate(sys, eval, 60.0, s);
    CHECK(rep.kind == OmegaKind::FixedPointZero);
}

TEST_CASE("signal validation rejects malformed inputs") {
    SwitchedSystem sys = example1_system();
    SwitchingSignal bad;
    bad.segments = {{-1.0, 0.0}};
    CHECK_THROWS_AS(bad.validate(sys), std::domain_error);
    SwitchingSignal idx;
    idx.segments = {{1.0, 5.0}};
    CHECK_THROWS_AS(idx.validate(sys), std::domain_error);
    SwitchingSignal pairok;
    pairok.segments = {{1.0, 0.37}};
    CHECK_NOTHROW(pairok.validate(demo_pair_system()));
    CHECK_THROWS_AS(pairok.validate(sys), std::domain_error);
}
