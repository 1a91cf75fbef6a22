#include <catch2/catch_amalgamated.hpp>

#include "barnorm/rho.hpp"
#include "barnorm/random.hpp"
#include "barnorm/systems.hpp"

using namespace barnorm;

TEST_CASE("estimate_rho: planar singletons match the spectral abscissa") {
    Rng rng(61);
    for (int trial = 0; trial < 6; ++trial) {
        Mat a = random_matrix(rng, 2, 1.0);
        SwitchedSystem sys = SwitchedSystem::from_generators({a});
        RhoEstimate est = estimate_rho(sys, 1e-3);
        double want = spectral_abscissa(a);
        INFO(est.method_trace);
        CHECK(std::abs(est.value - want) <= 1e-3);
        CHECK(est.hi - est.lo <= 1e-3 + 1e-12);
        CHECK(est.lo <= est.value);
        CHECK(est.value <= est.hi);
    }
}

TEST_CASE("estimate_rho: a 3D singleton") {
    Rng rng(62);
    Mat a = random_matrix(rng, 3, 1.0);
    SwitchedSystem sys = SwitchedSystem::from_generators({a});
    RhoEstimate est = estimate_rho(sys, 1e-3);
    INFO(est.method_trace);
    CHECK(std::abs(est.value - spectral_abscissa(a)) <= 1e-3);
}

TEST_CASE("estimate_rho: example1 sits on the stability boundary") {
    RhoEstimate est = estimate_rho(example1_system(), 5e-3);
    INFO(est.method_trace);
    CHECK(std::abs(est.value) <= 1e-2);
}

TEST_CASE("estimate_rho: supgap system at the tangency alpha") {
    TangencySolve sol = solve_supgap_tangency();
    RhoEstimate est = estimate_rho(supgap_system(sol.alpha), 2.5e-3);
    INFO(est.method_trace);
    CHECK(std::abs(est.value) <= 1e-2);
}

TEST_CASE("estimate_rho: shift equivariance") {
    Rng rng(63);
    Mat a = random_matrix(rng, 2, 1.0);
    SwitchedSystem sys = SwitchedSystem::from_generators({a});
    double tol = 1e-3;
    RhoEstimate base = estimate_rho(sys, tol);
    RhoEstimate shifted = estimate_rho(spectral_shift(sys, 0.37), tol);
    CHECK(std::abs(shifted.value - (base.value - 0.37)) <= 2.0 * tol);
}
