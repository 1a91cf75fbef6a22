#include <catch2/catch_amalgamated.hpp>

#include "barnorm/flow.hpp"
#include "barnorm/model.hpp"
#include "barnorm/random.hpp"
#include "barnorm/systems.hpp"

using namespace barnorm;

TEST_CASE("validate_pair direct cases") {
    // A = -I, b = e1, c = e2: detB = 1, Hurwitz, but (A,b) is not controllable
    Mat A = Mat::diag({-1.0, -1.0, -1.0});
    ValidationReport rep = validate_pair(A, Vec::unit(3, 0), Vec::unit(3, 1), 11);
    CHECK(rep.detB_value == Catch::Approx(1.0));
    CHECK(rep.hurwitz_vertices[0]);
    CHECK_FALSE(rep.controllable_b);
    CHECK_FALSE(rep.passed);
}

TEST_CASE("validate_pair flags detB violations") {
    // c chosen along -(A^T)^{-1}-preimage of b so that 1 + b^T (A^T)^{-1} c < 0
    Mat A = Mat::diag({-0.5, -1.0, -2.0});
    Vec b{1, 1, 1};
    Vec c = -3.0 * (A.transpose() * b);  // b^T (A^T)^{-1} c = -3 b^T b = -9
    ValidationReport rep = validate_pair(A, b, c);
    CHECK(rep.detB_value < 0.0);
    CHECK_FALSE(rep.passed);
}

TEST_CASE("validate_pair on the demo pair, with independent rank oracle") {
    SwitchedSystem sys = demo_pair_system();
    REQUIRE(sys.pair);
    ValidationReport rep = validate_pair(sys.pair->A, sys.pair->b, sys.pair->c);
    CHECK(rep.hurwitz_vertices[0]);
    CHECK(rep.hurwitz_vertices[1]);
    CHECK(rep.controllable_b);
    CHECK(rep.controllable_c);
    CHECK(rep.detB_value > 0.0);
    CHECK(rep.passed);
    // independent oracle: controllability matrix determinant is nonzero
    const Mat& A = sys.pair->A;
    Vec b = sys.pair->b;
    Mat K(3);
    for (int i = 0; i < 3; ++i) {
        K(i, 0) = b[i];
        K(i, 1) = (A * b)[i];
        K(i, 2) = (A * (A * b))[i];
    }
    CHECK(std::abs(determinant(K)) > 1e-12);
}

TEST_CASE("delta profile is affine in u") {
    SwitchedSystem sys = demo_pair_system();
    ValidationReport rep = validate_pair(sys.pair->A, sys.pair->b, sys.pair->c, 101);
    double d0 = rep.delta_profile.front(), d1 = rep.delta_profile.back();
    for (std::size_t k = 0; k < rep.u_grid.size(); ++k) {
        double u = rep.u_grid[k];
        double affine = (1.0 - u) * d0 + u * d1;
        CHECK(std::abs(rep.delta_profile[k] - affine) <= 1e-9 * std::abs(d0));
    }
}

TEST_CASE("irreducibility: reducible singleton with verified witness") {
    SwitchedSystem sys = SwitchedSystem::from_generators({Mat::diag({-1.0, -2.0})});
    IrreducibilityReport rep = irreducibility_check(sys);
    CHECK(rep.conclusive);
    CHECK_FALSE(rep.irreducible);
    REQUIRE_FALSE(rep.witness_subspace.empty());
    // witness is invariant under the generator
    for (const Vec& q : rep.witness_subspace) {
        Vec img = sys.generators[0] * q;
        for (const Vec& p : rep.witness_subspace) img -= dot(p, img) * p;
        CHECK(norm2(img) < 1e-9);
    }
}

TEST_CASE("irreducibility: singletons with a real eigenvalue are reducible") {
    Rng rng(21);
    for (int trial = 0; trial < 12; ++trial) {
        int n = 2 + static_cast<int>(rng() % 3);
        Mat a = random_matrix(rng, n, 1.0);
        Spectrum s = spectrum(a);
        bool has_real = false;
        for (auto& ev : s.eigenvalues)
            if (std::abs(ev.imag()) < 1e-10) has_real = true;
        if (!has_real) continue;
        IrreducibilityReport rep = irreducibility_check(SwitchedSystem::from_generators({a}));
        CHECK(rep.conclusive);
        CHECK_FALSE(rep.irreducible);
        CHECK_FALSE(rep.witness_subspace.empty());
    }
}

TEST_CASE("irreducibility: benchmark pairs are irreducible") {
    IrreducibilityReport e1 = irreducibility_check(example1_system());
    CHECK(e1.irreducible);
    CHECK(e1.conclusive);
    CHECK(e1.algebra_dim == 9);

    IrreducibilityReport pair = irreducibility_check(demo_pair_system());
    CHECK(pair.irreducible);
    CHECK(pair.conclusive);

    IrreducibilityReport sg = irreducibility_check(supgap_system(0.8896));
    CHECK(sg.irreducible);
    CHECK(sg.conclusive);
}

TEST_CASE("spectral_shift basics and composition") {
    SwitchedSystem sys = example1_system();
    SwitchedSystem same = spectral_shift(sys, 0.0);
    for (std::size_t k = 0; k < sys.generators.size(); ++k)
        CHECK((same.generators[k] - sys.generators[k]).max_abs() == 0.0);

    Rng rng(22);
    Mat a = random_matrix(rng, 3, 1.0);
    double mu = spectral_abscissa(a);
    SwitchedSystem shifted = spectral_shift(SwitchedSystem::from_generators({a}), mu);
    CHECK(std::abs(spectral_abscissa(shifted.generators[0])) < 1e-10);

    SwitchedSystem once = spectral_shift(sys, 0.75);
    SwitchedSystem twice = spectral_shift(spectral_shift(sys, 0.5), 0.25);
    for (std::size_t k = 0; k < sys.generators.size(); ++k)
        CHECK((once.generators[k] - twice.generators[k]).max_abs() == 0.0);

    // pair structure preserved: shifting A leaves b c^T untouched
    SwitchedSystem p = spectral_shift(demo_pair_system(), 0.5);
    REQUIRE(p.pair);
    Mat diff = p.generators[1] - p.generators[0];
    Mat want = Mat::outer(p.pair->b, p.pair->c);
    CHECK((diff - want).max_abs() < 1e-14);
}

TEST_CASE("spectral_shift trajectory correspondence") {
    SwitchedSystem sys = demo_pair_system();
    double mu = 0.37;
    SwitchedSystem shifted = spectral_shift(sys, mu);
    SwitchingSignal sig;
    sig.segments = {{1.3, 0.0}, {2.1, 1.0}, {0.7, 0.0}, {3.0, 1.0}, {2.9, 0.0}};
    Vec x0{0.3, -1.1, 0.8};
    Trajectory a = propagate(sys, sig, x0, 0.25);
    Trajectory b = propagate(shifted, sig, x0, 0.25);
    REQUIRE(a.times.size() == b.times.size());
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        Vec want = std::exp(-mu * a.times[k]) * a.states[k];
        CHECK(norm2(b.states[k] - want) <= 1e-9 * std::max(1.0, norm2(want)));
    }
}

TEST_CASE("pair geometry: orthogonality, sign fix, Gram-Schmidt oracle") {
    SwitchedSystem sys = demo_pair_system();
    PairGeometry g = compute_pair_geometry(*sys.pair);
    const Mat& A = sys.pair->A;
    const Vec& c = sys.pair->c;
    const Vec& b = sys.pair->b;
    CHECK(std::abs(dot(c, g.x_star)) < 1e-10);
    CHECK(std::abs(dot(c, A * g.x_star)) < 1e-10);
    CHECK(dot(c, A * (A * g.x_star)) > 0.0);
    CHECK(std::abs(dot(g.l_star, b)) < 1e-10);
    CHECK(std::abs(dot(g.l_star, A * b)) < 1e-10);
    CHECK(dot(g.l_star, A * (A * b)) > 0.0);
    CHECK(norm2(g.x_star) == Catch::Approx(1.0).margin(1e-12));

    // Gram-Schmidt oracle: x_star orthogonal to the span of {c, A^T c}
    Vec q1 = normalized(c);
    Vec q2 = A.transpose() * c;
    q2 -= dot(q1, q2) * q1;
    q2 = normalized(q2);
    CHECK(std::abs(dot(q1, g.x_star)) < 1e-10);
    CHECK(std::abs(dot(q2, g.x_star)) < 1e-10);
}

TEST_CASE("pair geometry rejects collinear data") {
    BarabanovPairData bad{Mat::identity(3), Vec{1, 0, 0}, Vec{0, 1, 0}};
    CHECK_THROWS_AS(compute_pair_geometry(bad), std::domain_error);
}
