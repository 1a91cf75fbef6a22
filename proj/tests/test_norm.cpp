#include <catch2/catch_amalgamated.hpp>

#include "barnorm/norm_field.hpp"
#include "barnorm/random.hpp"
#include "barnorm/sphere.hpp"
#include "barnorm/systems.hpp"

using namespace barnorm;

TEST_CASE("sphere grids: counts, antipodes, stencils") {
    auto circle = make_sphere_grid(2, 256);
    CHECK(circle->node_count() == 256);
    auto ico = make_sphere_grid(3, 642);
    CHECK(ico->node_count() == 642);
    auto ico5 = make_sphere_grid(3, 10242);
    CHECK(ico5->node_count() == 10242);

    Rng rng(51);
    for (const auto& grid : {circle, ico}) {
        for (int i = 0; i < grid->node_count(); ++i) {
            int j = grid->antipode(i);
            CHECK(norm2(grid->node(i) + grid->node(j)) < 1e-12);
            CHECK(grid->antipode(j) == i);
        }
        for (int trial = 0; trial < 200; ++trial) {
            Vec q = random_unit_vec(rng, grid->dim());
            InterpStencil st = grid->locate(q);
            Vec recon(grid->dim());
            double wsum = 0.0;
            for (int k = 0; k < st.count; ++k) {
                CHECK(st.weight[k] >= 0.0);
                recon += st.weight[k] * grid->node(st.idx[k]);
                wsum += st.weight[k];
            }
            CHECK(norm2(recon - q) < 1e-9);
            CHECK(wsum > 0.0);
        }
    }
}

TEST_CASE("norm field: homogeneity and symmetry") {
    NormField f = euclidean_field(make_sphere_grid(3, 642));
    Rng rng(52);
    for (int trial = 0; trial < 50; ++trial) {
        Vec x = random_unit_vec(rng, 3);
        double s = uniform(rng, 0.1, 8.0);
        CHECK(f.query(s * x) == Catch::Approx(s * f.query(x)).epsilon(1e-13));
        CHECK(f.query(-x) == Catch::Approx(f.query(x)).epsilon(1e-13));
        // Euclidean restriction: unity up to the conic chord gap
        CHECK(f.query(x) >= 1.0 - 1e-12);
        CHECK(f.query(x) <= 1.0 + 2.0 * f.grid_interp_error());
    }
}

TEST_CASE("bellman_step: isometric flow is a fixed point") {
    SwitchedSystem rot = SwitchedSystem::from_generators({Mat(2, {0, 1, -1, 0})});
    NormField f = euclidean_field(make_sphere_grid(2, 512));
    NormField g = bellman_step(rot, f, 0.15);
    CHECK(g.sup_change(f) <= 2.0 * f.grid_interp_error());  // circles preserve the norm
}

TEST_CASE("bellman_step: monotone and positively homogeneous operator") {
    SwitchedSystem sys = example2_system();
    auto grid = make_sphere_grid(2, 256);
    Rng rng(53);
    double h = kBellmanStepCap / sys.max_generator_norm();
    for (int trial = 0; trial < 20; ++trial) {
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
        NormField f1(grid, v1), f2(grid, v2);
        NormField g1 = bellman_step(sys, f1, h), g2 = bellman_step(sys, f2, h);
        for (int i = 0; i < grid->node_count(); ++i) CHECK(g1.value_at(i) <= g2.value_at(i) + 1e-12);

        double s = uniform(rng, 0.3, 3.0);
        std::vector<double> vs(v1);
        for (double& x : vs) x *= s;
        NormField gs = bellman_step(sys, NormField(grid, vs), h);
        for (int i = 0; i < grid->node_count(); ++i)
            CHECK(gs.value_at(i) == Catch::Approx(s * g1.value_at(i)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(bellman_step(sys, NormField(grid, 1.0), 10.0), std::domain_error);
}

TEST_CASE("approximate_barabanov_norm: example2 converges to the max norm") {
    SwitchedSystem sys = example2_system(2.0);
    NormIterationOptions opt;
    opt.grid_nodes = 1024;
    opt.tol = 1e-12;
    opt.max_iters = 4000;
    NormField f = approximate_barabanov_norm(sys, opt);
    double worst = 0.0;
    for (int i = 0; i < f.node_count(); ++i) {
        const Vec& x = f.node(i);
        worst = std::max(worst, std::abs(f.value_at(i) - std::max(std::abs(x[0]), std::abs(x[1]))));
    }
    CHECK(worst <= 2.0 * f.grid_interp_error());

    // triangle inequality spot checks
    Rng rng(54);
    for (int trial = 0; trial < 2000; ++trial) {
        Vec x = uniform(rng, 0.2, 2.0) * random_unit_vec(rng, 2);
        Vec y = uniform(rng, 0.2, 2.0) * random_unit_vec(rng, 2);
        CHECK(f.query(x + y) <= f.query(x) + f.query(y) + 2.0 * f.grid_interp_error());
    }
}

TEST_CASE("approximate_barabanov_norm: divergence and collapse guards") {
    SwitchedSystem unstable = SwitchedSystem::from_generators({Mat(2, {0.4, 1, -1, 0.4})});
    NormIterationOptions opt;
    opt.grid_nodes = 256;
    opt.max_iters = 4000;
    opt.check_irreducibility = false;
    CHECK_THROWS_AS(approximate_barabanov_norm(unstable, opt), FieldDivergenceError);
    SwitchedSystem stable = SwitchedSystem::from_generators({Mat(2, {-0.4, 1, -1, -0.4})});
    CHECK_THROWS_AS(approximate_barabanov_norm(stable, opt), FieldCollapseError);
}

TEST_CASE("approximate_barabanov_norm rejects verified-reducible systems") {
    SwitchedSystem red = SwitchedSystem::from_generators({Mat::diag({-0.1, 0.1})});
    CHECK_THROWS_AS(approximate_barabanov_norm(red), ReducibleSystemError);
}

TEST_CASE("example1: circles lie on the unit sphere of the field") {
    SwitchedSystem sys = example1_system();
    NormIterationOptions opt;
    opt.grid_nodes = 2562;
    opt.tol = 1e-7;
    opt.max_iters = 400;
    NormField f = approximate_barabanov_norm(sys, opt);
    double tol = 2.0 * f.grid_interp_error() + 2.0 * f.residual();
    for (double th = 0.0; th < 2.0 * M_PI; th += 0.1) {
        CHECK(std::abs(f.query(Vec{std::cos(th), std::sin(th), 0.0}) - 1.0) <= tol);
        CHECK(std::abs(f.query(Vec{std::cos(th), 0.0, std::sin(th)}) - 1.0) <= tol);
    }
}

TEST_CASE("dual_field: self-dual Euclidean, max <-> l1, double polar") {
    NormField eu = euclidean_field(make_sphere_grid(2, 1024));
    NormField eud = dual_field(eu);
    for (int i = 0; i < eud.node_count(); i += 37) CHECK(eud.value_at(i) == Catch::Approx(1.0).margin(1e-6));

    // v1 = max(|x1|,|x2|) -> dual = |l1| + |l2|
    auto grid = make_sphere_grid(2, 1024);
    std::vector<double> vals(grid->node_count());
    for (int i = 0; i < grid->node_count(); ++i) {
        const Vec& x = grid->node(i);
        vals[i] = std::max(std::abs(x[0]), std::abs(x[1]));
    }
    NormField v1(grid, vals);
    NormField v1d = dual_field(v1);
    double worst = 0.0;
    for (int i = 0; i < v1d.node_count(); ++i) {
        const Vec& l = v1d.node(i);
        worst = std::max(worst, std::abs(v1d.value_at(i) - (std::abs(l[0]) + std::abs(l[1]))));
    }
    CHECK(worst <= 2.0 * std::max(v1.grid_interp_error(), v1d.grid_interp_error()) + 1e-9);

    NormField v1dd = dual_field(NormField(grid, v1d.values(), false));
    double polar_worst = 0.0;
    for (int i = 0; i < v1.node_count(); ++i)
        polar_worst = std::max(polar_worst, std::abs(v1dd.value_at(i) - v1.value_at(i)));
    CHECK(polar_worst <= 2.0 * std::max(v1.grid_interp_error(), v1d.grid_interp_error()) + 1e-9);
}

TEST_CASE("subdifferential: Euclidean singleton, max-norm corner") {
    NormField eu = euclidean_field(make_sphere_grid(2, 1024));
    NormField eud = dual_field(eu);
    Vec x{0.6, -0.8};
    SubdifferentialEstimate sd = subdifferential(eu, x, 1e-4, &eud);
    REQUIRE_FALSE(sd.supports.empty());
    CHECK(sd.is_singleton);
    for (const Vec& l : sd.supports) CHECK(norm2(normalized(l) - x) < 0.05);

    auto grid = make_sphere_grid(2, 2048);
    std::vector<double> vals(grid->node_count());
    for (int i = 0; i < grid->node_count(); ++i)
        vals[i] = std::max(std::abs(grid->node(i)[0]), std::abs(grid->node(i)[1]));
    NormField v1(grid, vals);
    NormField v1d = dual_field(v1);

    // kink at the corner (1,1)/sqrt2: supports spread across the face normals
    SubdifferentialEstimate corner = subdifferential(v1, Vec{1.0, 1.0}, 1e-4, &v1d);
    REQUIRE_FALSE(corner.supports.empty());
    CHECK_FALSE(corner.is_singleton);
    // smooth point on a face: singleton pointing along e1
    SubdifferentialEstimate face = subdifferential(v1, Vec{1.0, 0.3}, 1e-4, &v1d);
    REQUIRE_FALSE(face.supports.empty());
    CHECK(face.is_singleton);
    CHECK(std::abs(dot(normalized(face.supports[0]), Vec{1.0, 0.0}) - 1.0) < 1e-3);
}

TEST_CASE("monotone nonincrease of the converged field along trajectories") {
    SwitchedSystem sys = example2_system(2.0);
    NormIterationOptions opt;
    opt.grid_nodes = 1024;
    opt.tol = 1e-12;
    opt.max_iters = 4000;
    NormField f = approximate_barabanov_norm(sys, opt);
    Rng rng(55);
    double slack = 3.0 * f.grid_interp_error();
    for (int trial = 0; trial < 40; ++trial) {
        SwitchingSignal sig;
        double total = 0.0;
        while (total < 10.0) {
            double d = uniform(rng, 0.05, 0.6);
            sig.segments.push_back({d, static_cast<double>(rng() % 3)});
            total += d;
        }
        Vec x0 = random_unit_vec(rng, 2);
        Trajectory traj = propagate(sys, sig, x0, 0.1);
        double v0 = f.query(traj.states.front());
        for (const Vec& x : traj.states) CHECK(f.query(x) <= v0 + slack);
    }
}
