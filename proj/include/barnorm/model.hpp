#pragma once

// System definitions and hypothesis validators: Hurwitz checks,
// controllability, irreducibility over the reals, the determinant-sign
// condition 1 + b^T (A^T)^{-1} c > 0, hull abscissa scans, spectral shifts.

#include <optional>
#include <string>
#include <vector>

#include "barnorm/linalg.hpp"
#include "barnorm/random.hpp"

namespace barnorm {

struct PairGeometry {
    Vec x_star;  // unit, c^T x = c^T A x = 0, c^T A^2 x > 0
    Vec l_star;  // unit, l^T b = l^T A b = 0, l^T A^2 b > 0
};

struct BarabanovPairData {
    Mat A;  // 3x3 Hurwitz
    Vec b;
    Vec c;
    Mat perturbed() const { return A + Mat::outer(b, c); }
    Mat generator(double u) const { return A + u * Mat::outer(b, c); }
    Mat generator(int u) const { return generator(static_cast<double>(u)); }
};

/// Convex polytope of generators conv{A_1,...,A_m}; optionally carries the
/// rank-one pair structure {A, A + b c^T}.
struct SwitchedSystem {
    int n = 0;
    std::vector<Mat> generators;
    std::optional<BarabanovPairData> pair;

    static SwitchedSystem from_generators(std::vector<Mat> gens) {
        if (gens.empty()) throw DimensionError("SwitchedSystem: no generators");
        SwitchedSystem s;
        s.n = gens[0].dim();
        for (const Mat& g : gens)
            if (g.dim() != s.n) throw DimensionError("SwitchedSystem: generator dimensions differ");
        s.generators = std::move(gens);
        return s;
    }
    static SwitchedSystem from_pair(const Mat& A, const Vec& b, const Vec& c) {
        if (A.dim() != 3 || b.size() != 3 || c.size() != 3)
            throw DimensionError("SwitchedSystem: pair systems are 3-dimensional");
        SwitchedSystem s;
        s.n = 3;
        s.generators = {A, A + Mat::outer(b, c)};
        s.pair = BarabanovPairData{A, b, c};
        return s;
    }
    double max_generator_norm() const {
        double m = 0.0;
        for (const Mat& g : generators) m = std::max(m, g.norm1());
        return m;
    }
};

/// Replace every generator A by A - mu*I. Pair structure is preserved
/// (the rank-one offset b c^T is untouched).
inline SwitchedSystem spectral_shift(const SwitchedSystem& sys, double mu) {
    SwitchedSystem out = sys;
    Mat shift = mu * Mat::identity(sys.n);
    for (Mat& g : out.generators) g -= shift;
    if (out.pair) out.pair->A -= shift;
    return out;
}

// ---------------------------------------------------------------------------
// irreducibility

struct IrreducibilityReport {
    bool irreducible = false;
    bool conclusive = false;
    int algebra_dim = 0;                 // dimension of the word span (<= n^2)
    std::vector<Vec> witness_subspace;   // orthonormal basis, only when reducible
};

namespace detail {

// Orthonormal basis of the span of `vs` (threshold-relative).
inline std::vector<Vec> orthonormal_span(const std::vector<Vec>& vs, double tol = 1e-10) {
    std::vector<Vec> basis;
    double scale = 0.0;
    for (const Vec& v : vs) scale = std::max(scale, norm2(v));
    if (scale == 0.0) return basis;
    for (Vec v : vs) {
        for (const Vec& q : basis) v -= dot(q, v) * q;
        for (const Vec& q : basis) v -= dot(q, v) * q;
        if (norm2(v) > tol * scale) basis.push_back(normalized(v));
    }
    return basis;
}

// Is span{basis} invariant under every generator, to tolerance 1e-9?
inline bool subspace_invariant(const std::vector<Vec>& basis, const std::vector<Mat>& gens, double tol = 1e-9) {
    for (const Mat& g : gens)
        for (const Vec& q : basis) {
            Vec w = g * q;
            for (const Vec& p : basis) w -= dot(p, w) * p;
            if (norm2(w) > tol * std::max(1.0, g.norm1())) return false;
        }
    return true;
}

// Smallest invariant subspace containing seed (span of algebra-basis images).
inline std::vector<Vec> invariant_orbit(const Vec& seed, const std::vector<Mat>& algebra_basis) {
    std::vector<Vec> imgs = {seed};
    for (const Mat& w : algebra_basis) imgs.push_back(w * seed);
    return orthonormal_span(imgs);
}

inline std::vector<Vec> real_eigenvectors(const Mat& a) {
    std::vector<Vec> out;
    Spectrum s = spectrum(a);
    const int n = a.dim();
    for (const auto& lam : s.eigenvalues) {
        if (std::abs(lam.imag()) > 1e-9 * std::max(1.0, a.max_abs())) continue;
        // kernel of (A - lam I) via the two smallest pivots of Gram-Schmidt on rows
        Mat m = a - lam.real() * Mat::identity(n);
        std::vector<Vec> rows;
        for (int i = 0; i < n; ++i) {
            Vec r(n);
            for (int j = 0; j < n; ++j) r[j] = m(i, j);
            rows.push_back(r);
        }
        auto rowspan = orthonormal_span(rows, 1e-8);
        // kernel = orthogonal complement of the row span
        std::vector<Vec> cand;
        for (int i = 0; i < n; ++i) cand.push_back(Vec::unit(n, i));
        for (Vec& v : cand)
            for (const Vec& q : rowspan) v -= dot(q, v) * q;
        for (const Vec& v : cand)
            if (norm2(v) > 1e-6) out.push_back(normalized(v));
    }
    return out;
}

}  // namespace detail

/// Decides irreducibility over R by spanning the associative algebra
/// generated by the generators (words up to max_word_length; 0 selects the
/// default 2 n^2). Span dimension n^2 certifies irreducible. Otherwise a
/// common invariant subspace is searched from orbit seeds and verified to
/// 1e-9; failure to extract one leaves the report inconclusive.
inline IrreducibilityReport irreducibility_check(const SwitchedSystem& sys, int max_word_length = 0) {
    const int n = sys.n;
    if (max_word_length <= 0) max_word_length = 2 * n * n;
    IrreducibilityReport rep;

    // word span as vectors in R^{n^2}
    auto flatten = [n](const Mat& m) {
        std::vector<double> f(n * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) f[i * n + j] = m(i, j);
        return f;
    };
    std::vector<Mat> span_basis;        // matrices whose flattenings are independent
    std::vector<std::vector<double>> q; // orthonormalized flattenings
    auto try_add = [&](const Mat& m) {
        std::vector<double> f = flatten(m);
        double scale = 0.0;
        for (double x : f) scale = std::max(scale, std::abs(x));
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& e : q) {
                double d = 0.0;
                for (int i = 0; i < n * n; ++i) d += e[i] * f[i];
                for (int i = 0; i < n * n; ++i) f[i] -= d * e[i];
            }
        double nf = 0.0;
        for (double x : f) nf += x * x;
        nf = std::sqrt(nf);
        if (nf <= 1e-10 * std::max(1.0, scale)) return false;
        for (double& x : f) x /= nf;
        q.push_back(std::move(f));
        span_basis.push_back(m);
        return true;
    };

    try_add(Mat::identity(n));
    std::vector<Mat> frontier = {Mat::identity(n)};
    for (int len = 1; len <= max_word_length && static_cast<int>(q.size()) < n * n; ++len) {
        std::vector<Mat> next;
        for (const Mat& w : frontier)
            for (const Mat& g : sys.generators) {
                Mat m = g * w;
                double ma = m.max_abs();
                if (ma > 0.0 && std::isfinite(ma)) m *= 1.0 / ma;  // keep words scaled
                if (try_add(m)) next.push_back(m);
            }
        if (next.empty()) break;
        frontier = std::move(next);
    }
    rep.algebra_dim = static_cast<int>(q.size());
    if (rep.algebra_dim == n * n) {
        rep.irreducible = true;
        rep.conclusive = true;
        return rep;
    }

    // Candidate invariant subspaces: orbits of a deterministic pseudo-random
    // vector, of real eigenvectors of each generator and of generator means,
    // and hyperplane witnesses from the transposed family.
    std::vector<Vec> seeds;
    Rng rng(0x5eed5eedULL);
    for (int k = 0; k < 4; ++k) seeds.push_back(random_unit_vec(rng, n));
    Mat mean(n);
    for (const Mat& g : sys.generators) mean += g;
    mean *= 1.0 / static_cast<double>(sys.generators.size());
    for (const Mat& g : sys.generators)
        for (const Vec& v : detail::real_eigenvectors(g)) seeds.push_back(v);
    for (const Vec& v : detail::real_eigenvectors(mean)) seeds.push_back(v);

    for (const Vec& seed : seeds) {
        auto orbit = detail::invariant_orbit(seed, span_basis);
        if (static_cast<int>(orbit.size()) < n && !orbit.empty() &&
            detail::subspace_invariant(orbit, sys.generators)) {
            rep.irreducible = false;
            rep.conclusive = true;
            rep.witness_subspace = orbit;
            return rep;
        }
    }
    // transpose route: an invariant subspace W for the transposes gives the
    // invariant subspace W^perp for the original family
    std::vector<Mat> tgens;
    for (const Mat& g : sys.generators) tgens.push_back(g.transpose());
    std::vector<Mat> tbasis;
    for (const Mat& m : span_basis) tbasis.push_back(m.transpose());
    std::vector<Vec> tseeds;
    for (const Mat& g : tgens)
        for (const Vec& v : detail::real_eigenvectors(g)) tseeds.push_back(v);
    for (const Vec& seed : tseeds) {
        auto torbit = detail::invariant_orbit(seed, tbasis);
        if (torbit.empty() || static_cast<int>(torbit.size()) >= n) continue;
        std::vector<Vec> comp;
        for (int i = 0; i < n; ++i) comp.push_back(Vec::unit(n, i));
        for (Vec& v : comp)
            for (const Vec& w : torbit) v -= dot(w, v) * w;
        auto perp = detail::orthonormal_span(comp);
        if (!perp.empty() && static_cast<int>(perp.size()) < n &&
            detail::subspace_invariant(perp, sys.generators)) {
            rep.irreducible = false;
            rep.conclusive = true;
            rep.witness_subspace = perp;
            return rep;
        }
    }

    rep.irreducible = false;  // span deficient but no verified witness
    rep.conclusive = false;
    return rep;
}

// ---------------------------------------------------------------------------
// pair validation

struct ValidationReport {
    std::vector<bool> hurwitz_vertices;
    bool controllable_b = false;
    bool controllable_c = false;
    double detB_value = 0.0;  // 1 + b^T (A^T)^-1 c
    IrreducibilityReport irreducible;
    std::vector<double> u_grid;
    std::vector<double> hull_abscissa_profile;  // u -> abscissa(A + u b c^T)
    std::vector<double> delta_profile;          // u -> det(A + u b c^T)
    bool passed = false;
};

/// Structural checks for a candidate pair (A, b, c): both vertices Hurwitz,
/// (A,b) and (A^T,c) controllable, 1 + b^T(A^T)^{-1}c > 0, plus sampled
/// abscissa/determinant profiles over u in [0,1]. Does not check rho = 0;
/// the Lyapunov exponent is estimated separately.
inline ValidationReport validate_pair(const Mat& A, const Vec& b, const Vec& c, int u_grid_size = 101) {
    if (A.dim() != 3 || b.size() != 3 || c.size() != 3)
        throw DimensionError("validate_pair: expected 3x3 A with 3-vectors b, c");
    if (norm2(b) == 0.0 || norm2(c) == 0.0) throw std::domain_error("validate_pair: b and c must be nonzero");
    if (u_grid_size < 2) u_grid_size = 2;

    ValidationReport rep;
    Mat A2 = A + Mat::outer(b, c);
    rep.hurwitz_vertices = {spectral_abscissa(A) < 0.0, spectral_abscissa(A2) < 0.0};
    rep.controllable_b = rank_of_columns({b, A * b, A * (A * b)}) == 3;
    Mat At = A.transpose();
    rep.controllable_c = rank_of_columns({c, At * c, At * (At * c)}) == 3;
    rep.detB_value = 1.0 + dot(b, solve_linear(At, c));

    for (int k = 0; k < u_grid_size; ++k) {
        double u = static_cast<double>(k) / (u_grid_size - 1);
        Mat Au = A + u * Mat::outer(b, c);
        rep.u_grid.push_back(u);
        rep.hull_abscissa_profile.push_back(spectral_abscissa(Au));
        rep.delta_profile.push_back(determinant(Au));
    }
    rep.irreducible = irreducibility_check(SwitchedSystem::from_pair(A, b, c));

    rep.passed = rep.hurwitz_vertices[0] && rep.hurwitz_vertices[1] && rep.controllable_b &&
                 rep.controllable_c && rep.detB_value > 0.0;
    return rep;
}

/// The antipodal base points of the pair geometry: x_star spans the kernel of
/// {c, A^T c}^T with sign fixed by c^T A^2 x_star > 0; l_star is the dual
/// analogue built from {b, A b}.
inline PairGeometry compute_pair_geometry(const BarabanovPairData& pair) {
    const Mat& A = pair.A;
    Vec atc = A.transpose() * pair.c;
    Vec ab = A * pair.b;
    if (norm2(cross3(pair.c, atc)) < 1e-10 * std::max(1.0, norm2(pair.c) * norm2(atc)))
        throw std::domain_error("compute_pair_geometry: c and A^T c are collinear (pair not controllable)");
    if (norm2(cross3(pair.b, ab)) < 1e-10 * std::max(1.0, norm2(pair.b) * norm2(ab)))
        throw std::domain_error("compute_pair_geometry: b and A b are collinear (pair not controllable)");
    PairGeometry g;
    g.x_star = normalized(cross3(pair.c, atc));
    if (dot(pair.c, A * (A * g.x_star)) < 0.0) g.x_star = -g.x_star;
    g.l_star = normalized(cross3(pair.b, ab));
    if (dot(g.l_star, A * (A * pair.b)) < 0.0) g.l_star = -g.l_star;
    return g;
}

}  // namespace barnorm
