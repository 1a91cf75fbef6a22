#pragma once

// Periodic bang-bang orbit machinery for rank-one pairs: alternating
// exponential products, the determinant function det(M - I), damped-Newton
// shooting for cycle closure, Floquet audits, catalog ordering, attractivity
// probes, pseudo-arclength family continuation, and the multi-start survey.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "barnorm/diagnostics.hpp"
#include "barnorm/extremal.hpp"
#include "barnorm/linalg.hpp"
#include "barnorm/model.hpp"
#include "barnorm/norm_field.hpp"

namespace barnorm {

struct CycleConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CycleAuditError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class StartGenerator { AFirst, PerturbedFirst };

/// M(t1,t2,t3,t4) = e^{t4 A2} e^{t3 A1} e^{t2 A2} e^{t1 A1}; start_generator
/// selects which vertex plays A1.
inline Mat monodromy_matrix(const BarabanovPairData& pair, const std::vector<double>& durations,
                            StartGenerator start = StartGenerator::AFirst) {
    Mat A1 = (start == StartGenerator::AFirst) ? pair.A : pair.perturbed();
    Mat A2 = (start == StartGenerator::AFirst) ? pair.perturbed() : pair.A;
    Mat M = Mat::identity(3);
    for (std::size_t k = 0; k < durations.size(); ++k) {
        if (durations[k] < 0.0) throw std::domain_error("monodromy_matrix: negative duration");
        M = expm((k % 2 == 0) ? A1 : A2, durations[k]) * M;
    }
    return M;
}

inline double f_det(const BarabanovPairData& pair, const std::vector<double>& durations,
                    StartGenerator start = StartGenerator::AFirst) {
    return determinant(monodromy_matrix(pair, durations, start) - Mat::identity(3));
}

// ---------------------------------------------------------------------------
// small dense helpers (shooting systems outgrow the 4x4 fixed matrices)

namespace densela {

using DMat = std::vector<std::vector<double>>;

inline std::vector<double> solve(DMat a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        if (std::abs(a[col][col]) < 1e-300) throw SingularMatrixError("densela::solve: singular system");
        for (int r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            for (int j = col; j < n; ++j) a[r][j] -= f * a[col][j];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
        x[i] = s / a[i][i];
    }
    return x;
}

// Jacobi eigensolver for a symmetric matrix; returns eigenvalues ascending
// with matching eigenvectors as columns.
inline void sym_eig(DMat a, std::vector<double>& eigval, DMat& eigvec) {
    const int n = static_cast<int>(a.size());
    eigvec.assign(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) eigvec[i][i] = 1.0;
    for (int sweep = 0; sweep < 128; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = eigvec[k][p], vkq = eigvec[k][q];
                    eigvec[k][p] = c * vkp - s * vkq;
                    eigvec[k][q] = s * vkp + c * vkq;
                }
            }
    }
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) { return a[i][i] < a[j][j]; });
    eigval.resize(n);
    DMat v2(n, std::vector<double>(n));
    for (int j = 0; j < n; ++j) {
        eigval[j] = a[order[j]][order[j]];
        for (int i = 0; i < n; ++i) v2[i][j] = eigvec[i][order[j]];
    }
    eigvec = v2;
}

// Levenberg-Marquardt least squares on a residual map.
struct LMResult {
    std::vector<double> z;
    double residual_norm;
    int iterations;
    bool converged;
};

inline LMResult levenberg_marquardt(const std::function<std::vector<double>(const std::vector<double>&)>& F,
                                    std::vector<double> z0, const std::vector<double>& fd_scale,
                                    double tol, int max_iters = 80) {
    auto norm = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    std::vector<double> f = F(z0);
    double fn = norm(f);
    double lambda = 1e-6;
    int it = 0;
    for (; it < max_iters && fn > tol; ++it) {
        const int nz = static_cast<int>(z0.size());
        const int nf = static_cast<int>(f.size());
        DMat J(nf, std::vector<double>(nz));
        for (int j = 0; j < nz; ++j) {
            double h = 1e-6 * fd_scale[j];
            std::vector<double> zp = z0;
            zp[j] += h;
            std::vector<double> fp = F(zp);
            for (int i = 0; i < nf; ++i) J[i][j] = (fp[i] - f[i]) / h;
        }
        DMat JtJ(nz, std::vector<double>(nz, 0.0));
        std::vector<double> Jtf(nz, 0.0);
        for (int a = 0; a < nz; ++a) {
            for (int b = 0; b < nz; ++b)
                for (int i = 0; i < nf; ++i) JtJ[a][b] += J[i][a] * J[i][b];
            for (int i = 0; i < nf; ++i) Jtf[a] += J[i][a] * f[i];
        }
        bool stepped = false;
        for (int tries = 0; tries < 12; ++tries) {
            DMat M = JtJ;
            for (int d = 0; d < nz; ++d) M[d][d] += lambda * (JtJ[d][d] + 1e-12);
            std::vector<double> rhs(nz);
            for (int d = 0; d < nz; ++d) rhs[d] = -Jtf[d];
            std::vector<double> dz;
            try {
                dz = solve(M, rhs);
            } catch (const SingularMatrixError&) {
                lambda *= 10.0;
                continue;
            }
            std::vector<double> zn = z0;
            for (int d = 0; d < nz; ++d) zn[d] += dz[d];
            std::vector<double> fnew = F(zn);
            double fnn = norm(fnew);
            if (fnn < fn) {
                z0 = std::move(zn);
                f = std::move(fnew);
                fn = fnn;
                lambda = std::max(1e-12, lambda * 0.3);
                stepped = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!stepped) break;
    }
    return {z0, fn, it, fn <= tol};
}

}  // namespace densela

// ---------------------------------------------------------------------------
// cycle data

enum class SideVerdict { Attract, Repel, Unknown };

struct Cycle {
    std::vector<double> durations;  // 2 or 4 bang durations
    double period = 0.0;
    Vec base_x, base_l;
    Mat monodromy;
    Spectrum floquet;
    int bang_count = 0;
    StartGenerator start = StartGenerator::AFirst;
    std::vector<ZeroFactor> pattern;  // factor vanishing at each switch; pattern[0] = C
    double order_key = 0.0;
    SideVerdict inner = SideVerdict::Unknown, outer = SideVerdict::Unknown;
    double residual = 0.0;
    bool family_member = false;
    bool antiperiodic = false;   // solved on the half-period chart
    double multiplier = 1.0;     // radial multiplier of the solved chart (1 or -1 at exact tuning)
};

struct CycleCandidate {
    std::vector<double> durations;
    Vec base_x, base_l;
    StartGenerator start = StartGenerator::AFirst;
    std::vector<ZeroFactor> pattern;
    double residual = 1e300;
};

struct CycleTolerances {
    double newton_tol = 1e-10;
    double audit_residual = 1e-8;
    double eig1_margin = 1e-7;
    double modulus_slack = 1e-7;
    double dedup_tol = 1e-5;
    double exclusion_radius = 1e-3;
    double rank_tol = 1e-6;  // family detection threshold on the reduced Jacobian
};

namespace detail {

// Cycle closure is solved with a FREE radial multiplier mu: at an extremal
// cycle the multiplier is stationary with respect to the bang durations (the
// determinant function has a critical point on its zero set there), so any
// formulation that pins the eigenvalue to 1 outright has a singular Jacobian
// at the very solution it seeks. With mu free the system is square and
// regular; |mu - 1| is then an audit quantity certifying the rho = 0 tuning.
//
// T/2-antiperiodic cycles are solved on the half-period chart (H - mu)x = 0
// with mu near -1: on the full chart their second half duplicates the first
// half's switch conditions, which degrades the rank.
struct ShootingSystem {
    const BarabanovPairData& pair;
    const NormField& field;
    int nbangs;                        // 2 or 4
    StartGenerator start;
    std::vector<ZeroFactor> pattern;   // length nbangs, pattern[0] == C
    bool antiperiodic = false;         // 4-bang with t3=t1, t4=t2, Hx=-x, mu ~ -1

    int nfree() const { return antiperiodic ? 2 : nbangs; }
    // unknowns z = (t_1..t_nfree, x(3), l(3), mu)
    int dim() const { return nfree() + 7; }
    int mu_index() const { return nfree() + 6; }
    double target_mu() const { return antiperiodic ? -1.0 : 1.0; }

    std::vector<double> residual(const std::vector<double>& z) const {
        const int nf = nfree();
        std::vector<double> F;
        F.reserve(nf + 9);
        Vec x(3), l(3);
        for (int i = 0; i < 3; ++i) {
            x[i] = z[nf + i];
            l[i] = z[nf + 3 + i];
        }
        const double mu = z[nf + 6];
        Mat M = Mat::identity(3), S = Mat::identity(3);
        Vec xc = x, lc = l;
        for (int k = 0; k < nf; ++k) {
            double u0 = (start == StartGenerator::AFirst) ? 0.0 : 1.0;
            double u = (k % 2 == 0) ? u0 : 1.0 - u0;
            Mat G = pair.generator(u);
            double tk = std::max(0.0, z[k]);
            Mat E = expm(G, tk);
            Mat Einv = expm(-1.0 * G.transpose(), tk);
            M = E * M;
            S = Einv * S;
            xc = E * xc;
            lc = Einv * lc;
            if (k + 1 < nf) {
                // switch condition at the end of bang k (switch index k+1)
                if (pattern[k + 1] == ZeroFactor::C)
                    F.push_back(dot(pair.c, xc));
                else
                    F.push_back(dot(pair.b, lc));
            }
        }
        // l^T x is a first integral of the coupled flow, so the adjoint's
        // radial multiplier is 1/mu
        Vec mx = M * x - mu * x;
        Vec sl = S * l - (1.0 / mu) * l;
        for (int i = 0; i < 3; ++i) F.push_back(mx[i]);
        for (int i = 0; i < 3; ++i) F.push_back(sl[i]);
        // the c-switch closing the (half) period duplicates c^T x = 0 by
        // (anti)periodicity, so no extra condition is appended there
        F.push_back(dot(pair.c, x));
        F.push_back(dot(x, x) - 1.0);
        F.push_back(dot(l, x) - 1.0);
        return F;
    }

    std::vector<double> pack(const CycleCandidate& cand, double mu) const {
        std::vector<double> z(dim());
        for (int k = 0; k < nfree(); ++k) z[k] = cand.durations[k];
        for (int i = 0; i < 3; ++i) {
            z[nfree() + i] = cand.base_x[i];
            z[nfree() + 3 + i] = cand.base_l[i];
        }
        z[mu_index()] = mu;
        return z;
    }
    void unpack(const std::vector<double>& z, CycleCandidate& cand) const {
        cand.durations.assign(z.begin(), z.begin() + nfree());
        if (antiperiodic) {
            cand.durations.push_back(z[0]);
            cand.durations.push_back(z[1]);
        }
        for (int i = 0; i < 3; ++i) {
            cand.base_x[i] = z[nfree() + i];
            cand.base_l[i] = z[nfree() + 3 + i];
        }
    }
    std::vector<double> fd_scales(const std::vector<double>& z) const {
        std::vector<double> s(dim(), 1.0);
        for (int k = 0; k < nfree(); ++k) s[k] = std::max(0.05, std::abs(z[k]));
        return s;
    }
};

// Directional cycles (closed orbits of the projectivized coupled flow with a
// free radial multiplier) form a one-parameter curve; the extremal cycle is
// the point of maximal multiplier on it, where d(mu)/ds = 0. These helpers
// walk that curve.

inline densela::DMat shooting_jacobian(const ShootingSystem& sys, const std::vector<double>& z) {
    std::vector<double> f0 = sys.residual(z);
    auto scales = sys.fd_scales(z);
    const int nz = static_cast<int>(z.size());
    const int nf = static_cast<int>(f0.size());
    densela::DMat J(nf, std::vector<double>(nz));
    for (int j = 0; j < nz; ++j) {
        double h = 1e-6 * scales[j];
        std::vector<double> zp = z;
        zp[j] += h;
        std::vector<double> fp = sys.residual(zp);
        for (int i = 0; i < nf; ++i) J[i][j] = (fp[i] - f0[i]) / h;
    }
    return J;
}

// Right-singular directions of J sorted by singular value (ascending).
inline void null_directions(const densela::DMat& J, std::vector<double>& sv, densela::DMat& V) {
    const int nz = static_cast<int>(J[0].size());
    densela::DMat JtJ(nz, std::vector<double>(nz, 0.0));
    for (int a = 0; a < nz; ++a)
        for (int b = 0; b < nz; ++b)
            for (std::size_t i = 0; i < J.size(); ++i) JtJ[a][b] += J[i][a] * J[i][b];
    densela::sym_eig(JtJ, sv, V);
    for (double& s : sv) s = std::sqrt(std::max(0.0, s));
}

// One pseudo-arclength step along the directional-cycle curve; empty on
// corrector failure.
inline std::optional<std::vector<double>> curve_step(const ShootingSystem& sys, const std::vector<double>& z,
                                                     const std::vector<double>& tangent, double ds,
                                                     double tol) {
    std::vector<double> zpred = z;
    for (std::size_t i = 0; i < z.size(); ++i) zpred[i] += ds * tangent[i];
    auto Faug = [&](const std::vector<double>& zz) {
        std::vector<double> f = sys.residual(zz);
        double cc = 0.0;
        for (std::size_t i = 0; i < zz.size(); ++i) cc += tangent[i] * (zz[i] - zpred[i]);
        f.push_back(cc);
        return f;
    };
    auto lm = densela::levenberg_marquardt(Faug, zpred, sys.fd_scales(zpred), tol, 60);
    if (!lm.converged) return std::nullopt;
    return lm.z;
}

// Closure residual of the spec's full-period system at a converged candidate:
// (M - I)x, (S - I)l, the chart and normalization conditions, and the
// interior switch conditions. The free-multiplier solve drives everything
// except the (M - I) components to zero; those measure |mu - 1|, i.e. how
// exactly the pair sits on the stability boundary.
inline double closure_residual(const BarabanovPairData& pair, const NormField& field,
                               const CycleCandidate& cand) {
    const int nb = static_cast<int>(cand.durations.size());
    Mat M = Mat::identity(3), S = Mat::identity(3);
    Vec xc = cand.base_x, lc = cand.base_l;
    double ss = 0.0;
    for (int k = 0; k < nb; ++k) {
        double u0 = (cand.start == StartGenerator::AFirst) ? 0.0 : 1.0;
        double u = (k % 2 == 0) ? u0 : 1.0 - u0;
        Mat G = pair.generator(u);
        Mat E = expm(G, cand.durations[k]);
        Mat Einv = expm(-1.0 * G.transpose(), cand.durations[k]);
        M = E * M;
        S = Einv * S;
        xc = E * xc;
        lc = Einv * lc;
        if (k + 1 < nb) {
            double cond = (cand.pattern[k + 1] == ZeroFactor::C) ? dot(pair.c, xc) : dot(pair.b, lc);
            ss += cond * cond;
        }
    }
    Vec mx = M * cand.base_x - cand.base_x;
    Vec sl = S * cand.base_l - cand.base_l;
    ss += dot(mx, mx) + dot(sl, sl);
    double e1 = dot(pair.c, cand.base_x);
    double e2 = field.query(cand.base_x) - 1.0;
    double e3 = dot(cand.base_l, cand.base_x) - 1.0;
    ss += e1 * e1 + e2 * e2 + e3 * e3;
    return std::sqrt(ss);
}

// Normalize a candidate to the base convention: unit field value, l^T x = 1;
// requires c^T A x(0) > 0 at the anchor (caller's responsibility).
inline void normalize_candidate(const NormField& field, CycleCandidate& cand) {
    double v = field.query(cand.base_x);
    cand.base_x *= 1.0 / v;
    double lx = dot(cand.base_l, cand.base_x);
    if (std::abs(lx) < 1e-300) throw CycleConvergenceError("cycle candidate has l orthogonal to x");
    cand.base_l *= 1.0 / lx;
}

}  // namespace detail

/// Extracts a cycle seed from the asymptotic tail of a converged extremal
/// run: locates the last c-switch with c^T A x > 0, reads the preceding
/// period's switch pattern, and checks it repeats. Empty when the tail has
/// not settled.
inline std::optional<CycleCandidate> seed_from_path(const BarabanovPairData& pair, const ExtremalPath& path,
                                                    double rel_tol = 0.10) {
    const auto& ev = path.switch_times;
    if (ev.size() < 12) return std::nullopt;
    ExtremalEvaluator eval(pair, path);

    // candidate anchors: late transversal c-switches with positive c^T A x
    for (int a = static_cast<int>(ev.size()) - 1; a >= 8; --a) {
        if (ev[a].which != ZeroFactor::C && ev[a].which != ZeroFactor::Both) continue;
        Vec xa = eval.state(ev[a].time);
        if (dot(pair.c, pair.A * xa) <= 0.0) continue;
        for (int nb : {4, 2}) {
            if (a - 2 * nb < 0) continue;
            std::vector<double> d1, d2;
            for (int k = a - nb; k < a; ++k) d1.push_back(ev[k + 1].time - ev[k].time);
            for (int k = a - 2 * nb; k < a - nb; ++k) d2.push_back(ev[k + 1].time - ev[k].time);
            bool match = true;
            double scale = 0.0;
            for (int k = 0; k < nb; ++k) scale = std::max(scale, d1[k]);
            for (int k = 0; k < nb; ++k)
                if (std::abs(d1[k] - d2[k]) > rel_tol * scale) match = false;
            if (!match) continue;

            CycleCandidate cand;
            cand.base_x = Vec(3);
            cand.base_l = Vec(3);
            double t0 = ev[a - nb].time;
            cand.base_x = eval.state(t0);
            cand.base_l = eval.adjoint(t0);
            if (dot(pair.c, pair.A * cand.base_x) <= 0.0) continue;
            cand.durations = d1;
            cand.start = eval.control(t0 + 1e-7 * scale) < 0.5 ? StartGenerator::AFirst
                                                               : StartGenerator::PerturbedFirst;
            cand.pattern.clear();
            for (int k = 0; k < nb; ++k) cand.pattern.push_back(ev[a - nb + k].which);
            if (cand.pattern[0] == ZeroFactor::Both) cand.pattern[0] = ZeroFactor::C;
            if (cand.pattern[0] != ZeroFactor::C) continue;
            return cand;
        }
    }
    return std::nullopt;
}

/// Damped-Newton (Levenberg-Marquardt) shooting from a seed: unknowns are the
/// bang durations plus x on the chart c^T x = 0 with field normalization and
/// l with l^T x = 1; equations are the closure (M - I)x = 0, adjoint closure,
/// the interior switching conditions, and the normalizations. Zero Newton
/// steps are taken when the seed already satisfies the tolerance.
inline Cycle find_cycle(const BarabanovPairData& pair, const NormField& field, CycleCandidate seed,
                        double newton_tol = 1e-10, const CycleTolerances& tols = {}) {
    if (seed.durations.size() != 2 && seed.durations.size() != 4)
        throw std::domain_error("find_cycle: seeds carry 2 or 4 bang durations");
    if (seed.pattern.empty()) {
        seed.pattern.assign(seed.durations.size(), ZeroFactor::C);
        if (seed.durations.size() == 4) {
            // default alternating pattern c,b,c,b
            seed.pattern = {ZeroFactor::C, ZeroFactor::B, ZeroFactor::C, ZeroFactor::B};
        } else {
            seed.pattern = {ZeroFactor::C, ZeroFactor::B};
        }
    }
    // normalize the seed to the Euclidean chart used by the solver
    {
        double nx = norm2(seed.base_x);
        if (nx == 0.0) throw CycleConvergenceError("find_cycle: zero base point");
        seed.base_x *= 1.0 / nx;
        double lx = dot(seed.base_l, seed.base_x);
        if (std::abs(lx) < 1e-300) throw CycleConvergenceError("cycle candidate has l orthogonal to x");
        seed.base_l *= 1.0 / lx;
    }
    // prefer the half-period chart when the seed looks T/2-antiperiodic; the
    // full chart duplicates the second half's switch conditions there
    bool antiperiodic = false;
    if (seed.durations.size() == 4 && seed.pattern.size() == 4 && seed.pattern[1] == seed.pattern[3] &&
        seed.pattern[0] == seed.pattern[2]) {
        double scale = 0.0;
        for (double t : seed.durations) scale = std::max(scale, t);
        antiperiodic = std::abs(seed.durations[2] - seed.durations[0]) < 0.2 * scale &&
                       std::abs(seed.durations[3] - seed.durations[1]) < 0.2 * scale;
    }
    detail::ShootingSystem sys{pair,       field,        static_cast<int>(seed.durations.size()),
                               seed.start, seed.pattern, antiperiodic};
    auto F = [&sys](const std::vector<double>& z) { return sys.residual(z); };
    std::vector<double> z0 = sys.pack(seed, sys.target_mu());
    auto lm = densela::levenberg_marquardt(F, z0, sys.fd_scales(z0), newton_tol);
    if (!lm.converged && antiperiodic) {
        // the seed was not antiperiodic after all: retry on the full chart
        antiperiodic = false;
        sys.antiperiodic = false;
        z0 = sys.pack(seed, sys.target_mu());
        lm = densela::levenberg_marquardt(F, z0, sys.fd_scales(z0), newton_tol);
    }
    if (!lm.converged)
        throw CycleConvergenceError("find_cycle: shooting did not converge (residual " +
                                    std::to_string(lm.residual_norm) + ")");

    // the solve landed somewhere on the directional-cycle curve; walk the
    // curve to the multiplier optimum, which is the extremal cycle
    {
        const int mu_i = sys.mu_index();
        const double sign = sys.target_mu();
        std::vector<double> z = lm.z;
        double ds = 1e-3;
        for (int it = 0; it < 60; ++it) {
            std::vector<double> sv;
            densela::DMat V;
            detail::null_directions(detail::shooting_jacobian(sys, z), sv, V);
            std::vector<double> tan(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) tan[i] = V[i][0];
            auto zp = detail::curve_step(sys, z, tan, ds, newton_tol);
            auto zm = detail::curve_step(sys, z, tan, -ds, newton_tol);
            if (!zp || !zm) {
                ds *= 0.5;
                if (ds < 1e-9) break;
                continue;
            }
            double g0 = sign * z[mu_i], gp = sign * (*zp)[mu_i], gm = sign * (*zm)[mu_i];
            double g1 = (gp - gm) / (2.0 * ds);
            double g2 = (gp - 2.0 * g0 + gm) / (ds * ds);
            if (std::abs(g1) < 1e-15 && g2 < 0.0) break;
            double step;
            if (g2 < -1e-12) {
                step = -g1 / g2;  // Newton toward the maximum
            } else {
                step = (g1 > 0 ? 1.0 : -1.0) * 10.0 * ds;  // climb while curvature is flat
            }
            step = std::clamp(step, -0.25, 0.25);
            auto zn = detail::curve_step(sys, z, tan, step, newton_tol);
            if (!zn) {
                ds *= 0.5;
                if (ds < 1e-9) break;
                continue;
            }
            bool done = std::abs(step) < 1e-10;
            z = *zn;
            if (done) break;
        }
        lm.z = z;
    }
    CycleCandidate polished = seed;
    sys.unpack(lm.z, polished);
    for (double t : polished.durations)
        if (t < 0.0) throw CycleConvergenceError("find_cycle: converged to a negative bang duration");
    // restore the field normalization (a linear rescale of x and l leaves
    // every closure and switching equation satisfied)
    double s = field.query(polished.base_x);
    polished.base_x *= 1.0 / s;
    polished.base_l *= 1.0 / dot(polished.base_l, polished.base_x);
    lm.residual_norm = detail::closure_residual(pair, field, polished);

    Cycle cyc;
    cyc.durations = polished.durations;
    cyc.period = 0.0;
    for (double t : cyc.durations) cyc.period += t;
    cyc.base_x = polished.base_x;
    cyc.base_l = polished.base_l;
    cyc.start = polished.start;
    cyc.pattern = polished.pattern;
    cyc.monodromy = monodromy_matrix(pair, cyc.durations, cyc.start);
    cyc.floquet = spectrum(cyc.monodromy);
    cyc.bang_count = static_cast<int>(cyc.durations.size());
    cyc.residual = lm.residual_norm;
    cyc.antiperiodic = antiperiodic;
    cyc.multiplier = lm.z[sys.mu_index()];
    return cyc;
}

// ---------------------------------------------------------------------------
// audits

struct FloquetVerdict {
    Spectrum floquet;
    bool pass = true;
    bool family_flag = false;
    std::vector<std::string> failures;
};

/// Monodromy spectrum checks: closure of the base point, a simple eigenvalue
/// at 1 with the stated separation margin, remaining multipliers inside (or
/// on, for family members) the unit circle, and the Liouville determinant
/// identity.
inline FloquetVerdict floquet_audit(const BarabanovPairData& pair, const Cycle& cycle,
                                    const CycleTolerances& tols = {}) {
    FloquetVerdict v;
    v.floquet = spectrum(cycle.monodromy);
    auto fail = [&v](const std::string& msg) {
        v.pass = false;
        v.failures.push_back(msg);
    };

    Vec closure = cycle.monodromy * cycle.base_x - cycle.base_x;
    if (norm2(closure) > tols.audit_residual)
        fail("(M-I) base_x = " + std::to_string(norm2(closure)) + " exceeds " +
             std::to_string(tols.audit_residual));

    // eigenvalue nearest 1 and its separation
    int i1 = 0;
    double d1 = 1e300;
    for (std::size_t i = 0; i < v.floquet.eigenvalues.size(); ++i) {
        double d = std::abs(v.floquet.eigenvalues[i] - std::complex<double>(1.0, 0.0));
        if (d < d1) {
            d1 = d;
            i1 = static_cast<int>(i);
        }
    }
    if (d1 > tols.eig1_margin) fail("no eigenvalue within " + std::to_string(tols.eig1_margin) + " of 1");
    double d2 = 1e300;
    for (std::size_t i = 0; i < v.floquet.eigenvalues.size(); ++i) {
        if (static_cast<int>(i) == i1) continue;
        d2 = std::min(d2, std::abs(v.floquet.eigenvalues[i] - std::complex<double>(1.0, 0.0)));
    }
    if (d2 <= tols.eig1_margin) fail("eigenvalue 1 is not simple within the margin");

    for (std::size_t i = 0; i < v.floquet.eigenvalues.size(); ++i) {
        if (static_cast<int>(i) == i1) continue;
        double mod = std::abs(v.floquet.eigenvalues[i]);
        if (mod > 1.0 + tols.modulus_slack) fail("nontrivial multiplier has modulus " + std::to_string(mod));
        if (mod >= 1.0 - tols.modulus_slack) {
            v.family_flag = true;
            if (!cycle.family_member) fail("isolated cycle carries a unit-modulus multiplier");
        }
    }

    // Liouville
    double trsum = 0.0;
    for (std::size_t k = 0; k < cycle.durations.size(); ++k) {
        double u0 = (cycle.start == StartGenerator::AFirst) ? 0.0 : 1.0;
        double u = (k % 2 == 0) ? u0 : 1.0 - u0;
        trsum += cycle.durations[k] * pair.generator(u).trace();
    }
    double detM = determinant(cycle.monodromy);
    if (std::abs(detM - std::exp(trsum)) > 1e-8 * std::abs(std::exp(trsum)))
        fail("Liouville identity violated: det M = " + std::to_string(detM));
    return v;
}

struct OrbitAudit {
    bool pass = true;
    std::vector<std::string> failures;
    int b_sign_changes = 0, c_sign_changes = 0;
    double min_xstar_distance = 1e300;
    double min_lstar_distance = 1e300;
    bool antiperiodic = false;
};

/// Reconstructs one period of the orbit through the coupled flow and checks
/// the switching-count, exclusion, and central-symmetry invariants.
inline OrbitAudit orbit_audit(const BarabanovPairData& pair, const Cycle& cycle, const PairGeometry& geom,
                              const CycleTolerances& tols = {}) {
    OrbitAudit audit;
    auto fail = [&audit](const std::string& m) {
        audit.pass = false;
        audit.failures.push_back(m);
    };
    ExtremalOptions opt;
    opt.sample_step = cycle.period / 256.0;
    ExtremalPath path;
    try {
        path = integrate_extremal(pair, cycle.base_x, cycle.base_l, cycle.period * 1.001, opt);
    } catch (const DegenerateZeroError& e) {
        fail(std::string("orbit reconstruction hit a degenerate zero: ") + e.what());
        return audit;
    }
    // the base point sits on a c-switch; counting over (0, T] picks up its
    // periodic copy at T so each factor shows its two zeros per period
    auto counts = sign_change_stats(path, cycle.period * 1e-6, std::min(path.end_time, cycle.period * (1.0 + 1e-6)));
    audit.b_sign_changes = counts.first;
    audit.c_sign_changes = counts.second;
    if (counts.first != 2 || counts.second != 2)
        fail("per-factor sign changes per period are (" + std::to_string(counts.first) + "," +
             std::to_string(counts.second) + "), expected (2,2)");

    bool hits_minus = false;
    for (std::size_t k = 0; k < path.x_states.size(); ++k) {
        Vec xd = normalized(path.x_states[k]);
        double dx = std::min(norm2(xd - geom.x_star), norm2(xd + geom.x_star));
        audit.min_xstar_distance = std::min(audit.min_xstar_distance, dx);
        Vec ld = normalized(path.l_states[k]);
        double dl = std::min(norm2(ld - geom.l_star), norm2(ld + geom.l_star));
        audit.min_lstar_distance = std::min(audit.min_lstar_distance, dl);
        if (norm2(path.x_states[k] + cycle.base_x) < tols.dedup_tol) hits_minus = true;
    }
    if (audit.min_xstar_distance <= tols.exclusion_radius)
        fail("orbit passes within the exclusion radius of +-x_star");
    if (audit.min_lstar_distance <= tols.exclusion_radius)
        fail("adjoint orbit passes within the exclusion radius of +-l_star");

    if (hits_minus) {
        // central symmetry: the orbit must then be T/2-antiperiodic
        audit.antiperiodic = true;
        ExtremalEvaluator eval(pair, path);
        double half = 0.5 * cycle.period;
        for (double frac : {0.1, 0.35, 0.6, 0.85}) {
            double t = frac * half;
            Vec err = eval.state(t + half) + eval.state(t);
            if (norm2(err) > 1e-7 * std::max(1.0, norm2(eval.state(t)))) {
                fail("orbit meets -orbit but is not T/2-antiperiodic");
                audit.antiperiodic = false;
                break;
            }
        }
    }
    return audit;
}

// ---------------------------------------------------------------------------
// ordering and attractivity

/// order_key: angular position in the plane c^T x = 0 measured from x_star,
/// oriented so the arc with c^T A x > 0 corresponds to angles in (0, pi).
inline double cycle_order_key(const Cycle& cycle, const BarabanovPairData& pair, const PairGeometry& geom) {
    Vec e2 = normalized(cross3(pair.c, geom.x_star));
    if (dot(pair.c, pair.A * e2) < 0.0) e2 = -e2;
    Vec xd = normalized(cycle.base_x);
    if (std::abs(dot(pair.c, xd)) > 1e-6)
        throw CycleAuditError("cycle_order_key: base point is off the c-chart (no crossing of the arc)");
    double key = std::atan2(dot(e2, xd), dot(geom.x_star, xd));
    if (key < 0.0) key += M_PI;  // antipodal representative
    return key;
}

/// Sorted, dedupped catalog with order keys assigned.
inline std::vector<Cycle> classify_and_order(std::vector<Cycle> cycles, const BarabanovPairData& pair,
                                             const PairGeometry& geom, const NormField& field,
                                             const CycleTolerances& tols = {}) {
    for (Cycle& c : cycles) c.order_key = cycle_order_key(c, pair, geom);
    std::sort(cycles.begin(), cycles.end(), [](const Cycle& a, const Cycle& b) { return a.order_key < b.order_key; });
    std::vector<Cycle> out;
    for (const Cycle& c : cycles) {
        bool dup = false;
        for (const Cycle& k : out) {
            if (k.durations.size() != c.durations.size()) continue;
            double dd = 0.0;
            for (std::size_t i = 0; i < c.durations.size(); ++i)
                dd = std::max(dd, std::abs(c.durations[i] - k.durations[i]));
            double dx = std::min(norm2(c.base_x - k.base_x), norm2(c.base_x + k.base_x));
            if (dd < tols.dedup_tol && dx < tols.dedup_tol) dup = true;
        }
        if (!dup) out.push_back(c);
    }
    (void)field;
    return out;
}

/// Launches extremal probes from small offsets on both sides of the cycle's
/// base point along the c-chart arc and watches whether successive returns
/// approach or leave the cycle. Offsets below the field resolution return
/// Unknown rather than a guess.
inline std::pair<SideVerdict, SideVerdict> attractivity(const BarabanovPairData& pair, const NormField& field,
                                                        const Cycle& cycle, std::vector<double> probe_offsets = {},
                                                        int max_returns = 40) {
    // default offsets sit above the field resolution, else contraction is
    // unobservable and the verdict must stay Unknown
    if (probe_offsets.empty())
        probe_offsets = {6.0 * field.grid().spacing(), 3.0 * field.grid().spacing()};
    PairGeometry geom = compute_pair_geometry(pair);
    Vec e2 = normalized(cross3(pair.c, geom.x_star));
    if (dot(pair.c, pair.A * e2) < 0.0) e2 = -e2;
    double th0 = cycle_order_key(cycle, pair, geom);
    NormField dual = dual_field(field);
    double grid_floor = field.grid().spacing();

    auto probe = [&](double signed_offset) -> SideVerdict {
        if (std::abs(signed_offset) < grid_floor) return SideVerdict::Unknown;
        double th = th0 + signed_offset;
        if (th <= 1e-3 || th >= M_PI - 1e-3) return SideVerdict::Unknown;
        Vec dir = std::cos(th) * geom.x_star + std::sin(th) * e2;
        Vec x0 = dir * (1.0 / field.query(dir));
        ExtremalOptions opt;
        opt.sample_step = cycle.period;
        ExtremalPath path;
        try {
            path = extremal_run_projected(pair, field, x0, cycle.period * max_returns, &dual, 10.0, opt);
        } catch (const std::exception&) {
            return SideVerdict::Unknown;
        }
        // distances of c-switch crossings (with c^T A x > 0) to the cycle base
        ExtremalEvaluator eval(pair, path);
        std::vector<double> dists;
        for (const auto& ev : path.switch_times) {
            if (ev.which != ZeroFactor::C && ev.which != ZeroFactor::Both) continue;
            Vec xs = eval.state(ev.time);
            if (dot(pair.c, pair.A * xs) <= 0.0) continue;
            Vec xn = xs * (1.0 / field.query(xs));
            dists.push_back(std::min(norm2(xn - cycle.base_x), norm2(xn + cycle.base_x)));
        }
        if (dists.size() < 6) return SideVerdict::Unknown;
        double early = 0.0, late = 0.0;
        int q = static_cast<int>(dists.size()) / 4;
        for (int i = 0; i < q; ++i) early += dists[i];
        for (int i = static_cast<int>(dists.size()) - q; i < static_cast<int>(dists.size()); ++i) late += dists[i];
        early /= q;
        late /= q;
        if (late < 0.3 * early || late < 2.0 * grid_floor) return SideVerdict::Attract;
        if (late > 3.0 * early) return SideVerdict::Repel;
        return SideVerdict::Unknown;
    };
    SideVerdict inner = SideVerdict::Unknown, outer = SideVerdict::Unknown;
    for (double off : probe_offsets) {
        if (inner == SideVerdict::Unknown) inner = probe(-off);
        if (outer == SideVerdict::Unknown) outer = probe(off);
    }
    return {inner, outer};
}

// ---------------------------------------------------------------------------
// family continuation

struct CycleFamily {
    std::vector<double> parameter_samples;
    std::vector<Cycle> cycles;
    std::optional<Cycle> endpoint_lo, endpoint_hi;  // two-bang endpoints when reached
    bool truncated = false;
};

struct ContinuationResult {
    bool isolated = false;
    double smallest_singular_value = 0.0;
    std::optional<CycleFamily> family;
};

/// Pseudo-arclength continuation along the solution set of the shooting
/// system with the multiplier pinned to its target. Every cycle sits on the
/// free-multiplier directional curve, so a one-parameter family of TRUE
/// cycles requires a second near-null direction; candidate directions are
/// confirmed by actually taking a pinned step (on an isolated cycle the
/// multiplier leaves its target quadratically and the corrector fails).
/// Families run until a bang duration hits zero (endpoint: reclassified as a
/// two-bang cycle) or max_points is exhausted (truncated family).
inline ContinuationResult continue_family(const BarabanovPairData& pair, const NormField& field,
                                          const Cycle& seed_cycle, double arc_step, int max_points,
                                          const CycleTolerances& tols = {}) {
    ContinuationResult result;
    if (seed_cycle.durations.size() != 4) {
        result.isolated = true;  // two-bang cycles have no released direction in this chart
        result.smallest_singular_value = 1e300;
        return result;
    }
    detail::ShootingSystem sys{pair,        field, 4, seed_cycle.start, seed_cycle.pattern,
                               seed_cycle.antiperiodic};
    CycleCandidate cand;
    cand.durations = seed_cycle.durations;
    cand.base_x = normalized(seed_cycle.base_x);
    cand.base_l = seed_cycle.base_l * (1.0 / dot(seed_cycle.base_l, cand.base_x));
    cand.start = seed_cycle.start;
    cand.pattern = seed_cycle.pattern;
    std::vector<double> z = sys.pack(cand, seed_cycle.multiplier);
    const double mu_target = sys.target_mu();
    const int mu_i = sys.mu_index();

    // pin the multiplier: true families live inside this level set
    auto pinned_residual = [&](const std::vector<double>& zz) {
        std::vector<double> f = sys.residual(zz);
        f.push_back(zz[mu_i] - mu_target);
        return f;
    };
    detail::ShootingSystem* sp = &sys;
    auto pinned_jacobian = [&](const std::vector<double>& zz) {
        std::vector<double> f0 = pinned_residual(zz);
        auto scales = sp->fd_scales(zz);
        const int nz = static_cast<int>(zz.size());
        const int nf = static_cast<int>(f0.size());
        densela::DMat J(nf, std::vector<double>(nz));
        for (int j = 0; j < nz; ++j) {
            double h = 1e-6 * scales[j];
            std::vector<double> zp = zz;
            zp[j] += h;
            std::vector<double> fp = pinned_residual(zp);
            for (int i = 0; i < nf; ++i) J[i][j] = (fp[i] - f0[i]) / h;
        }
        return J;
    };
    auto smallest_sv = [&](const densela::DMat& J, std::vector<double>& dir) {
        std::vector<double> sv;
        densela::DMat V;
        detail::null_directions(J, sv, V);
        dir.resize(J[0].size());
        for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = V[i][0];
        return sv[0];
    };

    std::vector<double> tangent;
    double sv = smallest_sv(pinned_jacobian(z), tangent);
    result.smallest_singular_value = sv;
    if (sv > tols.rank_tol) {
        result.isolated = true;
        return result;
    }

    CycleFamily family;
    family.parameter_samples.push_back(0.0);
    family.cycles.push_back(seed_cycle);
    bool any_step = false;

    for (double direction : {1.0, -1.0}) {
        std::vector<double> zc = z;
        std::vector<double> tan = tangent;
        if (direction < 0)
            for (double& v : tan) v = -v;
        double s = 0.0;
        for (int stepk = 0; stepk < max_points; ++stepk) {
            std::vector<double> zpred = zc;
            for (std::size_t i = 0; i < zc.size(); ++i) zpred[i] += arc_step * tan[i];
            auto Faug = [&](const std::vector<double>& zz) {
                std::vector<double> f = pinned_residual(zz);
                double c = 0.0;
                for (std::size_t i = 0; i < zz.size(); ++i) c += tan[i] * (zz[i] - zpred[i]);
                f.push_back(c);
                return f;
            };
            auto lm = densela::levenberg_marquardt(Faug, zpred, sys.fd_scales(zpred), tols.newton_tol * 10.0);
            if (!lm.converged) {
                if (stepk > 0) family.truncated = true;
                break;
            }
            any_step = true;
            zc = lm.z;
            s += direction > 0 ? arc_step : -arc_step;
            CycleCandidate cc = cand;
            sys.unpack(zc, cc);
            double tmin = 1e300;
            for (double t : cc.durations) tmin = std::min(tmin, t);
            Cycle member;
            member.durations = cc.durations;
            member.period = 0.0;
            for (double t : cc.durations) member.period += t;
            double vsc = field.query(cc.base_x);
            member.base_x = cc.base_x * (1.0 / vsc);
            member.base_l = cc.base_l * (1.0 / dot(cc.base_l, member.base_x));
            member.start = cc.start;
            member.pattern = cc.pattern;
            member.monodromy = monodromy_matrix(pair, member.durations, member.start);
            member.floquet = spectrum(member.monodromy);
            member.bang_count = 4;
            CycleCandidate scaled = cc;
            scaled.base_x = member.base_x;
            scaled.base_l = member.base_l;
            member.residual = detail::closure_residual(pair, field, scaled);
            member.multiplier = zc[sys.mu_index()];
            member.antiperiodic = sys.antiperiodic;
            member.family_member = true;

            if (tmin <= 0.0) {
                // endpoint: a bang collapsed; reclassify as a two-bang cycle
                int zi = 0;
                for (int i = 0; i < 4; ++i)
                    if (cc.durations[i] <= 0.0) zi = i;
                std::vector<double> merged;
                // merging the collapsed bang joins its neighbors (same generator)
                std::vector<double> t = cc.durations;
                t[zi] = 0.0;
                double a0 = t[(zi + 1) % 4], a1 = t[(zi + 2) % 4], a2 = t[(zi + 3) % 4];
                merged = {a1, a2 + a0};
                CycleCandidate two;
                two.durations = merged;
                two.base_x = cc.base_x;
                two.base_l = cc.base_l;
                two.start = cc.start;
                two.pattern = {ZeroFactor::C, ZeroFactor::B};
                try {
                    Cycle endpoint = find_cycle(pair, field, two, tols.newton_tol * 100.0, tols);
                    endpoint.family_member = true;
                    if (direction > 0)
                        family.endpoint_hi = endpoint;
                    else
                        family.endpoint_lo = endpoint;
                } catch (const CycleConvergenceError&) {
                    family.truncated = true;
                }
                break;
            }
            family.parameter_samples.push_back(s);
            family.cycles.push_back(member);
            // refresh the tangent from the local kernel
            std::vector<double> tnew;
            smallest_sv(pinned_jacobian(zc), tnew);
            double align = 0.0;
            for (std::size_t i = 0; i < tan.size(); ++i) align += tan[i] * tnew[i];
            if (align < 0)
                for (double& v : tnew) v = -v;
            tan = tnew;
            if (stepk == max_points - 1) family.truncated = true;
        }
    }
    if (!any_step) {
        // the candidate direction admitted no pinned step in either
        // direction: the multiplier leaves its target immediately, which is
        // the signature of an isolated cycle
        result.isolated = true;
        return result;
    }
    result.family = std::move(family);
    return result;
}

// ---------------------------------------------------------------------------
// survey

struct SurveyResult {
    std::vector<Cycle> catalog;
    std::vector<CycleFamily> families;
    std::string verdict;  // finite-catalog | family-found | mixed
    std::vector<std::string> log;
};

/// Multi-start harvest: extremal runs from spread starts, converged tails
/// seeded into the shooting solver, audited, dedupped, ordered, and probed
/// for one-parameter families. Individual start failures are logged, never
/// fatal.
inline SurveyResult multistart_cycle_survey(const BarabanovPairData& pair, const NormField& field,
                                            int start_count, double horizon,
                                            const CycleTolerances& tols = {}) {
    SurveyResult result;
    PairGeometry geom = compute_pair_geometry(pair);
    NormField dual = dual_field(field);
    std::vector<Cycle> found;

    for (const Vec& dir : spread_directions(3, start_count)) {
        std::string tag = "start(" + std::to_string(dir[0]) + "," + std::to_string(dir[1]) + "," +
                          std::to_string(dir[2]) + "): ";
        try {
            Vec x0 = dir * (1.0 / field.query(dir));
            ExtremalOptions opt;
            opt.sample_step = horizon / 64.0;
            ExtremalPath path = extremal_run_projected(pair, field, x0, horizon, &dual, 10.0, opt);
            auto seed = seed_from_path(pair, path);
            if (!seed) {
                result.log.push_back(tag + "tail not settled, no seed");
                continue;
            }
            Cycle cyc = find_cycle(pair, field, *seed, tols.newton_tol, tols);
            FloquetVerdict fv = floquet_audit(pair, cyc, tols);
            if (!fv.pass) {
                result.log.push_back(tag + "audit failed: " + (fv.failures.empty() ? "?" : fv.failures[0]));
                continue;
            }
            OrbitAudit oa = orbit_audit(pair, cyc, geom, tols);
            if (!oa.pass) {
                result.log.push_back(tag + "orbit audit failed: " + (oa.failures.empty() ? "?" : oa.failures[0]));
                continue;
            }
            found.push_back(cyc);
            result.log.push_back(tag + "cycle period " + std::to_string(cyc.period));
        } catch (const std::exception& e) {
            result.log.push_back(tag + e.what());
        }
    }

    result.catalog = classify_and_order(std::move(found), pair, geom, field, tols);
    bool family_found = false;
    for (Cycle& c : result.catalog) {
        auto att = attractivity(pair, field, c);
        c.inner = att.first;
        c.outer = att.second;
        ContinuationResult cont = continue_family(pair, field, c, 1e-3, 200, tols);
        if (!cont.isolated && cont.family) {
            family_found = true;
            result.families.push_back(*cont.family);
        }
    }
    if (result.catalog.empty())
        result.verdict = "empty";
    else if (family_found && result.families.size() == result.catalog.size())
        result.verdict = "family-found";
    else if (family_found)
        result.verdict = "mixed";
    else
        result.verdict = "finite-catalog";
    return result;
}

}  // namespace barnorm
