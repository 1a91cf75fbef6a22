#pragma once

// Built-in benchmark systems and the pair tuning loop. example1/example2 and
// the supgap pair are fixed reference systems; the demo pair is the base
// triple used by the cycle commands, with the c-scale left as the tuning
// parameter that drives the Lyapunov exponent to zero.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "barnorm/cycles.hpp"
#include "barnorm/extremal.hpp"
#include "barnorm/linalg.hpp"
#include "barnorm/model.hpp"
#include "barnorm/norm_field.hpp"
#include "barnorm/rho.hpp"

namespace barnorm {

/// Two coupled 3D rotations with damping; stable but not asymptotically
/// stable, irreducible.
inline SwitchedSystem example1_system() {
    Mat A1(3, {0, 1, 0, -1, 0, 0, 0, 0, -1});
    Mat A2(3, {0, 0, 1, 0, -1, 0, -1, 0, 0});
    return SwitchedSystem::from_generators({A1, A2});
}

/// Three-generator planar system whose norms max(|x1|, beta |x2|) are all
/// invariant for beta in [1/alpha, alpha].
inline SwitchedSystem example2_system(double alpha = 2.0) {
    Mat A1(2, {-1, 0, 0, 0});
    Mat A2(2, {0, 0, 0, -1});
    Mat A3(2, {-alpha, 1, -1, -alpha});
    return SwitchedSystem::from_generators({A1, A2, A3});
}

inline Mat supgap_A() { return Mat(2, {0, 0, 0, -1}); }
inline Mat supgap_B(double alpha) { return Mat(2, {-alpha, 3, -0.6, 0.7}); }

/// conv{A, B(alpha)}: the planar system whose critical alpha makes the
/// B-trajectory from (-1,0) touch the line x1 = 1 tangentially.
inline SwitchedSystem supgap_system(double alpha) {
    return SwitchedSystem::from_generators({supgap_A(), supgap_B(alpha)});
}

inline constexpr double kSupgapAlphaReference = 0.8896;  // coarse published value

struct TangencySolve {
    double alpha = 0.0;
    double t_star = 0.0;
    double x2_at_touch = 0.0;
    int newton_iterations = 0;
};

/// Solves {x1(t) = 1, dx1/dt(t) = 0} for the trajectory e^{t B(alpha)} (-1,0):
/// coarse scan over (alpha, t) followed by a damped 2x2 Newton.
inline TangencySolve solve_supgap_tangency(double newton_tol = 1e-12) {
    auto state = [](double alpha, double t) { return expm(supgap_B(alpha), t) * Vec{-1.0, 0.0}; };
    auto F = [&](double alpha, double t, double& f1, double& f2) {
        Vec x = state(alpha, t);
        Vec dx = supgap_B(alpha) * x;
        f1 = x[0] - 1.0;
        f2 = dx[0];
    };
    // coarse scan: for each alpha, the first maximum of x1 along the flow
    double best_alpha = 0.0, best_t = 0.0, best_gap = 1e300;
    for (double alpha = 0.5; alpha <= 1.4; alpha += 0.02) {
        double prev = -1.0, tprev = 0.0;
        for (double t = 0.05; t < 6.0; t += 0.05) {
            double x1 = state(alpha, t)[0];
            if (x1 < prev) {  // passed the maximum
                double gap = std::abs(prev - 1.0);
                if (gap < best_gap) {
                    best_gap = gap;
                    best_alpha = alpha;
                    best_t = tprev;
                }
                break;
            }
            prev = x1;
            tprev = t;
        }
    }
    if (best_gap == 1e300)
        throw CycleConvergenceError("solve_supgap_tangency: coarse scan found no interior maximum of x1");

    TangencySolve sol;
    double a = best_alpha, t = best_t;
    for (int it = 0; it < 60; ++it) {
        double f1, f2;
        F(a, t, f1, f2);
        if (std::abs(f1) + std::abs(f2) < newton_tol) {
            sol.newton_iterations = it;
            break;
        }
        const double da = 1e-7, dt = 1e-7;
        double f1a, f2a, f1t, f2t;
        F(a + da, t, f1a, f2a);
        F(a, t + dt, f1t, f2t);
        double j11 = (f1a - f1) / da, j12 = (f1t - f1) / dt;
        double j21 = (f2a - f2) / da, j22 = (f2t - f2) / dt;
        double det = j11 * j22 - j12 * j21;
        if (std::abs(det) < 1e-300)
            throw CycleConvergenceError("solve_supgap_tangency: singular Newton system");
        double step_a = (-f1 * j22 + f2 * j12) / det;
        double step_t = (-j11 * f2 + j21 * f1) / det;
        a += step_a;
        t += step_t;
        sol.newton_iterations = it + 1;
    }
    sol.alpha = a;
    sol.t_star = t;
    sol.x2_at_touch = state(a, t)[1];
    return sol;
}

// ---------------------------------------------------------------------------
// demo pair and tuning

/// Companion-form base triple for the cycle commands: A has a lightly damped
/// rotating pair plus a real mode; the feedback direction modulates the
/// lowest companion coefficient, so switching pumps the rotation.
inline Mat demo_pair_A() { return Mat(3, {0, 1, 0, 0, 0, 1, -0.2, -1.008, -0.24}); }
inline Vec demo_pair_b() { return Vec{0, 0, 1}; }
inline Vec demo_pair_c_direction() { return Vec{0, -1, 0}; }

/// c-scale at which the switched system sits on the stability boundary,
/// polished so the dominant cycle's radial multiplier is 1 to ~1e-12.
inline constexpr double kDemoPairScaleReference = 0.18414806875373493;

inline SwitchedSystem demo_pair_system(double scale = kDemoPairScaleReference) {
    return SwitchedSystem::from_pair(demo_pair_A(), demo_pair_b(), scale * demo_pair_c_direction());
}

struct PairTuning {
    double scale = 0.0;
    RhoEstimate rho;
    std::vector<std::pair<double, double>> scale_history;  // (s, rho estimate)
    std::optional<double> cycle_multiplier_error;          // |lambda - 1| after polish
};

struct TuningError : std::runtime_error {
    std::vector<std::pair<double, double>> history;
    TuningError(const std::string& msg, std::vector<std::pair<double, double>> h)
        : std::runtime_error(msg), history(std::move(h)) {}
};

namespace detail {

// Full-period radial multiplier of the cycle continued from `seed` at scale
// s (the shooting multiplier squares on the half-period chart).
inline std::optional<double> directional_multiplier(const Mat& A, const Vec& b, const Vec& c_dir, double s,
                                                    CycleCandidate& seed, const NormField& field) {
    BarabanovPairData pair{A, b, s * c_dir};
    try {
        Cycle cyc = find_cycle(pair, field, seed, 1e-11);
        seed.durations = cyc.durations;
        seed.base_x = cyc.base_x;
        seed.base_l = cyc.base_l;
        seed.pattern = cyc.pattern;
        seed.start = cyc.start;
        return cyc.antiperiodic ? cyc.multiplier * cyc.multiplier : cyc.multiplier;
    } catch (const CycleConvergenceError&) {
        return std::nullopt;
    }
}

}  // namespace detail

/// Tunes the c-scale of a pair until the estimated Lyapunov exponent lies
/// within rho_tol of zero, then (when a cycle is reachable from the tuned
/// point) polishes the scale so the dominant cycle's radial multiplier
/// equals 1, which pins the switched system to the stability boundary far
/// below the estimator's resolution.
inline PairTuning tune_pair_scale(const Mat& A, const Vec& b, const Vec& c_dir, double s_lo, double s_hi,
                                  double rho_tol = 1e-3, bool polish_with_cycle = true,
                                  HorizonPolicy policy = {}, std::uint64_t seed = 7ULL) {
    PairTuning tuning;
    auto rho_at = [&](double s) {
        SwitchedSystem sys = SwitchedSystem::from_pair(A, b, s * c_dir);
        RhoEstimate est = estimate_rho(sys, rho_tol, policy, seed);
        tuning.scale_history.push_back({s, est.value});
        return est;
    };
    RhoEstimate rlo = rho_at(s_lo), rhi = rho_at(s_hi);
    if (rlo.value > 0.0 || rhi.value < 0.0)
        throw TuningError("tune_pair_scale: bracket does not straddle rho = 0 (rho(lo)=" +
                              std::to_string(rlo.value) + ", rho(hi)=" + std::to_string(rhi.value) + ")",
                          tuning.scale_history);
    double lo = s_lo, hi = s_hi;
    RhoEstimate rmid = rlo;
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        rmid = rho_at(mid);
        if (std::abs(rmid.value) <= rho_tol) {
            tuning.scale = mid;
            tuning.rho = rmid;
            break;
        }
        if (rmid.value > 0.0)
            hi = mid;
        else
            lo = mid;
        if (hi - lo < 1e-14) {
            tuning.scale = mid;
            tuning.rho = rmid;
            break;
        }
    }
    if (tuning.scale == 0.0)
        throw TuningError("tune_pair_scale: bisection exhausted without |rho| <= tol", tuning.scale_history);

    if (polish_with_cycle) {
        // harvest a cycle candidate at the tuned scale, then Newton on s
        BarabanovPairData pair{A, b, tuning.scale * c_dir};
        SwitchedSystem sys = SwitchedSystem::from_pair(A, b, tuning.scale * c_dir);
        NormIterationOptions nopt;
        nopt.grid_nodes = 2562;
        nopt.tol = 1e-9;
        nopt.max_iters = 3000;
        NormField field = approximate_barabanov_norm(sys, nopt);
        std::optional<CycleCandidate> cand;
        NormField dual = dual_field(field);
        for (const Vec& dir : spread_directions(3, 6)) {
            try {
                Vec x0 = dir * (1.0 / field.query(dir));
                ExtremalPath path = extremal_run_projected(pair, field, x0, 400.0, &dual);
                cand = seed_from_path(pair, path);
                if (cand && cand->durations.size() == 4) break;
                cand.reset();
            } catch (const std::exception&) {
            }
        }
        if (cand) {
            double s = tuning.scale;
            double ds = std::max(1e-6, 1e-4 * s);
            for (int it = 0; it < 24; ++it) {
                CycleCandidate c0 = *cand;
                auto lam = detail::directional_multiplier(A, b, c_dir, s, c0, field);
                if (!lam) break;
                *cand = c0;
                double g = *lam - 1.0;
                tuning.cycle_multiplier_error = std::abs(g);
                if (std::abs(g) < 1e-12) break;
                CycleCandidate c1 = *cand;
                auto lam1 = detail::directional_multiplier(A, b, c_dir, s + ds, c1, field);
                if (!lam1) break;
                double dg = (*lam1 - *lam) / ds;
                if (std::abs(dg) < 1e-300) break;
                s -= g / dg;
            }
            tuning.scale = s;
        }
    }
    return tuning;
}

}  // namespace barnorm
