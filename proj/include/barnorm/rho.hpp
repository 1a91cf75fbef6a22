#pragma once

// Largest-Lyapunov-exponent estimation: bisection on the spectral shift, with
// a two-sided growth test at each shift. The upper side iterates the Bellman
// operator on a sphere grid (its conic interpolation only over-estimates
// growth); the lower side measures exact exponential-product growth along a
// portfolio of admissible switching policies.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "barnorm/linalg.hpp"
#include "barnorm/model.hpp"
#include "barnorm/norm_field.hpp"
#include "barnorm/random.hpp"

namespace barnorm {

struct RhoInconclusiveError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RhoEstimate {
    double value = 0.0;
    double lo = 0.0, hi = 0.0;
    int iterations = 0;
    std::string method_trace;
};

struct HorizonPolicy {
    double field_burn_time = 60.0;      // Bellman burn-in, in 1/(max generator norm) units
    double field_measure_time = 240.0;  // measurement window after burn-in
    double portfolio_time = 400.0;      // exact-propagation horizon, same units
    int max_escalations = 3;            // horizon doublings / grid refinement on demand
    int grid_nodes = 0;                 // 0: dimension default
    int portfolio_starts = 16;
    int random_signals = 8;
    int workers = 1;
};

namespace detail {

struct GrowthRates {
    double field_rate;      // upward-biased estimate of rho(shifted)
    double field_spread;    // spread of per-step log ratios in the window (convergence check)
    double portfolio_rate;  // certified lower bound on rho(shifted)
};

// Exact-propagation portfolio: constant-vertex runs, one-step norm-greedy
// runs, field-guided greedy runs, and seeded random bang runs. Growth is read
// from windowed maxima of log|x| so rotating modes do not corrupt the rate.
inline double portfolio_rate(const SwitchedSystem& sys, const NormField* guide, const HorizonPolicy& pol,
                             Rng& rng) {
    const double gnorm = std::max(1e-9, sys.max_generator_norm());
    const double h = 0.4 / gnorm;
    const double T = pol.portfolio_time / gnorm;
    const int steps = std::max(64, static_cast<int>(T / h));
    std::vector<Mat> E;
    for (const Mat& g : sys.generators) E.push_back(expm(g, h));
    const int m = static_cast<int>(E.size());

    std::vector<Vec> starts = spread_directions(sys.n, pol.portfolio_starts);
    double best_rate = -1e300;

    enum class Policy { Constant, Greedy, FieldGreedy, Random };
    std::vector<std::pair<Policy, int>> runs;
    for (int u = 0; u < m; ++u) runs.push_back({Policy::Constant, u});
    runs.push_back({Policy::Greedy, 0});
    if (guide) runs.push_back({Policy::FieldGreedy, 0});
    for (int r = 0; r < pol.random_signals; ++r) runs.push_back({Policy::Random, r});

    for (const auto& run : runs) {
        for (const Vec& x0 : starts) {
            Vec x = x0;
            double logn = 0.0;
            // windowed maxima over [20%,60%] and [60%,100%] of the horizon;
            // rates are normalized by the peak locations so phase jitter of
            // rotating modes cancels (windows must cover full oscillation
            // periods, hence the 40% width)
            const int k1 = static_cast<int>(steps * 0.6), k2 = steps;
            const int w = std::max(8, static_cast<int>(steps * 0.4));
            double m1 = -1e300, m2 = -1e300;
            int t1 = 0, t2 = 0;
            int hold = 0, uc = static_cast<int>(run.second % m);
            for (int k = 1; k <= steps; ++k) {
                int u = 0;
                switch (run.first) {
                    case Policy::Constant:
                        u = run.second;
                        break;
                    case Policy::Greedy: {
                        double bb = -1e300;
                        for (int j = 0; j < m; ++j) {
                            double nn = norm2(E[j] * x);
                            if (nn > bb) {
                                bb = nn;
                                u = j;
                            }
                        }
                        break;
                    }
                    case Policy::FieldGreedy: {
                        double bb = -1e300;
                        for (int j = 0; j < m; ++j) {
                            double nn = guide->query(E[j] * x);
                            if (nn > bb) {
                                bb = nn;
                                u = j;
                            }
                        }
                        break;
                    }
                    case Policy::Random:
                        if (hold == 0) {
                            uc = static_cast<int>(rng() % m);
                            hold = 1 + static_cast<int>(rng() % 24);
                        }
                        --hold;
                        u = uc;
                        break;
                }
                x = E[u] * x;
                double nn = norm2(x);
                logn += std::log(nn);
                x *= 1.0 / nn;
                if (k > k1 - w && k <= k1 && logn > m1) {
                    m1 = logn;
                    t1 = k;
                }
                if (k > k2 - w && k <= k2 && logn > m2) {
                    m2 = logn;
                    t2 = k;
                }
            }
            if (t2 <= t1) continue;
            double rate = (m2 - m1) / ((t2 - t1) * h);
            best_rate = std::max(best_rate, rate);
            if (run.first == Policy::Constant && run.second == 0 && sys.generators.size() == 1) break;
        }
    }
    return best_rate;
}

// Bellman growth: normalize the field each sweep and accumulate the log of
// the nodewise max ratio. The rate is read from differences of windowed
// maxima of the accumulated log, which cancels the oscillation of rotating
// modes; the early/late rate mismatch diagnoses an unconverged shape.
inline GrowthRates growth_test(const SwitchedSystem& sys, const HorizonPolicy& pol, Rng& rng) {
    const double gnorm = std::max(1e-9, sys.max_generator_norm());
    const double h = kBellmanStepCap / gnorm;
    const int burn = std::max(16, static_cast<int>(pol.field_burn_time / gnorm / h));
    const int meas = std::max(64, static_cast<int>(pol.field_measure_time / gnorm / h));

    int nodes = pol.grid_nodes > 0 ? pol.grid_nodes : (sys.n == 2 ? 2048 : 10242);
    NormField field = euclidean_field(make_sphere_grid(sys.n, nodes));
    BellmanOperator op(sys, field.grid_ptr(), h);
    std::vector<double> buf;

    double accum = 0.0;
    auto sweep = [&](NormField& f) {
        op.apply(f.values(), buf, pol.workers);
        double mx = 0.0;
        for (double v : buf) mx = std::max(mx, v);
        for (double& v : buf) v /= mx;
        f.mutable_values().swap(buf);
        accum += std::log(mx);
    };
    for (int k = 0; k < burn; ++k) sweep(field);

    // The converged shape of a critical rotating system oscillates forever
    // (the Euclidean pullback along a non-orthogonal rotation), so the rate
    // is read by phase-matched differencing: detect the oscillation period
    // of the per-sweep logs, then difference the accumulated log across an
    // integer number of periods.
    accum = 0.0;
    std::vector<double> L(meas + 1, 0.0);
    for (int k = 1; k <= meas; ++k) {
        sweep(field);
        L[k] = accum;
    }
    auto span_rate = [&](int hi_k, int lo_k) { return (L[hi_k] - L[lo_k]) / ((hi_k - lo_k) * h); };

    // period detection on the increments over the second half
    int best_period = 1;
    {
        const int from = meas / 2;
        double best_score = 1e300;
        int max_period = std::max(2, std::min(meas / 3, 600));
        for (int P = 1; P <= max_period; ++P) {
            double s = 0.0;
            int cnt = 0;
            for (int k = from + P; k <= meas; ++k) {
                double dk = L[k] - L[k - 1], dp = L[k - P] - L[k - P - 1];
                s += (dk - dp) * (dk - dp);
                ++cnt;
            }
            if (cnt < 8) break;
            s /= cnt;
            if (s < best_score) {
                best_score = s;
                best_period = P;
            }
        }
    }
    int span = std::max(best_period * std::max(1, (meas / 2) / best_period), 1);
    span = std::min(span, meas / 2);
    double r_late = span_rate(meas, meas - span);
    // consistency probe: the same phase-matched rate one span earlier
    double r_early = (meas - 2 * span >= 0) ? span_rate(meas - span, meas - 2 * span) : r_late;

    GrowthRates out;
    out.field_rate = r_late;
    out.field_spread = std::abs(r_late - r_early);
    out.portfolio_rate = portfolio_rate(sys, &field, pol, rng);
    return out;
}

}  // namespace detail

/// Estimates rho(M) by bisection on the shift mu: each midpoint runs the
/// two-sided growth test on the shifted system; classifications move the
/// bisection bracket and the measured rates tighten it directly (the
/// portfolio certifies rho >= mu + portfolio_rate, the Bellman side
/// overestimates so rho <= mu + field_rate). Hysteresis band = tol/4.
inline RhoEstimate estimate_rho(const SwitchedSystem& sys, double tol = 1e-3, HorizonPolicy policy = {},
                                std::uint64_t seed = 20240901ULL) {
    if (sys.n != 2 && sys.n != 3)
        throw DimensionError("estimate_rho: sphere-grid growth tests support n in {2,3}");
    if (!(tol > 0.0)) throw std::domain_error("estimate_rho: tol must be positive");
    const double band = tol / 4.0;

    // initial bracket: below by the best vertex abscissa, above by the
    // largest symmetric-part eigenvalue (log-norm bound, convex over the hull)
    double lo = -1e300, hi = -1e300;
    for (const Mat& g : sys.generators) {
        lo = std::max(lo, spectral_abscissa(g));
        Mat s = 0.5 * (g + g.transpose());
        hi = std::max(hi, spectral_abscissa(s));
    }
    hi += 1e-9;
    lo -= 1e-9;

    std::ostringstream trace;
    trace << "bracket0=[" << lo << "," << hi << "]";
    Rng rng(seed);
    RhoEstimate est;
    int horizon_escalations = 0;
    int grid_escalations = 0;
    const int max_grid_escalations = (sys.n == 3) ? 2 : 0;
    HorizonPolicy pol = policy;

    while (hi - lo > tol && est.iterations < 64) {
        double mu = 0.5 * (lo + hi);
        SwitchedSystem shifted = spectral_shift(sys, mu);
        detail::GrowthRates r = detail::growth_test(shifted, pol, rng);
        ++est.iterations;
        trace << " | mu=" << mu << " f=" << r.field_rate << " p=" << r.portfolio_rate;

        bool converged_shape = r.field_spread < 2.0 * band;
        if (!converged_shape && horizon_escalations < pol.max_escalations) {
            pol.field_burn_time *= 2.0;
            pol.field_measure_time *= 2.0;
            pol.portfolio_time *= 2.0;
            ++horizon_escalations;
            trace << " esc(horizon)";
            continue;
        }
        double slack = band + r.field_spread;
        double new_lo = std::max(lo, mu + r.portfolio_rate - band);
        double new_hi = std::min(hi, mu + r.field_rate + slack);
        if (r.portfolio_rate > band) new_lo = std::max(new_lo, mu);
        if (r.field_rate < -slack) new_hi = std::min(new_hi, mu);
        if (new_lo > new_hi) {
            // the exact-propagation lower bound is the certified side; pad
            // the top around it when the field side contradicts it
            new_hi = new_lo + 2.0 * band;
        }
        bool progress = (new_hi - new_lo) < 0.95 * (hi - lo);
        lo = new_lo;
        hi = new_hi;
        if (hi - lo <= tol) break;
        if (!progress) {
            // the bracket is pinned at the interpolation-bias floor of the
            // current grid: refine it, then fall back to longer horizons
            if (grid_escalations < max_grid_escalations) {
                ++grid_escalations;
                int cur = pol.grid_nodes > 0 ? pol.grid_nodes : 10242;
                pol.grid_nodes = cur == 10242 ? 40962 : 163842;
                trace << " esc(grid=" << pol.grid_nodes << ")";
            } else if (horizon_escalations < pol.max_escalations) {
                ++horizon_escalations;
                pol.field_burn_time *= 2.0;
                pol.field_measure_time *= 2.0;
                pol.portfolio_time *= 2.0;
                trace << " esc(horizon)";
            } else {
                throw RhoInconclusiveError("estimate_rho: growth test stayed inside the hysteresis band [" +
                                           std::to_string(lo) + "," + std::to_string(hi) +
                                           "] at max horizon (band=" + std::to_string(band) + ")");
            }
        }
    }
    est.lo = lo;
    est.hi = hi;
    est.value = 0.5 * (lo + hi);
    est.method_trace = trace.str();
    return est;
}

}  // namespace barnorm
