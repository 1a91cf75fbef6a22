#pragma once

// Norm-field diagnostics: field-guided extremal runs for general polytopes,
// subgradient selection for pair extremals, the v_m semi-norm estimator, the
// supremum-vs-maximum gap probe, the strict-convexity audit, and the
// omega-connectivity uniqueness diagnostic.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "barnorm/extremal.hpp"
#include "barnorm/flow.hpp"
#include "barnorm/linalg.hpp"
#include "barnorm/model.hpp"
#include "barnorm/norm_field.hpp"
#include "barnorm/random.hpp"

namespace barnorm {

struct GreedyRun {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<int> controls;
};

/// Numerical extremal flow for an arbitrary polytope: at every step the
/// vertex maximizing the field value of the propagated state is selected,
/// which holds the field value constant up to interpolation error. States
/// advance by exact exponentials. The switch hysteresis keeps the current
/// vertex on interpolation-noise ties; without it the run can ride
/// norm-preserving corners forever, imitating the sup-approaching (but not
/// extremal) trajectories instead of the extremal limit.
inline GreedyRun field_extremal_run(const SwitchedSystem& sys, const NormField& field, const Vec& x0,
                                    double horizon, double h = 0.0, double switch_margin = -1.0) {
    if (h <= 0.0) h = 0.1 / std::max(1e-9, sys.max_generator_norm());
    if (switch_margin < 0.0) switch_margin = 0.5 * field.grid_interp_error();
    std::vector<Mat> E;
    for (const Mat& g : sys.generators) E.push_back(expm(g, h));
    GreedyRun run;
    Vec x = x0;
    run.times.push_back(0.0);
    run.states.push_back(x);
    int steps = static_cast<int>(std::ceil(horizon / h));
    int current = 0;
    {
        double bv = -1e300;
        for (std::size_t j = 0; j < E.size(); ++j) {
            double v = field.query(E[j] * x);
            if (v > bv) {
                bv = v;
                current = static_cast<int>(j);
            }
        }
    }
    for (int k = 1; k <= steps; ++k) {
        int best = current;
        double bv = field.query(E[current] * x) + switch_margin * field.query(x);
        for (std::size_t j = 0; j < E.size(); ++j) {
            if (static_cast<int>(j) == current) continue;
            double v = field.query(E[j] * x);
            if (v > bv) {
                bv = v;
                best = static_cast<int>(j);
            }
        }
        current = best;
        x = E[current] * x;
        run.times.push_back(k * h);
        run.states.push_back(x);
        run.controls.push_back(current);
    }
    return run;
}

/// Subgradient choice for starting a pair extremal: probes up to
/// max_candidates elements of the estimated subdifferential at x0 over a
/// short horizon and keeps the one with the smallest field drift.
inline Vec pick_extremal_l0(const BarabanovPairData& pair, const NormField& field, const Vec& x0,
                            const NormField* dual = nullptr, double probe_horizon = 0.0,
                            int max_candidates = 8) {
    SubdifferentialEstimate sd = subdifferential(field, x0, 1e-3, dual);
    std::vector<Vec> cands = sd.supports;
    if (cands.empty()) {
        // finite-difference gradient fallback on the field
        const double d = 1e-5;
        Vec g(3);
        for (int i = 0; i < 3; ++i) {
            Vec e = Vec::unit(3, i);
            g[i] = (field.query(x0 + d * e) - field.query(x0 - d * e)) / (2.0 * d);
        }
        cands.push_back(g);
    }
    if (static_cast<int>(cands.size()) > max_candidates) {
        // keep an angularly spread subset: greedy farthest-point selection
        std::vector<Vec> keep = {cands[0]};
        while (static_cast<int>(keep.size()) < max_candidates) {
            double bestd = -1.0;
            std::size_t besti = 0;
            for (std::size_t i = 0; i < cands.size(); ++i) {
                double mind = 1e300;
                for (const Vec& k : keep) mind = std::min(mind, norm2(normalized(cands[i]) - normalized(k)));
                if (mind > bestd) {
                    bestd = mind;
                    besti = i;
                }
            }
            keep.push_back(cands[besti]);
        }
        cands = keep;
    }
    if (cands.size() == 1) return cands[0];

    SwitchedSystem sys = SwitchedSystem::from_pair(pair.A, pair.b, pair.c);
    if (probe_horizon <= 0.0) probe_horizon = 12.0 / std::max(1e-9, sys.max_generator_norm());
    double v0 = field.query(x0);
    double best_drift = 1e300;
    Vec best = cands[0];
    for (const Vec& l0 : cands) {
        ExtremalOptions opt;
        opt.sample_step = probe_horizon / 32.0;
        double drift = 0.0;
        try {
            ExtremalPath p = integrate_extremal(pair, x0, l0, probe_horizon, opt);
            for (const Vec& xs : p.x_states) drift = std::max(drift, std::abs(field.query(xs) - v0));
        } catch (const DegenerateZeroError&) {
            continue;
        }
        if (drift < best_drift) {
            best_drift = drift;
            best = l0;
        }
    }
    return best;
}

/// Long-horizon extremal run with subgradient re-projection: the coupled flow
/// is integrated in chunks; at each boundary l is re-selected from the
/// estimated subdifferential at the current point (keeping the candidate
/// nearest the incoming direction) and the pair (x, l) is renormalized.
/// Positive rescaling and re-projection leave the switching structure intact
/// while keeping l within grid error of the dual sphere, which a pure forward
/// integration cannot do (the cycle's adjoint direction is Floquet-unstable).
inline ExtremalPath extremal_run_projected(const BarabanovPairData& pair, const NormField& field,
                                           const Vec& x0, double horizon, const NormField* dual = nullptr,
                                           double chunk = 10.0, ExtremalOptions opt = {}) {
    std::optional<NormField> local_dual;
    if (!dual) {
        local_dual.emplace(dual_field(field));
        dual = &*local_dual;
    }
    Vec x = x0 * (1.0 / field.query(x0));
    Vec l = pick_extremal_l0(pair, field, x, dual);
    l *= 1.0 / dot(l, x);

    ExtremalPath total;
    double t0 = 0.0;
    while (t0 < horizon - 1e-12) {
        double span = std::min(chunk, horizon - t0);
        ExtremalPath piece = integrate_extremal(pair, x, l, span, opt);
        for (std::size_t k = 0; k < piece.times.size(); ++k) {
            total.times.push_back(t0 + piece.times[k]);
            total.x_states.push_back(piece.x_states[k]);
            total.l_states.push_back(piece.l_states[k]);
            total.u_values.push_back(piece.u_values[k]);
        }
        for (const auto& ev : piece.switch_times)
            total.switch_times.push_back({t0 + ev.time, ev.which, ev.kind});
        for (const auto& bang : piece.bangs) total.bangs.push_back({t0 + bang.t0, bang.u, bang.x0, bang.l0});
        t0 += piece.end_time;
        x = piece.x_end;
        l = piece.l_end;

        // renormalize x to the field sphere and pull l back onto the
        // estimated subdifferential: the cycle's adjoint direction is
        // Floquet-unstable, so without the pull-back l leaves the dual
        // sphere exponentially and the b-switches die out
        double vx = field.query(x);
        if (vx > 1e-300) x *= 1.0 / vx;
        SwitchingValues sv = switching_values(pair, x, l);
        SubdifferentialEstimate sd = subdifferential(field, x, 1e-3, dual);
        if (!sd.supports.empty()) {
            // prefer sign-compatible candidates (no artificial phi_b flip),
            // break ties by alignment with the incoming direction
            Vec best = sd.supports[0];
            double best_key = -1e300;
            for (const Vec& cand : sd.supports) {
                double align = dot(normalized(cand), normalized(l));
                bool sign_ok = dot(pair.b, cand) * sv.phi_b >= 0.0;
                double key = align + (sign_ok ? 2.0 : 0.0);
                if (key > best_key) {
                    best_key = key;
                    best = cand;
                }
            }
            l = best;
        }
        double lx = dot(l, x);
        if (std::abs(lx) > 1e-6 * norm2(l) * norm2(x))
            l *= 1.0 / lx;
        else
            l = normalized(l);
    }
    total.end_time = t0;
    total.x_end = x;
    total.l_end = l;
    return total;
}

// ---------------------------------------------------------------------------
// v_m semi-norms

struct SeminormEstimate {
    double value = 0.0;          // lower bound for v_m(x)
    std::string best_policy;     // which portfolio member achieved it
    std::vector<double> best_trace_times;
    std::vector<double> best_trace_values;  // m^T x(t) samples of the winner
};

/// Lower-bound estimate of v_m(x) = sup limsup m^T x(t): maximizes the late
/// maximum of m^T x over a portfolio of signals (field extremal runs, greedy
/// pointwise maximization of d/dt m^T x, random bang signals).
inline SeminormEstimate seminorm_vm(const SwitchedSystem& sys, const Vec& m, const Vec& x,
                                    double horizon, int restarts, Rng& rng,
                                    const NormField* field = nullptr) {
    if (norm2(m) == 0.0) throw std::domain_error("seminorm_vm: m must be nonzero");
    const double gnorm = std::max(1e-9, sys.max_generator_norm());
    const double h = 0.1 / gnorm;
    std::vector<Mat> E;
    for (const Mat& g : sys.generators) E.push_back(expm(g, h));
    const int steps = std::max(16, static_cast<int>(horizon / h));
    const int tail_from = steps / 2;

    SeminormEstimate best;
    best.value = -1e300;

    auto run = [&](const std::string& name, auto&& choose) {
        Vec xs = x;
        double late_max = -1e300;
        std::vector<double> tt, vv;
        for (int k = 1; k <= steps; ++k) {
            int u = choose(xs, k);
            xs = E[u] * xs;
            double mv = dot(m, xs);
            if (k >= tail_from) late_max = std::max(late_max, mv);
            if (k % std::max(1, steps / 256) == 0) {
                tt.push_back(k * h);
                vv.push_back(mv);
            }
        }
        if (late_max > best.value) {
            best.value = late_max;
            best.best_policy = name;
            best.best_trace_times = std::move(tt);
            best.best_trace_values = std::move(vv);
        }
    };

    const int nm = static_cast<int>(E.size());
    run("greedy-m", [&](const Vec& xs, int) {
        int u = 0;
        double bv = -1e300;
        for (int j = 0; j < nm; ++j) {
            double v = dot(m, E[j] * xs);
            if (v > bv) {
                bv = v;
                u = j;
            }
        }
        return u;
    });
    if (field) {
        run("field-extremal", [&](const Vec& xs, int) {
            int u = 0;
            double bv = -1e300;
            for (int j = 0; j < nm; ++j) {
                double v = field->query(E[j] * xs);
                if (v > bv) {
                    bv = v;
                    u = j;
                }
            }
            return u;
        });
    }
    for (int r = 0; r < restarts; ++r) {
        int hold = 0, uc = 0;
        run("random-" + std::to_string(r), [&](const Vec&, int) {
            if (hold == 0) {
                uc = static_cast<int>(rng() % nm);
                hold = 1 + static_cast<int>(rng() % 32);
            }
            --hold;
            return uc;
        });
    }
    if (best.value < 0.0) best.value = std::max(best.value, 0.0);  // limsup of a decaying run
    return best;
}

// ---------------------------------------------------------------------------
// sup vs max gap

struct SupGapReport {
    double field_value = 0.0;     // v(y), canonical scale
    double extremal_best = 0.0;   // best limsup |x(t)| over extremal runs from y
    double gap = 0.0;
    double grid_error = 0.0;      // canonical scale
    bool positive_beyond_tolerance = false;
};

/// gap = v(y) - best late Euclidean norm over field-extremal runs from y,
/// with v in the canonical (limsup-of-Euclidean) scale. A gap beyond 3x the
/// interpolation error marks y as a candidate witness that the defining
/// supremum is not attained.
inline SupGapReport sup_vs_max_gap(const SwitchedSystem& sys, const NormField& field, const Vec& y,
                                   double horizon, int restarts, Rng& rng) {
    SupGapReport rep;
    rep.field_value = field.canonical_query(y);
    rep.grid_error = field.canonical_scale() * field.grid_interp_error();

    double best = 0.0;
    const double gnorm = std::max(1e-9, sys.max_generator_norm());
    auto late_norm_max = [&](const GreedyRun& run) {
        double m = 0.0;
        std::size_t from = run.states.size() / 2;
        for (std::size_t k = from; k < run.states.size(); ++k) m = std::max(m, norm2(run.states[k]));
        return m;
    };
    best = std::max(best, late_norm_max(field_extremal_run(sys, field, y, horizon)));
    // restarts explore interpolation ties by dithering the step length
    for (int r = 0; r < restarts; ++r) {
        double h = (0.05 + 0.1 * uniform(rng, 0.0, 1.0)) / gnorm;
        best = std::max(best, late_norm_max(field_extremal_run(sys, field, y, horizon, h)));
    }
    if (sys.pair) {
        NormField dual = dual_field(field);
        try {
            ExtremalPath p = extremal_run_projected(*sys.pair, field, y, horizon, &dual);
            double m = 0.0;
            for (std::size_t k = p.x_states.size() / 2; k < p.x_states.size(); ++k)
                m = std::max(m, norm2(p.x_states[k]));
            best = std::max(best, m);
        } catch (const DegenerateZeroError&) {
        }
    }
    rep.extremal_best = best;
    rep.gap = rep.field_value - best;
    rep.positive_beyond_tolerance = rep.gap > 3.0 * rep.grid_error;
    return rep;
}

// ---------------------------------------------------------------------------
// strict-convexity audit

struct FlatSegment {
    Vec a, b;          // endpoints on the unit field sphere
    double angle;      // angular separation
    double midpoint_value;
};

struct ConvexityAudit {
    std::vector<FlatSegment> segments;  // maximal flagged chains
    int flagged_pairs = 0;
    double flat_tol;
    double seg_tol;
};

/// Samples pairs on the unit field sphere and flags chords whose midpoint
/// stays on the sphere within flat_tol: evidence of a flat spot. Flagged
/// pairs are merged into maximal chains by midpoint adjacency.
inline ConvexityAudit convexity_audit(const NormField& field, int pair_samples, Rng& rng,
                                      double flat_tol = 0.0, double seg_tol = 0.0) {
    ConvexityAudit audit;
    const double ge = field.grid_interp_error();
    audit.flat_tol = flat_tol > 0.0 ? flat_tol : std::max(4.0 * ge, 1e-7);
    audit.seg_tol = seg_tol > 0.0 ? seg_tol : 10.0 * field.grid().spacing();

    const int n = field.dim();
    std::vector<FlatSegment> flagged;
    for (int k = 0; k < pair_samples; ++k) {
        Vec xd = random_unit_vec(rng, n);
        Vec yd = random_unit_vec(rng, n);
        Vec x = xd * (1.0 / field.query(xd));
        Vec y = yd * (1.0 / field.query(yd));
        double ang = std::acos(std::clamp(dot(normalized(x), normalized(y)), -1.0, 1.0));
        if (ang < audit.seg_tol || ang > 0.5 * M_PI) continue;
        double vm = field.query(0.5 * (x + y));
        if (vm >= 1.0 - audit.flat_tol) {
            ++audit.flagged_pairs;
            flagged.push_back({x, y, ang, vm});
        }
    }
    // chain flagged pairs whose endpoints nearly touch
    std::vector<int> comp(flagged.size());
    for (std::size_t i = 0; i < flagged.size(); ++i) comp[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int i) { return comp[i] == i ? i : comp[i] = find(comp[i]); };
    auto close = [&](const Vec& a, const Vec& b) { return norm2(a - b) < 0.2; };
    for (std::size_t i = 0; i < flagged.size(); ++i)
        for (std::size_t j = i + 1; j < flagged.size(); ++j) {
            bool touch = close(flagged[i].a, flagged[j].a) || close(flagged[i].a, flagged[j].b) ||
                         close(flagged[i].b, flagged[j].a) || close(flagged[i].b, flagged[j].b);
            if (touch) comp[find(static_cast<int>(i))] = find(static_cast<int>(j));
        }
    // keep the widest representative per chain
    std::vector<std::optional<FlatSegment>> reps(flagged.size());
    for (std::size_t i = 0; i < flagged.size(); ++i) {
        int r = find(static_cast<int>(i));
        if (!reps[r] || flagged[i].angle > reps[r]->angle) reps[r] = flagged[i];
    }
    for (const auto& s : reps)
        if (s) audit.segments.push_back(*s);
    std::sort(audit.segments.begin(), audit.segments.end(),
              [](const FlatSegment& a, const FlatSegment& b) { return a.angle > b.angle; });
    return audit;
}

// ---------------------------------------------------------------------------
// uniqueness diagnostic

enum class Connectivity { Connected, Disconnected };

struct UniquenessReport {
    std::vector<Vec> omega_points;  // pooled late-time samples on the unit field sphere
    Connectivity connectivity = Connectivity::Connected;
    int component_count = 1;
    std::vector<int> component_of;  // per omega point
    std::optional<double> lambda_bar;
    double epsilon;
};

/// Pools late-time samples of extremal runs from well-spread starts and
/// reports the connectivity of their epsilon-neighbor graph
/// (epsilon = 3x grid spacing). Connected supports uniqueness of the norm up
/// to homogeneity; disconnected is reported as inconclusive evidence.
/// lambda_bar is populated only when a reference field is supplied: it is the
/// max over omega points of reference(x).
inline UniquenessReport uniqueness_diagnostic(const SwitchedSystem& sys, const NormField& field,
                                              int start_count, double horizon, Rng& rng,
                                              const NormField* reference = nullptr) {
    UniquenessReport rep;
    rep.epsilon = 3.0 * field.grid().spacing();

    std::optional<NormField> dual;
    if (sys.pair) dual.emplace(dual_field(field));

    // sampling fine enough that consecutive path points sit within the
    // epsilon scale; the pool is thinned through a cell bucket afterwards
    const double gnorm = std::max(1e-9, sys.max_generator_norm());
    const double pool_step = std::min(0.1, 0.4 * field.grid().spacing()) / gnorm;
    std::map<std::array<long, 3>, Vec> buckets;
    const double cell = rep.epsilon / 3.0;
    auto pool_run = [&](const std::vector<Vec>& states, std::size_t from) {
        for (std::size_t k = from; k < states.size(); ++k) {
            double v = field.query(states[k]);
            if (v <= 1e-9) continue;
            Vec p = states[k] * (1.0 / v);
            std::array<long, 3> key = {0, 0, 0};
            for (int i = 0; i < p.size(); ++i) key[i] = std::lround(p[i] / cell);
            buckets.emplace(key, p);
        }
    };

    for (const Vec& x0 : spread_directions(sys.n, start_count)) {
        Vec start = x0 * (1.0 / field.query(x0));
        bool pooled = false;
        if (sys.pair) {
            try {
                ExtremalOptions opt;
                opt.sample_step = pool_step;
                ExtremalPath p = extremal_run_projected(*sys.pair, field, start, horizon, &*dual, 10.0, opt);
                pool_run(p.x_states, p.x_states.size() * 3 / 4);
                pooled = true;
            } catch (const DegenerateZeroError&) {
            }
        }
        if (!pooled) {
            GreedyRun run = field_extremal_run(sys, field, start, horizon, pool_step);
            pool_run(run.states, run.states.size() * 3 / 4);
        }
    }
    for (auto& [key, p] : buckets) rep.omega_points.push_back(p);

    // epsilon-graph connectivity by union-find
    const std::size_t m = rep.omega_points.size();
    std::vector<int> comp(m);
    for (std::size_t i = 0; i < m; ++i) comp[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int i) { return comp[i] == i ? i : comp[i] = find(comp[i]); };
    auto unite = [&](int a, int b) { comp[find(a)] = find(b); };
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            if (norm2(rep.omega_points[i] - rep.omega_points[j]) < rep.epsilon)
                unite(static_cast<int>(i), static_cast<int>(j));
        }
    rep.component_of.resize(m);
    std::vector<int> roots;
    for (std::size_t i = 0; i < m; ++i) {
        int r = find(static_cast<int>(i));
        auto it = std::find(roots.begin(), roots.end(), r);
        if (it == roots.end()) {
            roots.push_back(r);
            rep.component_of[i] = static_cast<int>(roots.size()) - 1;
        } else {
            rep.component_of[i] = static_cast<int>(it - roots.begin());
        }
    }
    rep.component_count = static_cast<int>(roots.size());
    rep.connectivity = rep.component_count <= 1 ? Connectivity::Connected : Connectivity::Disconnected;
    if (reference) {
        double lb = 0.0;
        for (const Vec& p : rep.omega_points) lb = std::max(lb, reference->query(p));
        rep.lambda_bar = lb;
    }
    (void)rng;
    return rep;
}

}  // namespace barnorm
