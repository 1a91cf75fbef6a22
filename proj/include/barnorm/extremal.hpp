#pragma once

// Coupled extremal/adjoint bang-bang flow for rank-one pairs: switching
// function phi = (b^T l)(c^T x), zero classification, event-driven
// integration with exact exponentials per bang, and sign-change statistics.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "barnorm/flow.hpp"
#include "barnorm/linalg.hpp"
#include "barnorm/model.hpp"

namespace barnorm {

struct DegenerateZeroError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SwitchingValues {
    double phi_b;        // b^T l
    double phi_c;        // c^T x
    double phi;          // phi_b * phi_c
    double dphi_b;       // -b^T A^T l   (derivative of phi_b at a b-zero)
    double ddphi_b_core; // b^T (A^T)^2 l
    double dphi_c;       // c^T A x
    double ddphi_c_core; // c^T A^2 x
};

inline SwitchingValues switching_values(const BarabanovPairData& pair, const Vec& x, const Vec& l) {
    if (x.size() != 3 || l.size() != 3) throw DimensionError("switching_values: dimension must be 3");
    SwitchingValues v;
    const Mat At = pair.A.transpose();
    v.phi_b = dot(pair.b, l);
    v.phi_c = dot(pair.c, x);
    v.phi = v.phi_b * v.phi_c;
    v.dphi_b = -dot(pair.b, At * l);
    v.ddphi_b_core = dot(pair.b, At * (At * l));
    v.dphi_c = dot(pair.c, pair.A * x);
    v.ddphi_c_core = dot(pair.c, pair.A * (pair.A * x));
    return v;
}

enum class ZeroFactor { B, C, Both };
enum class ZeroKind { Transversal, Tangential };

struct SwitchEvent {
    double time;
    ZeroFactor which;
    ZeroKind kind;
};

/// Classifies a zero of one switching factor at (x, l): transversal when the
/// first derivative clears deriv_tol, tangential when only the second
/// derivative does. Controllability makes the second test decisive; if both
/// fall below tolerance the input is flagged degenerate.
inline ZeroKind classify_zero(const BarabanovPairData& pair, const Vec& x, const Vec& l, ZeroFactor which,
                              double deriv_tol = 1e-6) {
    SwitchingValues v = switching_values(pair, x, l);
    double scale_b = norm2(pair.b) * norm2(l) * std::max(1.0, pair.A.norm1());
    double scale_c = norm2(pair.c) * norm2(x) * std::max(1.0, pair.A.norm1());
    double d1, d2, scale;
    if (which == ZeroFactor::B) {
        d1 = v.dphi_b;
        d2 = v.ddphi_b_core;
        scale = scale_b;
    } else {
        d1 = v.dphi_c;
        d2 = v.ddphi_c_core;
        scale = scale_c;
    }
    double tol = deriv_tol * std::max(1e-300, scale);
    if (std::abs(d1) > tol) return ZeroKind::Transversal;
    if (std::abs(d2) > tol * std::max(1.0, pair.A.norm1())) return ZeroKind::Tangential;
    throw DegenerateZeroError("classify_zero: both derivative tests below tolerance (violates controllability)");
}

struct ExtremalPath {
    std::vector<double> times;
    std::vector<Vec> x_states;
    std::vector<Vec> l_states;
    std::vector<double> u_values;
    std::vector<SwitchEvent> switch_times;

    // exact per-bang data for re-evaluation
    struct Bang {
        double t0;
        double u;
        Vec x0;
        Vec l0;
    };
    std::vector<Bang> bangs;
    double end_time = 0.0;
    Vec x_end, l_end;
};

struct ExtremalOptions {
    double sample_step = 0.05;
    double h_scan = 0.0;       // 0: auto = 1e-3 / max generator norm
    double time_tol = 1e-12;   // event bisection tolerance
    double zero_rel_tol = 1e-9;
    double deriv_tol = 1e-6;
};

namespace detail {

// Sign of phi just after (x,l): the factor derivative structure at a zero is
// u-independent, so the post-event sign is a function of the point alone.
// Returns 0 only in the degenerate case.
inline int phi_sign_after(const BarabanovPairData& pair, const Vec& x, const Vec& l, double zero_tol_b,
                          double zero_tol_c, double deriv_tol) {
    SwitchingValues v = switching_values(pair, x, l);
    auto factor_sign_after = [&](double val, double d1, double d2, double tol, double dscale) -> int {
        if (std::abs(val) > tol) return val > 0 ? 1 : -1;
        if (std::abs(d1) > deriv_tol * dscale) return d1 > 0 ? 1 : -1;
        if (std::abs(d2) > deriv_tol * dscale * std::max(1.0, pair.A.norm1())) return d2 > 0 ? 1 : -1;
        return 0;
    };
    double dscale_b = std::max(1e-300, norm2(pair.b) * norm2(l) * std::max(1.0, pair.A.norm1()));
    double dscale_c = std::max(1e-300, norm2(pair.c) * norm2(x) * std::max(1.0, pair.A.norm1()));
    int sb = factor_sign_after(v.phi_b, v.dphi_b, v.ddphi_b_core, zero_tol_b, dscale_b);
    int sc = factor_sign_after(v.phi_c, v.dphi_c, v.ddphi_c_core, zero_tol_c, dscale_c);
    return sb * sc;
}

}  // namespace detail

/// Event-driven integration of the coupled system: within each bang x and l
/// evolve by exact exponentials of the active generator; zeros of the
/// switching factors are located by scan plus bisection; u flips exactly when
/// phi changes sign (transversal single-factor zeros) and is retained at
/// tangential or simultaneous zeros. l0 is the caller's subgradient choice.
inline ExtremalPath integrate_extremal(const BarabanovPairData& pair, const Vec& x0, const Vec& l0,
                                       double horizon, ExtremalOptions opt = {}) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw std::domain_error("integrate_extremal: horizon must be positive and finite");
    if (norm2(x0) == 0.0 || norm2(l0) == 0.0)
        throw std::domain_error("integrate_extremal: x0 and l0 must be nonzero");

    const double gen_norm = std::max(pair.A.norm1(), pair.perturbed().norm1());
    double h = opt.h_scan > 0.0 ? opt.h_scan : 1e-3 / std::max(1e-9, gen_norm);

    ExtremalPath path;
    double t = 0.0;
    Vec x = x0, l = l0;

    auto zero_tol_b = [&](const Vec& lv) { return opt.zero_rel_tol * std::max(1e-300, norm2(pair.b) * norm2(lv)); };
    auto zero_tol_c = [&](const Vec& xv) { return opt.zero_rel_tol * std::max(1e-300, norm2(pair.c) * norm2(xv)); };

    int sgn = detail::phi_sign_after(pair, x, l, zero_tol_b(l), zero_tol_c(x), opt.deriv_tol);
    if (sgn == 0) throw DegenerateZeroError("integrate_extremal: degenerate switching state at t=0");
    double u = (1.0 + sgn) / 2.0;

    double next_sample = 0.0;
    double last_event = -1e300;
    auto record = [&](double tt, const Vec& xx, const Vec& ll) {
        if (!path.times.empty() && tt <= path.times.back() + 1e-15) return;
        path.times.push_back(tt);
        path.x_states.push_back(xx);
        path.l_states.push_back(ll);
        path.u_values.push_back(u);
    };

    while (t < horizon - 1e-15) {
        path.bangs.push_back({t, u, x, l});
        Mat G = pair.generator(u);
        Mat E = expm(G, h);
        Mat Einv = expm(-1.0 * G.transpose(), h);
        Vec xs = x, ls = l;
        double tb = t;

        // refine a bracketed zero of the chosen factor inside (lo, hi)
        auto bisect = [&](double lo, double hi, const Vec& xlo, const Vec& llo, bool factor_b) {
            double flo;
            Vec xcur = xlo, lcur = llo;
            flo = factor_b ? dot(pair.b, lcur) : dot(pair.c, xcur);
            while (hi - lo > opt.time_tol * std::max(1.0, std::abs(hi))) {
                double mid = 0.5 * (lo + hi);
                Vec xm = expm(G, mid - lo) * xcur;
                Vec lm = expm(-1.0 * G.transpose(), mid - lo) * lcur;
                double fm = factor_b ? dot(pair.b, lm) : dot(pair.c, xm);
                if ((flo <= 0.0) == (fm <= 0.0)) {
                    lo = mid;
                    xcur = xm;
                    lcur = lm;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        };

        std::optional<double> ev_b, ev_c;
        double fb_prev = dot(pair.b, ls), fc_prev = dot(pair.c, xs);
        double dfb_prev = -dot(pair.b, G.transpose() * ls);
        double dfc_prev = dot(pair.c, G * xs);
        double bang_end = horizon;
        while (tb < bang_end - 1e-15 && !ev_b && !ev_c) {
            double tn = std::min(tb + h, bang_end);
            Vec xn = (tn - tb == h) ? E * xs : expm(G, tn - tb) * xs;
            Vec ln = (tn - tb == h) ? Einv * ls : expm(-1.0 * G.transpose(), tn - tb) * ls;
            double fb = dot(pair.b, ln), fc = dot(pair.c, xn);
            double dfb = -dot(pair.b, G.transpose() * ln);
            double dfc = dot(pair.c, G * xn);

            bool fresh = tb > last_event + 10.0 * opt.time_tol;
            if (fresh && fb_prev * fb < 0.0) ev_b = bisect(tb, tn, xs, ls, true);
            if (fresh && fc_prev * fc < 0.0) ev_c = bisect(tb, tn, xs, ls, false);
            // tangential zeros: derivative sign change with a small factor value
            if (fresh && !ev_b && dfb_prev * dfb < 0.0 && std::min(std::abs(fb_prev), std::abs(fb)) <
                                                              1e-3 * norm2(pair.b) * norm2(ln)) {
                // locate the critical point of phi_b, test for a touch
                double lo = tb, hi = tn;
                Vec xcur = xs, lcur = ls;
                double dlo = dfb_prev;
                while (hi - lo > opt.time_tol) {
                    double mid = 0.5 * (lo + hi);
                    Vec lm = expm(-1.0 * G.transpose(), mid - lo) * lcur;
                    Vec xm = expm(G, mid - lo) * xcur;
                    double dm = -dot(pair.b, G.transpose() * lm);
                    if ((dlo <= 0.0) == (dm <= 0.0)) {
                        lo = mid;
                        lcur = lm;
                        xcur = xm;
                        dlo = dm;
                    } else {
                        hi = mid;
                    }
                }
                double tcrit = 0.5 * (lo + hi);
                Vec lcrit = expm(-1.0 * G.transpose(), tcrit - t) * l;
                if (std::abs(dot(pair.b, lcrit)) < zero_tol_b(lcrit) * 1e3) ev_b = tcrit;
            }
            if (fresh && !ev_c && dfc_prev * dfc < 0.0 && std::min(std::abs(fc_prev), std::abs(fc)) <
                                                              1e-3 * norm2(pair.c) * norm2(xn)) {
                double lo = tb, hi = tn;
                Vec xcur = xs;
                double dlo = dfc_prev;
                while (hi - lo > opt.time_tol) {
                    double mid = 0.5 * (lo + hi);
                    Vec xm = expm(G, mid - lo) * xcur;
                    double dm = dot(pair.c, G * xm);
                    if ((dlo <= 0.0) == (dm <= 0.0)) {
                        lo = mid;
                        xcur = xm;
                        dlo = dm;
                    } else {
                        hi = mid;
                    }
                }
                double tcrit = 0.5 * (lo + hi);
                Vec xcrit = expm(G, tcrit - t) * x;
                if (std::abs(dot(pair.c, xcrit)) < zero_tol_c(xcrit) * 1e3) ev_c = tcrit;
            }
            if (ev_b || ev_c) break;

            // samples inside the bang
            while (next_sample <= tn + 1e-15 && next_sample < bang_end) {
                if (next_sample >= tb - 1e-15) {
                    Vec xsmp = expm(G, next_sample - t) * x;
                    Vec lsmp = expm(-1.0 * G.transpose(), next_sample - t) * l;
                    record(next_sample, xsmp, lsmp);
                }
                next_sample += opt.sample_step;
            }
            tb = tn;
            xs = xn;
            ls = ln;
            fb_prev = fb;
            fc_prev = fc;
            dfb_prev = dfb;
            dfc_prev = dfc;
        }

        if (!ev_b && !ev_c) {
            // bang runs to the horizon
            x = expm(G, horizon - t) * x;
            l = expm(-1.0 * G.transpose(), horizon - t) * l;
            t = horizon;
            record(t, x, l);
            break;
        }

        double te;
        ZeroFactor which;
        if (ev_b && ev_c) {
            if (std::abs(*ev_b - *ev_c) <= 10.0 * opt.time_tol * std::max(1.0, std::abs(*ev_b))) {
                te = 0.5 * (*ev_b + *ev_c);
                which = ZeroFactor::Both;
            } else if (*ev_b < *ev_c) {
                te = *ev_b;
                which = ZeroFactor::B;
            } else {
                te = *ev_c;
                which = ZeroFactor::C;
            }
        } else if (ev_b) {
            te = *ev_b;
            which = ZeroFactor::B;
        } else {
            te = *ev_c;
            which = ZeroFactor::C;
        }

        Vec xe = expm(G, te - t) * x;
        Vec le = expm(-1.0 * G.transpose(), te - t) * l;
        ZeroKind kind;
        if (which == ZeroFactor::Both) {
            kind = ZeroKind::Transversal;  // per-factor kinds audited below
            classify_zero(pair, xe, le, ZeroFactor::B, opt.deriv_tol);
            classify_zero(pair, xe, le, ZeroFactor::C, opt.deriv_tol);
        } else {
            kind = classify_zero(pair, xe, le, which, opt.deriv_tol);
        }
        path.switch_times.push_back({te, which, kind});
        record(te, xe, le);

        int s_after = detail::phi_sign_after(pair, xe, le, zero_tol_b(le), zero_tol_c(xe), opt.deriv_tol);
        if (s_after == 0) throw DegenerateZeroError("integrate_extremal: degenerate zero along the flow");
        u = (1.0 + s_after) / 2.0;
        t = te;
        x = xe;
        l = le;
        last_event = te;
    }

    path.end_time = t;
    path.x_end = x;
    path.l_end = l;
    if (path.times.empty() || path.times.back() < t - 1e-15) record(t, x, l);
    return path;
}

/// Counts transversal zeros of each factor inside [t_lo, t_hi]. Simultaneous
/// zeros count toward both factors.
inline std::pair<int, int> sign_change_stats(const ExtremalPath& path, double t_lo, double t_hi) {
    if (t_lo > t_hi || t_lo < -1e-12 || t_hi > path.end_time + 1e-9)
        throw std::domain_error("sign_change_stats: window outside path domain");
    int nb = 0, nc = 0;
    for (const auto& ev : path.switch_times) {
        if (ev.time < t_lo || ev.time > t_hi) continue;
        if (ev.kind != ZeroKind::Transversal) continue;
        if (ev.which == ZeroFactor::B || ev.which == ZeroFactor::Both) ++nb;
        if (ev.which == ZeroFactor::C || ev.which == ZeroFactor::Both) ++nc;
    }
    return {nb, nc};
}

/// Exact state evaluator over the recorded bang decomposition.
class ExtremalEvaluator : public PathEvaluator {
  public:
    ExtremalEvaluator(const BarabanovPairData& pair, const ExtremalPath& path) : pair_(pair), path_(path) {}
    Vec state(double t) const override {
        const auto& b = locate(t);
        return expm(pair_.generator(b.u), t - b.t0) * b.x0;
    }
    Vec adjoint(double t) const {
        const auto& b = locate(t);
        return expm(-1.0 * pair_.generator(b.u).transpose(), t - b.t0) * b.l0;
    }
    double control(double t) const { return locate(t).u; }
    double max_time() const override { return path_.end_time; }

  private:
    const ExtremalPath::Bang& locate(double t) const {
        if (t < 0.0 || t > path_.end_time * (1.0 + 1e-12) + 1e-300)
            throw std::domain_error("ExtremalEvaluator: time outside path domain");
        std::size_t lo = 0, hi = path_.bangs.size();
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            if (path_.bangs[mid].t0 <= t)
                lo = mid;
            else
                hi = mid;
        }
        return path_.bangs[lo];
    }
    BarabanovPairData pair_;
    const ExtremalPath& path_;
};

}  // namespace barnorm
