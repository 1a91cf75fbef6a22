#pragma once

// Exact propagation of trajectories and adjoints under piecewise-constant
// signals, fundamental matrices, transverse sections, and omega-limit
// detection via Poincare recurrence on a section.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "barnorm/linalg.hpp"
#include "barnorm/model.hpp"

namespace barnorm {

struct StationaryPointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Segment {
    double duration;  // > 0, seconds
    double control;   // vertex index for polytopes; u in [0,1] for pairs
};

struct SwitchingSignal {
    std::vector<Segment> segments;

    double total_duration() const {
        double t = 0.0;
        for (const auto& s : segments) t += s.duration;
        return t;
    }
    void validate(const SwitchedSystem& sys) const {
        if (segments.empty()) throw std::domain_error("SwitchingSignal: empty signal");
        for (const auto& s : segments) {
            if (!(s.duration > 0.0) || !std::isfinite(s.duration))
                throw std::domain_error("SwitchingSignal: durations must be positive and finite");
            if (sys.pair) {
                if (s.control < 0.0 || s.control > 1.0)
                    throw std::domain_error("SwitchingSignal: pair controls must lie in [0,1]");
            } else {
                int k = static_cast<int>(std::lround(s.control));
                if (std::abs(s.control - k) > 1e-12 || k < 0 || k >= static_cast<int>(sys.generators.size()))
                    throw std::domain_error("SwitchingSignal: vertex index out of range");
            }
        }
    }
};

inline Mat generator_of(const SwitchedSystem& sys, double control) {
    if (sys.pair) return sys.pair->generator(control);
    return sys.generators[static_cast<int>(std::lround(control))];
}

struct Trajectory {
    std::vector<double> times;  // strictly increasing, starting at 0
    std::vector<Vec> states;
    SwitchingSignal signal;
    std::vector<Mat> fundamental;  // R(t_k) snapshots when recorded
};

/// Abstract sampled-path interface used by the omega-limit detector.
struct PathEvaluator {
    virtual ~PathEvaluator() = default;
    virtual Vec state(double t) const = 0;
    virtual double max_time() const = 0;
};

/// Exact bang-arc evaluator for a fixed signal: caches segment-boundary
/// states and answers state(t) with a single matrix exponential.
class FlowEvaluator : public PathEvaluator {
  public:
    FlowEvaluator(const SwitchedSystem& sys, const SwitchingSignal& signal, Vec x0, bool adjoint = false)
        : adjoint_(adjoint) {
        signal.validate(sys);
        if (x0.size() != sys.n) throw DimensionError("FlowEvaluator: state dimension mismatch");
        double t = 0.0;
        Vec x = x0;
        for (const auto& seg : signal.segments) {
            Mat g = generator_of(sys, seg.control);
            if (adjoint) g = -1.0 * g.transpose();
            starts_.push_back({t, x, g});
            x = expm(g, seg.duration) * x;
            t += seg.duration;
        }
        end_time_ = t;
        end_state_ = x;
    }

    Vec state(double t) const override {
        if (t < 0.0 || t > end_time_ * (1.0 + 1e-12) + 1e-300)
            throw std::domain_error("FlowEvaluator: time outside signal domain");
        if (t >= end_time_) return end_state_;
        std::size_t lo = 0, hi = starts_.size();
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            if (starts_[mid].t0 <= t)
                lo = mid;
            else
                hi = mid;
        }
        const auto& s = starts_[lo];
        return expm(s.gen, t - s.t0) * s.x0;
    }
    double max_time() const override { return end_time_; }
    const Vec& end_state() const { return end_state_; }

  private:
    struct SegStart {
        double t0;
        Vec x0;
        Mat gen;
    };
    std::vector<SegStart> starts_;
    Vec end_state_;
    double end_time_ = 0.0;
    bool adjoint_ = false;
};

namespace detail {

inline Trajectory propagate_impl(const SwitchedSystem& sys, const SwitchingSignal& signal, const Vec& x0,
                                 double sample_step, bool adjoint, bool record_fundamental) {
    signal.validate(sys);
    if (x0.size() != sys.n) throw DimensionError("propagate: state dimension mismatch");
    if (!(sample_step > 0.0)) throw std::domain_error("propagate: sample_step must be positive");

    Trajectory out;
    out.signal = signal;
    Vec x = x0;
    Mat R = Mat::identity(sys.n);
    double t = 0.0;
    auto push = [&](double tt, const Vec& xx, const Mat& RR) {
        if (!out.times.empty() && tt <= out.times.back() + 1e-15) return;
        out.times.push_back(tt);
        out.states.push_back(xx);
        if (record_fundamental) out.fundamental.push_back(RR);
    };
    push(0.0, x, R);
    long sample_idx = 1;
    for (const auto& seg : signal.segments) {
        Mat g = generator_of(sys, seg.control);
        Mat gflow = adjoint ? Mat(-1.0 * g.transpose()) : g;
        double tend = t + seg.duration;
        while (sample_idx * sample_step < tend - 1e-15) {
            double ts = sample_idx * sample_step;
            if (ts > t + 1e-15) {
                Mat step = expm(gflow, ts - t);
                push(ts, step * x, record_fundamental ? Mat(step * R) : R);
            }
            ++sample_idx;
        }
        Mat step = expm(gflow, tend - t);
        x = step * x;
        if (record_fundamental) R = step * R;
        t = tend;
        push(t, x, R);
    }
    return out;
}

}  // namespace detail

/// States by exact bang-arc exponential products, sampled at multiples of
/// sample_step plus all segment boundaries.
inline Trajectory propagate(const SwitchedSystem& sys, const SwitchingSignal& signal, const Vec& x0,
                            double sample_step, bool record_fundamental = false) {
    return detail::propagate_impl(sys, signal, x0, sample_step, false, record_fundamental);
}

/// Adjoint flow dl/dt = -A^T(t) l, same sampling scheme as propagate.
inline Trajectory adjoint_propagate(const SwitchedSystem& sys, const SwitchingSignal& signal, const Vec& l0,
                                    double sample_step, bool record_fundamental = false) {
    return detail::propagate_impl(sys, signal, l0, sample_step, true, record_fundamental);
}

// ---------------------------------------------------------------------------
// transverse sections

struct Section {
    Vec normal;        // w
    double offset;     // nu = w^T patch_center
    Vec patch_center;  // z
    double patch_radius;
    double margin;  // min over generators and sampled patch points of w^T A x
};

namespace detail {

// Minimum-norm point of conv{pts} by enumerating affinely independent
// support subsets (points are few: one per generator).
inline Vec min_norm_point_in_hull(const std::vector<Vec>& pts) {
    const int n = pts[0].size();
    const int m = static_cast<int>(pts.size());
    Vec best = pts[0];
    double bestn = norm2(best);
    for (int mask = 1; mask < (1 << m); ++mask) {
        std::vector<int> idx;
        for (int k = 0; k < m; ++k)
            if (mask & (1 << k)) idx.push_back(k);
        const int s = static_cast<int>(idx.size());
        if (s > n + 1) continue;
        // minimize ||sum li vi|| with sum li = 1: solve (G + 11^T) l = 1
        // via the KKT system in s unknowns
        std::vector<std::vector<double>> G(s, std::vector<double>(s + 1, 0.0));
        for (int i = 0; i < s; ++i) {
            for (int j = 0; j < s; ++j) G[i][j] = dot(pts[idx[i]], pts[idx[j]]) + 1.0;
            G[i][s] = 1.0;
        }
        // gaussian elimination with partial pivoting
        bool ok = true;
        for (int col = 0; col < s && ok; ++col) {
            int piv = col;
            for (int r = col + 1; r < s; ++r)
                if (std::abs(G[r][col]) > std::abs(G[piv][col])) piv = r;
            if (std::abs(G[piv][col]) < 1e-14) {
                ok = false;
                break;
            }
            std::swap(G[col], G[piv]);
            for (int r = col + 1; r < s; ++r) {
                double f = G[r][col] / G[col][col];
                for (int j = col; j <= s; ++j) G[r][j] -= f * G[col][j];
            }
        }
        if (!ok) continue;
        std::vector<double> lam(s);
        for (int i = s - 1; i >= 0; --i) {
            double v = G[i][s];
            for (int j = i + 1; j < s; ++j) v -= G[i][j] * lam[j];
            lam[i] = v / G[i][i];
        }
        bool feas = true;
        for (double l : lam)
            if (l < -1e-12) feas = false;
        if (!feas) continue;
        Vec p(n);
        for (int i = 0; i < s; ++i) p += lam[i] * pts[idx[i]];
        double np = norm2(p);
        if (np < bestn) {
            bestn = np;
            best = p;
        }
    }
    return best;
}

}  // namespace detail

/// Builds a local transverse section at z: the normal strictly separates 0
/// from {A z : A generator}, and the patch radius is shrunk until sampled
/// transversality holds with positive margin. Throws StationaryPointError
/// when 0 lies in the velocity hull at z.
inline Section build_section(const SwitchedSystem& sys, const Vec& z, double patch_radius) {
    if (z.size() != sys.n) throw DimensionError("build_section: dimension mismatch");
    std::vector<Vec> vel;
    double scale = 0.0;
    for (const Mat& g : sys.generators) {
        vel.push_back(g * z);
        scale = std::max(scale, norm2(vel.back()));
    }
    Vec p = detail::min_norm_point_in_hull(vel);
    if (norm2(p) <= 1e-12 * std::max(1.0, scale))
        throw StationaryPointError("build_section: 0 lies in the velocity hull at z (stationary point)");

    Section sec;
    sec.normal = normalized(p);
    sec.patch_center = z;
    sec.offset = dot(sec.normal, z);

    // tangent frame of the section plane
    std::vector<Vec> tans;
    for (int i = 0; i < sys.n; ++i) {
        Vec e = Vec::unit(sys.n, i);
        e -= dot(sec.normal, e) * sec.normal;
        if (norm2(e) > 1e-8) tans.push_back(normalized(e));
        if (static_cast<int>(tans.size()) == 2) break;
    }
    for (std::size_t i = 1; i < tans.size(); ++i) {
        tans[i] -= dot(tans[0], tans[i]) * tans[0];
        tans[i] = normalized(tans[i]);
    }

    double r = patch_radius;
    for (int tries = 0; tries < 60; ++tries) {
        double worst = 1e300;
        const int K = 8;
        for (int k = 0; k <= K; ++k) {
            for (const Vec& tan : tans) {
                double a = (2.0 * k / K - 1.0) * r;
                Vec x = z + a * tan;
                for (const Mat& g : sys.generators) worst = std::min(worst, dot(sec.normal, g * x));
            }
            if (tans.size() == 2) {
                double th = 2.0 * M_PI * k / K;
                Vec x = z + r * (std::cos(th) * tans[0] + std::sin(th) * tans[1]);
                for (const Mat& g : sys.generators) worst = std::min(worst, dot(sec.normal, g * x));
            }
        }
        if (worst > 0.0) {
            sec.margin = worst;
            sec.patch_radius = r;
            return sec;
        }
        r *= 0.5;
    }
    throw StationaryPointError("build_section: could not establish a transverse patch");
}

// ---------------------------------------------------------------------------
// omega-limit detection

enum class OmegaKind { FixedPointZero, Periodic, FamilyBand, Unresolved };

struct OmegaReport {
    OmegaKind kind = OmegaKind::Unresolved;
    std::vector<Vec> representative_points;
    std::optional<double> period_estimate;
    double residual = 0.0;
    std::vector<double> crossing_times;
    std::vector<Vec> crossing_points;
    bool crossings_monotone = true;
};

struct OmegaOptions {
    double scan_step = 0.0;        // 0: auto from generator norms
    double time_tol = 1e-10;       // crossing bisection tolerance
    double point_tol = 1e-6;       // Cauchy threshold for periodic verdict
    double zero_tol = 1e-6;        // state norm threshold for fixed-point-zero
    double monotone_tol = 1e-8;
};

/// Records transverse-section crossings of a path and classifies the apparent
/// omega-limit: convergent crossings with convergent return times -> periodic;
/// decaying state -> fixed-point-zero; non-Cauchy crossings confined to an
/// arc -> family-band; otherwise unresolved.
inline OmegaReport omega_estimate(const SwitchedSystem& sys, const PathEvaluator& path, double horizon,
                                  const Section& section, OmegaOptions opt = {}) {
    OmegaReport rep;
    double tmax = std::min(horizon, path.max_time());
    double step = opt.scan_step;
    if (step <= 0.0) step = 0.05 / std::max(1e-9, sys.max_generator_norm());

    const Vec& w = section.normal;
    auto g = [&](double t) { return dot(w, path.state(t)) - section.offset; };
    auto in_patch = [&](double t) {
        return norm2(path.state(t) - section.patch_center) <= section.patch_radius;
    };

    double tprev = 0.0, gprev = g(0.0);
    for (double t = step; t <= tmax; t += step) {
        double gt = g(t);
        if (gprev < 0.0 && gt >= 0.0) {  // upward crossing of the plane
            double lo = tprev, hi = t;
            while (hi - lo > opt.time_tol) {
                double mid = 0.5 * (lo + hi);
                if (g(mid) < 0.0)
                    lo = mid;
                else
                    hi = mid;
            }
            double tc = 0.5 * (lo + hi);
            if (in_patch(tc)) {
                rep.crossing_times.push_back(tc);
                rep.crossing_points.push_back(path.state(tc));
            }
        }
        tprev = t;
        gprev = gt;
    }

    // fixed point at zero?
    double late_norm = norm2(path.state(tmax));
    double start_norm = norm2(path.state(0.0));
    if (late_norm < opt.zero_tol * std::max(1.0, start_norm)) {
        rep.kind = OmegaKind::FixedPointZero;
        rep.residual = late_norm;
        rep.representative_points = {path.state(tmax)};
        return rep;
    }

    const std::size_t m = rep.crossing_times.size();
    if (m >= 2) {
        // monotonicity of positions along the section
        Vec tan(sys.n);
        {
            Vec ref = rep.crossing_points.back() - section.patch_center;
            ref -= dot(w, ref) * w;
            if (norm2(ref) > 1e-12)
                tan = normalized(ref);
            else {
                for (int i = 0; i < sys.n; ++i) {
                    Vec e = Vec::unit(sys.n, i);
                    e -= dot(w, e) * w;
                    if (norm2(e) > 1e-8) {
                        tan = normalized(e);
                        break;
                    }
                }
            }
        }
        std::vector<double> pos;
        for (const Vec& p : rep.crossing_points) pos.push_back(dot(tan, p - section.patch_center));
        int dir = 0;
        for (std::size_t k = 1; k < m; ++k) {
            double d = pos[k] - pos[k - 1];
            if (std::abs(d) <= opt.monotone_tol) continue;
            int s = d > 0 ? 1 : -1;
            if (dir == 0)
                dir = s;
            else if (s != dir) {
                rep.crossings_monotone = false;
                break;
            }
        }

        double dpt = norm2(rep.crossing_points[m - 1] - rep.crossing_points[m - 2]);
        rep.residual = dpt;
        if (m >= 3) {
            double dt1 = rep.crossing_times[m - 1] - rep.crossing_times[m - 2];
            double dt2 = rep.crossing_times[m - 2] - rep.crossing_times[m - 3];
            bool times_converge = std::abs(dt1 - dt2) < 1e-3 * std::max(dt1, dt2) + 1e-9;
            if (dpt < opt.point_tol && times_converge) {
                rep.kind = OmegaKind::Periodic;
                rep.period_estimate = dt1;
                rep.representative_points = {rep.crossing_points[m - 1]};
                return rep;
            }
            // band: late crossings stay inside an arc but do not converge
            std::size_t tail = std::min<std::size_t>(m, 8);
            double lo = 1e300, hi = -1e300;
            for (std::size_t k = m - tail; k < m; ++k) {
                lo = std::min(lo, pos[k]);
                hi = std::max(hi, pos[k]);
            }
            if (hi - lo > 10.0 * opt.point_tol && hi - lo < 0.5 * section.patch_radius) {
                rep.kind = OmegaKind::FamilyBand;
                for (std::size_t k = m - tail; k < m; ++k) rep.representative_points.push_back(rep.crossing_points[k]);
                rep.residual = hi - lo;
                return rep;
            }
        }
        rep.representative_points = {rep.crossing_points.back()};
    }
    rep.kind = OmegaKind::Unresolved;
    return rep;
}

}  // namespace barnorm
