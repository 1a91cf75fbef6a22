#pragma once

// Antipodally symmetric sphere discretizations with positive-weight conic
// interpolation: a uniform angular grid on S^1 and a subdivided icosahedron
// on S^2 with hierarchical point location. Grids are immutable once built.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "barnorm/linalg.hpp"

namespace barnorm {

/// Interpolation stencil: query direction q = sum weights[k] * node(idx[k])
/// with nonnegative weights, so any value extension is positively homogeneous
/// and monotone in the node values.
struct InterpStencil {
    std::array<int, 3> idx{-1, -1, -1};
    std::array<double, 3> weight{0.0, 0.0, 0.0};
    int count = 0;
};

class SphereGrid {
  public:
    virtual ~SphereGrid() = default;
    virtual int dim() const = 0;
    virtual int node_count() const = 0;
    virtual const Vec& node(int i) const = 0;
    virtual int antipode(int i) const = 0;
    virtual InterpStencil locate(const Vec& unit_dir) const = 0;
    virtual const std::vector<int>& neighbors(int i) const = 0;
    /// Representative node spacing in radians.
    virtual double spacing() const = 0;
};

// ---------------------------------------------------------------------------

class CircleGrid final : public SphereGrid {
  public:
    explicit CircleGrid(int count) : count_(count) {
        if (count < 8 || count % 2 != 0) throw std::domain_error("CircleGrid: need an even node count >= 8");
        nodes_.reserve(count);
        for (int k = 0; k < count; ++k) {
            double th = 2.0 * M_PI * k / count;
            nodes_.push_back(Vec{std::cos(th), std::sin(th)});
        }
        nbrs_.resize(count);
        for (int k = 0; k < count; ++k) nbrs_[k] = {(k + count - 1) % count, (k + 1) % count};
    }

    int dim() const override { return 2; }
    int node_count() const override { return count_; }
    const Vec& node(int i) const override { return nodes_[i]; }
    int antipode(int i) const override { return (i + count_ / 2) % count_; }
    double spacing() const override { return 2.0 * M_PI / count_; }
    const std::vector<int>& neighbors(int i) const override { return nbrs_[i]; }

    InterpStencil locate(const Vec& q) const override {
        double th = std::atan2(q[1], q[0]);
        if (th < 0.0) th += 2.0 * M_PI;
        double pos = th * count_ / (2.0 * M_PI);
        int i = static_cast<int>(std::floor(pos)) % count_;
        int j = (i + 1) % count_;
        // conic weights: q = a n_i + b n_j
        const Vec &ni = nodes_[i], &nj = nodes_[j];
        double det = ni[0] * nj[1] - ni[1] * nj[0];
        double a = (q[0] * nj[1] - q[1] * nj[0]) / det;
        double b = (ni[0] * q[1] - ni[1] * q[0]) / det;
        InterpStencil st;
        st.count = 2;
        st.idx = {i, j, -1};
        st.weight = {std::max(0.0, a), std::max(0.0, b), 0.0};
        return st;
    }

  private:
    int count_;
    std::vector<Vec> nodes_;
    std::vector<std::vector<int>> nbrs_;
};

// ---------------------------------------------------------------------------

/// Icosahedron subdivided `level` times: 12, 42, 162, 642, 2562, 10242, ...
/// vertices. The vertex set is exactly antipodally closed at every level.
class IcoSphereGrid final : public SphereGrid {
  public:
    explicit IcoSphereGrid(int level) : level_(level) {
        if (level < 0 || level > 7) throw std::domain_error("IcoSphereGrid: level must be in [0,7]");
        build();
    }

    int dim() const override { return 3; }
    int node_count() const override { return static_cast<int>(verts_.size()); }
    const Vec& node(int i) const override { return verts_[i]; }
    int antipode(int i) const override { return antipode_[i]; }
    double spacing() const override { return edge_angle_; }
    const std::vector<int>& neighbors(int i) const override { return nbrs_[i]; }

    InterpStencil locate(const Vec& q) const override {
        // best base face, then descend the subdivision hierarchy
        int face = -1;
        double best = -1e300;
        for (int f = 0; f < 20; ++f) {
            double m = min_bary(0, f, q);
            if (m > best) {
                best = m;
                face = f;
            }
        }
        for (int lev = 0; lev < level_; ++lev) {
            const auto& children = child_of_[lev][face];
            int next = -1;
            best = -1e300;
            for (int c : children) {
                double m = min_bary(lev + 1, c, q);
                if (m > best) {
                    best = m;
                    next = c;
                }
            }
            face = next;
        }
        const Tri& t = faces_[level_][face];
        Vec w = bary(level_, face, q);
        InterpStencil st;
        st.count = 3;
        st.idx = {t.v[0], t.v[1], t.v[2]};
        double w0 = std::max(0.0, w[0]), w1 = std::max(0.0, w[1]), w2 = std::max(0.0, w[2]);
        st.weight = {w0, w1, w2};
        return st;
    }

    int face_count() const { return static_cast<int>(faces_[level_].size()); }
    std::array<int, 3> face_vertices(int f) const {
        const Tri& t = faces_[level_][f];
        return {t.v[0], t.v[1], t.v[2]};
    }

  private:
    struct Tri {
        std::array<int, 3> v;
    };

    // coefficients of q in the vertex basis, via the precomputed inverse
    Vec bary(int lev, int face, const Vec& q) const {
        const std::array<double, 9>& inv = face_inv_[lev][face];
        Vec w(3);
        for (int i = 0; i < 3; ++i) w[i] = inv[3 * i] * q[0] + inv[3 * i + 1] * q[1] + inv[3 * i + 2] * q[2];
        return w;
    }
    double min_bary(int lev, int face, const Vec& q) const {
        Vec w = bary(lev, face, q);
        return std::min(w[0], std::min(w[1], w[2]));
    }

    int add_vertex(const Vec& v) {
        auto key = vkey(v);
        auto it = vmap_.find(key);
        if (it != vmap_.end()) return it->second;
        int idx = static_cast<int>(verts_.size());
        verts_.push_back(v);
        vmap_.emplace(key, idx);
        return idx;
    }
    static std::array<std::int64_t, 3> vkey(const Vec& v) {
        // exact bit key is unstable across +/-0; quantize instead
        auto q = [](double x) { return static_cast<std::int64_t>(std::llround(x * 1e14)); };
        return {q(v[0]), q(v[1]), q(v[2])};
    }

    int midpoint(int i, int j, std::map<std::pair<int, int>, int>& cache) {
        auto key = std::minmax(i, j);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        Vec m = normalized(verts_[i] + verts_[j]);
        int idx = add_vertex(m);
        cache.emplace(key, idx);
        return idx;
    }

    void build() {
        const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
        const double a = 1.0 / std::sqrt(1.0 + phi * phi);
        const double b = phi * a;
        std::vector<Vec> base = {
            Vec{-a, b, 0},  Vec{a, b, 0},  Vec{-a, -b, 0}, Vec{a, -b, 0},
            Vec{0, -a, b},  Vec{0, a, b},  Vec{0, -a, -b}, Vec{0, a, -b},
            Vec{b, 0, -a},  Vec{b, 0, a},  Vec{-b, 0, -a}, Vec{-b, 0, a},
        };
        for (const Vec& v : base) add_vertex(v);
        std::vector<Tri> f0 = {
            {{0, 11, 5}}, {{0, 5, 1}},  {{0, 1, 7}},   {{0, 7, 10}}, {{0, 10, 11}},
            {{1, 5, 9}},  {{5, 11, 4}}, {{11, 10, 2}}, {{10, 7, 6}}, {{7, 1, 8}},
            {{3, 9, 4}},  {{3, 4, 2}},  {{3, 2, 6}},   {{3, 6, 8}},  {{3, 8, 9}},
            {{4, 9, 5}},  {{2, 4, 11}}, {{6, 2, 10}},  {{8, 6, 7}},  {{9, 8, 1}},
        };
        faces_.push_back(std::move(f0));
        child_of_.resize(level_);
        for (int lev = 0; lev < level_; ++lev) {
            std::map<std::pair<int, int>, int> cache;
            std::vector<Tri> next;
            child_of_[lev].resize(faces_[lev].size());
            for (std::size_t fi = 0; fi < faces_[lev].size(); ++fi) {
                const Tri& t = faces_[lev][fi];
                int m01 = midpoint(t.v[0], t.v[1], cache);
                int m12 = midpoint(t.v[1], t.v[2], cache);
                int m20 = midpoint(t.v[2], t.v[0], cache);
                std::array<Tri, 4> kids = {Tri{{t.v[0], m01, m20}}, Tri{{t.v[1], m12, m01}},
                                           Tri{{t.v[2], m20, m12}}, Tri{{m01, m12, m20}}};
                for (const Tri& k : kids) {
                    child_of_[lev][fi].push_back(static_cast<int>(next.size()));
                    next.push_back(k);
                }
            }
            faces_.push_back(std::move(next));
        }

        // inverse vertex bases per face, used by the barycentric tests
        face_inv_.resize(faces_.size());
        for (std::size_t lev = 0; lev < faces_.size(); ++lev) {
            face_inv_[lev].resize(faces_[lev].size());
            for (std::size_t f = 0; f < faces_[lev].size(); ++f) {
                const Tri& t = faces_[lev][f];
                Mat m(3);
                for (int i = 0; i < 3; ++i) {
                    m(i, 0) = verts_[t.v[0]][i];
                    m(i, 1) = verts_[t.v[1]][i];
                    m(i, 2) = verts_[t.v[2]][i];
                }
                std::array<double, 9>& inv = face_inv_[lev][f];
                for (int col = 0; col < 3; ++col) {
                    Vec e = solve_linear(m, Vec::unit(3, col));
                    for (int row = 0; row < 3; ++row) inv[3 * row + col] = e[row];
                }
            }
        }

        const int n = node_count();
        antipode_.resize(n);
        for (int i = 0; i < n; ++i) {
            auto it = vmap_.find(vkey(-1.0 * verts_[i]));
            if (it == vmap_.end()) throw std::logic_error("IcoSphereGrid: antipode missing");
            antipode_[i] = it->second;
        }
        nbrs_.assign(n, {});
        for (const Tri& t : faces_[level_])
            for (int e = 0; e < 3; ++e) {
                int u = t.v[e], v = t.v[(e + 1) % 3];
                bool seen = false;
                for (int w : nbrs_[u])
                    if (w == v) seen = true;
                if (!seen) {
                    nbrs_[u].push_back(v);
                    nbrs_[v].push_back(u);
                }
            }
        const Tri& t0 = faces_[level_][0];
        edge_angle_ = std::acos(std::clamp(dot(verts_[t0.v[0]], verts_[t0.v[1]]), -1.0, 1.0));
    }

    int level_;
    std::vector<Vec> verts_;
    std::map<std::array<std::int64_t, 3>, int> vmap_;
    std::vector<std::vector<Tri>> faces_;               // per level
    std::vector<std::vector<std::vector<int>>> child_of_;  // level -> face -> children
    std::vector<std::vector<std::array<double, 9>>> face_inv_;
    std::vector<int> antipode_;
    std::vector<std::vector<int>> nbrs_;
    double edge_angle_ = 0.0;
};

/// Grid factory: node budget -> concrete grid. For n=3 the subdivision level
/// is the smallest one meeting the request. Grids are immutable and cached.
inline std::shared_ptr<const SphereGrid> make_sphere_grid(int n, int requested_nodes) {
    static std::map<std::pair<int, int>, std::shared_ptr<const SphereGrid>> cache;
    static std::mutex mtx;
    if (n == 2) {
        int count = std::max(requested_nodes, 64);
        if (count % 2) ++count;
        std::lock_guard<std::mutex> lock(mtx);
        auto& slot = cache[{2, count}];
        if (!slot) slot = std::make_shared<CircleGrid>(count);
        return slot;
    }
    if (n == 3) {
        int level = 0, count = 12;
        while (count < requested_nodes && level < 7) {
            ++level;
            count = 10 * (1 << (2 * level)) + 2;
        }
        std::lock_guard<std::mutex> lock(mtx);
        auto& slot = cache[{3, level}];
        if (!slot) slot = std::make_shared<IcoSphereGrid>(level);
        return slot;
    }
    throw DimensionError("make_sphere_grid: norm fields support n in {2,3}");
}

}  // namespace barnorm
