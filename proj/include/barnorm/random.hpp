#pragma once

// Seeded randomness helpers. Every stochastic routine in the toolkit draws
// from an explicitly passed Rng so runs are reproducible from a single seed.

#include <cstdint>
#include <random>
#include <vector>

#include "barnorm/linalg.hpp"

namespace barnorm {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec random_unit_vec(Rng& rng, int n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec v(n);
    double s = 0.0;
    do {
        for (int i = 0; i < n; ++i) v[i] = g(rng);
        s = norm2(v);
    } while (s < 1e-8);
    return v * (1.0 / s);
}

inline Mat random_matrix(Rng& rng, int n, double amplitude = 1.0) {
    Mat m(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = uniform(rng, -amplitude, amplitude);
    return m;
}

/// Deterministic well-spread unit directions (golden-angle spiral for n=3,
/// uniform angles for n=2). Used by multi-start drivers.
inline std::vector<Vec> spread_directions(int n, int count) {
    std::vector<Vec> out;
    out.reserve(count);
    if (n == 2) {
        for (int k = 0; k < count; ++k) {
            double th = 2.0 * M_PI * k / count + 0.37;
            out.push_back(Vec{std::cos(th), std::sin(th)});
        }
        return out;
    }
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < count; ++k) {
        double z = 1.0 - 2.0 * (k + 0.5) / count;
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        double th = ga * k;
        out.push_back(Vec{r * std::cos(th), r * std::sin(th), z});
    }
    return out;
}

}  // namespace barnorm
