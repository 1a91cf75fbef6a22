#pragma once

// Small dense real linear algebra for dimensions 2..4: exponentials, spectra,
// determinants, linear solves, column ranks. Everything is a value type.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace barnorm {

inline constexpr int kMaxDim = 4;

struct SingularMatrixError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Vec {
  public:
    Vec() : n_(0) { v_.fill(0.0); }
    explicit Vec(int n) : n_(n) {
        check_dim(n);
        v_.fill(0.0);
    }
    Vec(std::initializer_list<double> xs) : n_(static_cast<int>(xs.size())) {
        check_dim(n_);
        v_.fill(0.0);
        int i = 0;
        for (double x : xs) v_[i++] = x;
    }
    static Vec unit(int n, int k) {
        Vec e(n);
        e[k] = 1.0;
        return e;
    }

    int size() const { return n_; }
    double& operator[](int i) { return v_[i]; }
    double operator[](int i) const { return v_[i]; }

    Vec& operator+=(const Vec& o) {
        for (int i = 0; i < n_; ++i) v_[i] += o.v_[i];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        for (int i = 0; i < n_; ++i) v_[i] -= o.v_[i];
        return *this;
    }
    Vec& operator*=(double s) {
        for (int i = 0; i < n_; ++i) v_[i] *= s;
        return *this;
    }
    friend Vec operator+(Vec a, const Vec& b) { return a += b; }
    friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
    friend Vec operator*(double s, Vec a) { return a *= s; }
    friend Vec operator*(Vec a, double s) { return a *= s; }
    friend Vec operator-(Vec a) { return a *= -1.0; }

    bool finite() const {
        for (int i = 0; i < n_; ++i)
            if (!std::isfinite(v_[i])) return false;
        return true;
    }

  private:
    static void check_dim(int n) {
        if (n < 1 || n > kMaxDim) throw DimensionError("vector dimension must be in [1,4], got " + std::to_string(n));
    }
    int n_;
    std::array<double, kMaxDim> v_;
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}
inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }
inline Vec normalized(const Vec& a) {
    double n = norm2(a);
    if (n == 0.0) throw std::domain_error("cannot normalize the zero vector");
    return a * (1.0 / n);
}
inline Vec cross3(const Vec& a, const Vec& b) {
    Vec c(3);
    c[0] = a[1] * b[2] - a[2] * b[1];
    c[1] = a[2] * b[0] - a[0] * b[2];
    c[2] = a[0] * b[1] - a[1] * b[0];
    return c;
}

class Mat {
  public:
    Mat() : n_(0) { a_.fill(0.0); }
    explicit Mat(int n) : n_(n) {
        check_dim(n);
        a_.fill(0.0);
    }
    /// Row-major entries.
    Mat(int n, std::initializer_list<double> entries) : n_(n) {
        check_dim(n);
        if (static_cast<int>(entries.size()) != n * n)
            throw DimensionError("matrix entry count does not match declared dimension");
        a_.fill(0.0);
        int k = 0;
        for (double x : entries) {
            (*this)(k / n, k % n) = x;
            ++k;
        }
    }
    static Mat identity(int n) {
        Mat m(n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Mat diag(std::initializer_list<double> d) {
        Mat m(static_cast<int>(d.size()));
        int i = 0;
        for (double x : d) m(i, i) = x, ++i;
        return m;
    }
    /// Rank-one product b c^T.
    static Mat outer(const Vec& b, const Vec& c) {
        Mat m(b.size());
        for (int i = 0; i < b.size(); ++i)
            for (int j = 0; j < c.size(); ++j) m(i, j) = b[i] * c[j];
        return m;
    }

    int dim() const { return n_; }
    double& operator()(int i, int j) { return a_[i * kMaxDim + j]; }
    double operator()(int i, int j) const { return a_[i * kMaxDim + j]; }

    Mat transpose() const {
        Mat t(n_);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }
    double trace() const {
        double s = 0.0;
        for (int i = 0; i < n_; ++i) s += (*this)(i, i);
        return s;
    }

    Mat& operator+=(const Mat& o) {
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) (*this)(i, j) += o(i, j);
        return *this;
    }
    Mat& operator-=(const Mat& o) {
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) (*this)(i, j) -= o(i, j);
        return *this;
    }
    Mat& operator*=(double s) {
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) (*this)(i, j) *= s;
        return *this;
    }
    friend Mat operator+(Mat a, const Mat& b) { return a += b; }
    friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
    friend Mat operator*(double s, Mat a) { return a *= s; }
    friend Mat operator*(Mat a, double s) { return a *= s; }

    friend Mat operator*(const Mat& a, const Mat& b) {
        Mat c(a.n_);
        for (int i = 0; i < a.n_; ++i)
            for (int j = 0; j < a.n_; ++j) {
                double s = 0.0;
                for (int k = 0; k < a.n_; ++k) s += a(i, k) * b(k, j);
                c(i, j) = s;
            }
        return c;
    }
    friend Vec operator*(const Mat& a, const Vec& x) {
        Vec y(a.n_);
        for (int i = 0; i < a.n_; ++i) {
            double s = 0.0;
            for (int k = 0; k < a.n_; ++k) s += a(i, k) * x[k];
            y[i] = s;
        }
        return y;
    }

    /// Max absolute column sum.
    double norm1() const {
        double best = 0.0;
        for (int j = 0; j < n_; ++j) {
            double s = 0.0;
            for (int i = 0; i < n_; ++i) s += std::abs((*this)(i, j));
            best = std::max(best, s);
        }
        return best;
    }
    double max_abs() const {
        double m = 0.0;
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) m = std::max(m, std::abs((*this)(i, j)));
        return m;
    }
    bool finite() const {
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                if (!std::isfinite((*this)(i, j))) return false;
        return true;
    }

  private:
    static void check_dim(int n) {
        if (n < 1 || n > kMaxDim) throw DimensionError("matrix dimension must be in [1,4], got " + std::to_string(n));
    }
    int n_;
    std::array<double, kMaxDim * kMaxDim> a_;
};

inline double frobenius(const Mat& a) {
    double s = 0.0;
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// determinant / solve / rank

inline double determinant(const Mat& a) {
    switch (a.dim()) {
        case 1:
            return a(0, 0);
        case 2:
            return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        case 3:
            return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                   a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                   a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
        default: {
            // cofactor expansion along the first row
            double det = 0.0;
            for (int j = 0; j < 4; ++j) {
                Mat m(3);
                for (int r = 1; r < 4; ++r) {
                    int cc = 0;
                    for (int c = 0; c < 4; ++c) {
                        if (c == j) continue;
                        m(r - 1, cc++) = a(r, c);
                    }
                }
                det += ((j % 2 == 0) ? 1.0 : -1.0) * a(0, j) * determinant(m);
            }
            return det;
        }
    }
}

inline constexpr double kSingularDetTol = 1e-13;

/// Solves A x = y by Gaussian elimination with partial pivoting.
/// Requires |det A| > 1e-13.
inline Vec solve_linear(const Mat& a, const Vec& y) {
    if (a.dim() != y.size()) throw DimensionError("solve_linear: dimension mismatch");
    if (std::abs(determinant(a)) <= kSingularDetTol)
        throw SingularMatrixError("solve_linear: matrix is singular (|det| <= 1e-13)");
    const int n = a.dim();
    double m[kMaxDim][kMaxDim + 1];
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) m[i][j] = a(i, j);
        m[i][n] = y[i];
    }
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        if (piv != col)
            for (int j = col; j <= n; ++j) std::swap(m[col][j], m[piv][j]);
        for (int r = col + 1; r < n; ++r) {
            double f = m[r][col] / m[col][col];
            for (int j = col; j <= n; ++j) m[r][j] -= f * m[col][j];
        }
    }
    Vec x(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = m[i][n];
        for (int j = i + 1; j < n; ++j) s -= m[i][j] * x[j];
        x[i] = s / m[i][i];
    }
    return x;
}

/// Numerical rank of a list of column vectors via pivoted Gram-Schmidt.
/// tol <= 0 selects the default 1e-10 x (largest column norm).
inline int rank_of_columns(std::vector<Vec> cols, double tol = 0.0) {
    if (cols.empty()) throw DimensionError("rank_of_columns: empty list");
    const int n = cols[0].size();
    for (const Vec& v : cols)
        if (v.size() != n) throw DimensionError("rank_of_columns: mixed dimensions");
    double maxnorm = 0.0;
    for (const Vec& v : cols) maxnorm = std::max(maxnorm, norm2(v));
    if (tol <= 0.0) tol = 1e-10 * maxnorm;
    if (maxnorm == 0.0) return 0;

    int rank = 0;
    std::vector<Vec> basis;
    while (rank < n) {
        int best = -1;
        double bestn = tol;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            double nk = norm2(cols[k]);
            if (nk > bestn) {
                bestn = nk;
                best = static_cast<int>(k);
            }
        }
        if (best < 0) break;
        Vec q = normalized(cols[best]);
        basis.push_back(q);
        ++rank;
        for (Vec& v : cols) {
            v -= dot(q, v) * q;
            v -= dot(q, v) * q;  // second pass for orthogonality
        }
    }
    return rank;
}

// ---------------------------------------------------------------------------
// eigenvalues

struct Spectrum {
    std::vector<std::complex<double>> eigenvalues;
    double abscissa = 0.0;  // max real part
    double radius = 0.0;    // max modulus
};

namespace detail {

using cplx = std::complex<double>;

// roots of x^2 + b x + c
inline void quadratic_roots(double b, double c, cplx& r1, cplx& r2) {
    double disc = b * b - 4.0 * c;
    if (disc >= 0.0) {
        double sd = std::sqrt(disc);
        double q = -0.5 * (b + (b >= 0.0 ? sd : -sd));
        r1 = q;
        r2 = (q != 0.0) ? c / q : -b - q;
    } else {
        double sd = std::sqrt(-disc);
        r1 = cplx(-b / 2.0, sd / 2.0);
        r2 = std::conj(r1);
    }
}

// roots of x^3 + a x^2 + b x + c, Cardano/trigonometric form
inline void cubic_roots(double a, double b, double c, cplx out[3]) {
    double p = b - a * a / 3.0;
    double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    double shift = -a / 3.0;
    double disc = q * q / 4.0 + p * p * p / 27.0;
    if (disc > 0.0) {
        double sd = std::sqrt(disc);
        double u = std::cbrt(-q / 2.0 + sd);
        double v = std::cbrt(-q / 2.0 - sd);
        double y1 = u + v;
        out[0] = shift + y1;
        // remaining quadratic y^2 + y1 y + (y1^2 + p)
        cplx r1, r2;
        quadratic_roots(y1, y1 * y1 + p, r1, r2);
        out[1] = shift + r1;
        out[2] = shift + r2;
    } else {
        // three real roots
        double rho = std::sqrt(std::max(0.0, -p * p * p / 27.0));
        double theta = (rho > 0.0) ? std::acos(std::clamp(-q / (2.0 * rho), -1.0, 1.0)) : 0.0;
        double m = 2.0 * std::sqrt(std::max(0.0, -p / 3.0));
        for (int k = 0; k < 3; ++k) out[k] = shift + m * std::cos((theta + 2.0 * M_PI * k) / 3.0);
    }
}

// characteristic polynomial coefficients via Faddeev-LeVerrier:
// lambda^n + c[n-1] lambda^(n-1) + ... + c[0]
inline std::vector<double> char_poly(const Mat& a) {
    const int n = a.dim();
    std::vector<double> c(n);
    Mat m = Mat::identity(n);
    double cl = 1.0;
    for (int k = 1; k <= n; ++k) {
        m = a * m;
        cl = -m.trace() / k;
        for (int i = 0; i < n; ++i) m(i, i) += cl;
        c[n - k] = cl;
    }
    return c;
}

inline cplx poly_eval(const std::vector<double>& c, cplx x) {
    cplx p = 1.0;
    for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k) p = p * x + c[k];
    return p;
}
inline cplx poly_deriv_eval(const std::vector<double>& c, cplx x) {
    const int n = static_cast<int>(c.size());
    cplx p = static_cast<double>(n);
    for (int k = n - 1; k >= 1; --k) p = p * x + static_cast<double>(k) * c[k];
    return p;
}

// Durand-Kerner on a monic polynomial with real coefficients.
inline std::vector<cplx> durand_kerner(const std::vector<double>& c) {
    const int n = static_cast<int>(c.size());
    double r = 1.0;
    for (int k = 0; k < n; ++k) r = std::max(r, 2.0 * std::pow(std::abs(c[k]), 1.0 / (n - k)));
    std::vector<cplx> z(n);
    for (int k = 0; k < n; ++k) z[k] = std::polar(r * (0.3 + 0.7 * (k + 1.0) / n), 0.9 + 2.0 * M_PI * k / n);
    for (int it = 0; it < 400; ++it) {
        double delta = 0.0;
        for (int k = 0; k < n; ++k) {
            cplx num = poly_eval(c, z[k]);
            cplx den = 1.0;
            for (int j = 0; j < n; ++j)
                if (j != k) den *= (z[k] - z[j]);
            cplx step = num / den;
            z[k] -= step;
            delta = std::max(delta, std::abs(step));
        }
        if (delta < 1e-15 * (1.0 + r)) break;
    }
    // Newton polish
    for (int k = 0; k < n; ++k)
        for (int it = 0; it < 4; ++it) {
            cplx d = poly_deriv_eval(c, z[k]);
            if (std::abs(d) < 1e-300) break;
            z[k] -= poly_eval(c, z[k]) / d;
        }
    return z;
}

// Force complex eigenvalues into exact conjugate pairs; snap tiny imaginary
// parts of essentially-real roots to zero.
inline void symmetrize_conjugates(std::vector<cplx>& z, double scale) {
    const double tol = 1e-9 * std::max(1.0, scale);
    std::vector<bool> used(z.size(), false);
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (used[i]) continue;
        if (std::abs(z[i].imag()) <= tol) {
            z[i] = cplx(z[i].real(), 0.0);
            used[i] = true;
            continue;
        }
        std::size_t best = i;
        double bestd = 1e300;
        for (std::size_t j = i + 1; j < z.size(); ++j) {
            if (used[j]) continue;
            double d = std::abs(z[j] - std::conj(z[i]));
            if (d < bestd) {
                bestd = d;
                best = j;
            }
        }
        if (best != i && bestd <= 1e-6 * std::max(1.0, scale)) {
            cplx m = 0.5 * (z[i] + std::conj(z[best]));
            z[i] = m;
            z[best] = std::conj(m);
            used[i] = used[best] = true;
        } else {
            used[i] = true;
        }
    }
}

}  // namespace detail

/// Eigenvalues of A. Closed-form quadratic/cubic for n <= 3, iterative for n = 4.
inline Spectrum spectrum(const Mat& a) {
    using detail::cplx;
    const int n = a.dim();
    std::vector<cplx> z;
    if (n == 1) {
        z = {cplx(a(0, 0), 0.0)};
    } else if (n == 2) {
        cplx r1, r2;
        detail::quadratic_roots(-a.trace(), determinant(a), r1, r2);
        z = {r1, r2};
    } else if (n == 3) {
        auto c = detail::char_poly(a);
        cplx out[3];
        detail::cubic_roots(c[2], c[1], c[0], out);
        z = {out[0], out[1], out[2]};
        // Newton polish against the characteristic polynomial
        for (auto& root : z)
            for (int it = 0; it < 3; ++it) {
                cplx d = detail::poly_deriv_eval(c, root);
                if (std::abs(d) < 1e-300) break;
                root -= detail::poly_eval(c, root) / d;
            }
    } else {
        z = detail::durand_kerner(detail::char_poly(a));
    }
    detail::symmetrize_conjugates(z, a.max_abs());

    Spectrum s;
    s.eigenvalues = std::move(z);
    s.abscissa = -1e300;
    for (const auto& e : s.eigenvalues) {
        s.abscissa = std::max(s.abscissa, e.real());
        s.radius = std::max(s.radius, std::abs(e));
    }
    return s;
}

inline double spectral_abscissa(const Mat& a) { return spectrum(a).abscissa; }

// ---------------------------------------------------------------------------
// matrix exponential

/// e^{tA} by scaling-and-squaring with a [6/6] Pade approximant.
/// Relative accuracy ~1e-13 for ||tA|| <= 50; throws std::range_error on
/// floating overflow.
inline Mat expm(const Mat& a, double t = 1.0) {
    if (!std::isfinite(t)) throw std::range_error("expm: non-finite time");
    const int n = a.dim();
    Mat x = a * t;
    double nx = x.norm1();
    if (!std::isfinite(nx)) throw std::range_error("expm: non-finite input");

    int squarings = 0;
    const double theta = 0.25;
    if (nx > theta) {
        squarings = static_cast<int>(std::ceil(std::log2(nx / theta)));
        x *= std::pow(2.0, -squarings);
    }

    // [6/6] Pade: N = sum c_k X^k, D = sum (-1)^k c_k X^k
    double c[7];
    c[0] = 1.0;
    for (int k = 1; k <= 6; ++k) c[k] = c[k - 1] * (7.0 - k) / (k * (13.0 - k));
    Mat xk = Mat::identity(n);
    Mat num(n), den(n);
    for (int k = 0; k <= 6; ++k) {
        num += c[k] * xk;
        den += ((k % 2 == 0) ? c[k] : -c[k]) * xk;
        if (k < 6) xk = xk * x;
    }
    // solve den * R = num column by column
    Mat r(n);
    for (int j = 0; j < n; ++j) {
        Vec col(n);
        for (int i = 0; i < n; ++i) col[i] = num(i, j);
        Vec sol = solve_linear(den, col);
        for (int i = 0; i < n; ++i) r(i, j) = sol[i];
    }
    for (int k = 0; k < squarings; ++k) {
        r = r * r;
        if (!r.finite()) throw std::range_error("expm: overflow while squaring");
    }
    if (!r.finite()) throw std::range_error("expm: overflow");
    return r;
}

}  // namespace barnorm
