#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "cavtrack/errors.hpp"

namespace cavtrack {

using Complex = std::complex<double>;
using CVector = std::vector<Complex>;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline Vec2 operator-(Vec2 v) { return {-v.x, -v.y}; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

// Dense square complex matrix, row-major.
class CMatrix {
public:
    CMatrix() = default;
    explicit CMatrix(std::size_t n) : n_(n), a_(n * n) {}

    static CMatrix identity(std::size_t n) {
        CMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t size() const { return n_; }
    Complex& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
    const Complex& operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

    CVector apply(const CVector& x) const {
        CVector y(n_, Complex(0.0));
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) y[i] += a_[i * n_ + j] * x[j];
        return y;
    }

    // conjugate transpose
    CMatrix adjoint() const {
        CMatrix m(n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) m(i, j) = std::conj((*this)(j, i));
        return m;
    }

private:
    std::size_t n_ = 0;
    CVector a_;
};

inline Complex dot_conj(const CVector& a, const CVector& b) {
    Complex s(0.0);
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

inline double norm2(const CVector& a) { return dot_conj(a, a).real(); }

// Gaussian elimination with partial pivoting. Throws NumericalError when the
// system is numerically singular.
inline CVector solve_dense(CMatrix a, CVector b) {
    const std::size_t n = a.size();
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
    if (scale == 0.0) throw NumericalError("singular linear system (zero matrix)");

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        double best = std::abs(a(perm[k], k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double v = std::abs(a(perm[i], k));
            if (v > best) {
                best = v;
                pivot = i;
            }
        }
        if (best < 1e-14 * scale)
            throw NumericalError("singular linear system in dense solve (pivot underflow)");
        std::swap(perm[k], perm[pivot]);
        const Complex akk = a(perm[k], k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const Complex f = a(perm[i], k) / akk;
            a(perm[i], k) = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) a(perm[i], j) -= f * a(perm[k], j);
            b[perm[i]] -= f * b[perm[k]];
        }
    }

    CVector x(n);
    for (std::size_t k = n; k-- > 0;) {
        Complex s = b[perm[k]];
        for (std::size_t j = k + 1; j < n; ++j) s -= a(perm[k], j) * x[j];
        x[k] = s / a(perm[k], k);
    }
    return x;
}

// Unitary whose first row is v^dagger / |v|; remaining rows complete the
// basis by modified Gram-Schmidt over the identity columns.
inline CMatrix unitary_from_first_row(const CVector& v) {
    const std::size_t n = v.size();
    const double len = std::sqrt(norm2(v));
    CMatrix u(n);
    if (len == 0.0) return CMatrix::identity(n);

    std::vector<CVector> rows;
    CVector first(n);
    for (std::size_t j = 0; j < n; ++j) first[j] = std::conj(v[j]) / len;
    rows.push_back(first);

    for (std::size_t c = 0; c < n && rows.size() < n; ++c) {
        CVector cand(n, Complex(0.0));
        cand[c] = 1.0;
        for (const auto& r : rows) {
            const Complex proj = dot_conj(r, cand);
            for (std::size_t j = 0; j < n; ++j) cand[j] -= proj * r[j];
        }
        const double l = std::sqrt(norm2(cand));
        if (l > 1e-8) {
            for (auto& cj : cand) cj /= l;
            rows.push_back(cand);
        }
    }
    if (rows.size() != n) throw NumericalError("failed to complete unitary basis");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) u(i, j) = rows[i][j];
    return u;
}

}  // namespace cavtrack
