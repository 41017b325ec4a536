#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cavtrack/errors.hpp"

namespace cavtrack {

// Natural cubic spline given knot values and interior second derivatives.
class CubicSpline {
public:
    CubicSpline() = default;
    CubicSpline(std::vector<double> t, std::vector<double> f, std::vector<double> m2)
        : t_(std::move(t)), f_(std::move(f)), m2_(std::move(m2)) {}

    double operator()(double x) const {
        const std::size_t n = t_.size();
        if (n == 0) return 0.0;
        if (n == 1) return f_[0];
        if (x <= t_.front()) return f_[0] + slope_at(0) * (x - t_.front());
        if (x >= t_.back()) return f_[n - 1] + slope_at(n - 2, true) * (x - t_.back());
        std::size_t lo = 0, hi = n - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (t_[mid] <= x ? lo : hi) = mid;
        }
        const double h = t_[lo + 1] - t_[lo];
        const double a = (t_[lo + 1] - x) / h;
        const double b = (x - t_[lo]) / h;
        return a * f_[lo] + b * f_[lo + 1] +
               ((a * a * a - a) * m2_[lo] + (b * b * b - b) * m2_[lo + 1]) * h * h / 6.0;
    }

    const std::vector<double>& knots() const { return t_; }
    const std::vector<double>& values() const { return f_; }

private:
    double slope_at(std::size_t seg, bool right_end = false) const {
        const double h = t_[seg + 1] - t_[seg];
        const double base = (f_[seg + 1] - f_[seg]) / h;
        // natural ends have zero curvature; end slope from the cubic segment
        if (!right_end) return base - h / 6.0 * (2.0 * m2_[seg] + m2_[seg + 1]);
        return base + h / 6.0 * (m2_[seg] + 2.0 * m2_[seg + 1]);
    }

    std::vector<double> t_, f_, m2_;
};

struct SmoothingFit {
    CubicSpline spline;
    double lambda = 0.0;        // resolved curvature penalty
    double weighted_rss = 0.0;  // sum ((f_i - y_i)/sigma_i)^2 at the solution
};

namespace detail {

// Symmetric positive-definite banded solve (bandwidth 2), in-place Cholesky.
// `band[d]` holds diagonal d (0 = main, entries band[d][i] = A[i][i+d]).
inline std::vector<double> solve_banded_spd(std::vector<std::vector<double>> band,
                                            std::vector<double> rhs) {
    const std::size_t n = rhs.size();
    const std::size_t bw = band.size() - 1;
    for (std::size_t j = 0; j < n; ++j) {
        double d = band[0][j];
        for (std::size_t k = (j > bw ? j - bw : 0); k < j; ++k) {
            const double ljk = band[j - k][k];
            d -= ljk * ljk;
        }
        if (!(d > 0.0)) throw NumericalError("smoothing system lost positive definiteness");
        const double l = std::sqrt(d);
        band[0][j] = l;
        for (std::size_t i = j + 1; i < std::min(n, j + bw + 1); ++i) {
            double v = band[i - j][j];
            for (std::size_t k = (i > bw ? i - bw : 0); k < j; ++k) {
                if (j - k <= bw && i - k <= bw) v -= band[i - k][k] * band[j - k][k];
            }
            band[i - j][j] = v / l;
        }
    }
    // forward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double s = rhs[i];
        for (std::size_t k = (i > bw ? i - bw : 0); k < i; ++k) s -= band[i - k][k] * rhs[k];
        rhs[i] = s / band[0][i];
    }
    // back substitution
    for (std::size_t i = n; i-- > 0;) {
        double s = rhs[i];
        for (std::size_t k = i + 1; k < std::min(n, i + bw + 1); ++k)
            s -= band[k - i][i] * rhs[k];
        rhs[i] = s / band[0][i];
    }
    return rhs;
}

struct SplineSystem {
    std::vector<double> h;                  // knot gaps
    std::vector<std::vector<double>> tmat;  // T bands (3 diagonals as [0],[1])
    std::vector<std::vector<double>> qwq;   // Q^T W^-1 Q bands (5 diagonals)
    std::vector<double> qty;                // Q^T y
};

inline SplineSystem build_spline_system(const std::vector<double>& t,
                                        const std::vector<double>& y,
                                        const std::vector<double>& var) {
    const std::size_t n = t.size();
    const std::size_t m = n - 2;
    SplineSystem sys;
    sys.h.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        sys.h[i] = t[i + 1] - t[i];
        if (!(sys.h[i] > 0.0)) throw UsageError("spline knots must be strictly increasing");
    }
    sys.tmat.assign(3, std::vector<double>(m, 0.0));
    sys.qwq.assign(3, std::vector<double>(m, 0.0));
    sys.qty.assign(m, 0.0);

    // column c of Q touches rows c, c+1, c+2
    auto qcol = [&](std::size_t c, std::size_t row) -> double {
        if (row == c) return 1.0 / sys.h[c];
        if (row == c + 1) return -1.0 / sys.h[c] - 1.0 / sys.h[c + 1];
        if (row == c + 2) return 1.0 / sys.h[c + 1];
        return 0.0;
    };
    for (std::size_t c = 0; c < m; ++c) {
        sys.tmat[0][c] = (sys.h[c] + sys.h[c + 1]) / 3.0;
        if (c + 1 < m) sys.tmat[1][c] = sys.h[c + 1] / 6.0;
        for (std::size_t row = c; row <= c + 2; ++row) sys.qty[c] += qcol(c, row) * y[row];
        for (std::size_t d = 0; d < 3 && c + d < m; ++d) {
            double s = 0.0;
            for (std::size_t row = c + d; row <= c + 2; ++row)
                s += var[row] * qcol(c, row) * qcol(c + d, row);
            sys.qwq[d][c] = s;
        }
    }
    return sys;
}

}  // namespace detail

// Weighted natural cubic smoothing spline: minimises
//   sum_i ((f_i - y_i)/sigma_i)^2 + lambda * integral f''^2
// for fixed lambda via the banded interior-moment system
//   (T + lambda Q^T W^-1 Q) g = Q^T y,  f = y - lambda W^-1 Q g.
inline SmoothingFit fit_spline_fixed_lambda(const std::vector<double>& t,
                                            const std::vector<double>& y,
                                            const std::vector<double>& sigma, double lambda) {
    const std::size_t n = t.size();
    if (n < 4 || y.size() != n || sigma.size() != n)
        throw UsageError("smoothing spline needs at least 4 consistently sized points");
    std::vector<double> var(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(sigma[i] > 0.0)) throw UsageError("spline weights require positive sigma");
        var[i] = sigma[i] * sigma[i];
    }
    auto sys = detail::build_spline_system(t, y, var);
    const std::size_t m = n - 2;

    std::vector<std::vector<double>> band(3, std::vector<double>(m, 0.0));
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t c = 0; c < m; ++c)
            band[d][c] = (d < 2 ? sys.tmat[d][c] : 0.0) + lambda * sys.qwq[d][c];
    const std::vector<double> g = detail::solve_banded_spd(band, sys.qty);

    // f = y - lambda W^-1 Q g and the weighted residual in one pass
    std::vector<double> f = y;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double qg = 0.0;
        for (std::size_t c = (i >= 2 ? i - 2 : 0); c < std::min(m, i + 1); ++c) {
            if (i == c)
                qg += g[c] / sys.h[c];
            else if (i == c + 1)
                qg += g[c] * (-1.0 / sys.h[c] - 1.0 / sys.h[c + 1]);
            else
                qg += g[c] / sys.h[c + 1];
        }
        const double shift = lambda * var[i] * qg;
        f[i] -= shift;
        rss += (shift / sigma[i]) * (shift / sigma[i]);
    }

    std::vector<double> m2(n, 0.0);
    for (std::size_t c = 0; c < m; ++c) m2[c + 1] = g[c];

    SmoothingFit fit;
    fit.spline = CubicSpline(t, std::move(f), std::move(m2));
    fit.lambda = lambda;
    fit.weighted_rss = rss;
    return fit;
}

// Resolve lambda so the weighted residual hits `target` (classically the
// point count): bisection on log lambda, residual monotone in lambda. When
// even the stiffest spline stays under target the data are smoother than the
// noise model and the stiff fit is returned.
inline SmoothingFit fit_smoothing_spline(const std::vector<double>& t,
                                         const std::vector<double>& y,
                                         const std::vector<double>& sigma, double target) {
    double trace_t = 0.0, trace_q = 0.0;
    {
        std::vector<double> var(sigma.size());
        for (std::size_t i = 0; i < sigma.size(); ++i) var[i] = sigma[i] * sigma[i];
        auto sys = detail::build_spline_system(t, y, var);
        for (double v : sys.tmat[0]) trace_t += v;
        for (double v : sys.qwq[0]) trace_q += v;
    }
    const double pivot = trace_q > 0.0 ? trace_t / trace_q : 1.0;
    double lo = pivot * 1e-14, hi = pivot * 1e14;

    SmoothingFit at_hi = fit_spline_fixed_lambda(t, y, sigma, hi);
    if (at_hi.weighted_rss <= target) return at_hi;
    SmoothingFit at_lo = fit_spline_fixed_lambda(t, y, sigma, lo);
    if (at_lo.weighted_rss >= target) return at_lo;

    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        SmoothingFit fit = fit_spline_fixed_lambda(t, y, sigma, mid);
        if (std::abs(fit.weighted_rss - target) <= 1e-6 * target) return fit;
        (fit.weighted_rss < target ? lo : hi) = mid;
    }
    return fit_spline_fixed_lambda(t, y, sigma, std::sqrt(lo * hi));
}

}  // namespace cavtrack
