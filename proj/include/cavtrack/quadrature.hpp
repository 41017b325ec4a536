#pragma once

#include <cmath>
#include <functional>

#include "cavtrack/errors.hpp"

namespace cavtrack {

namespace detail {

template <typename F>
double adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm, double fb,
                            double whole, double tol, int depth, int max_depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth >= max_depth)
        throw NumericalError("adaptive quadrature did not converge after max refinement");
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, max_depth) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, max_depth);
}

}  // namespace detail

// Adaptive Simpson on [a,b]. `tol` is an absolute tolerance; callers pass
// rel_tol * (scale of the integral). Throws NumericalError past max_depth.
template <typename F>
double integrate(const F& f, double a, double b, double tol, int max_depth = 48) {
    const double fa = f(a);
    const double fb = f(b);
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 0, max_depth);
}

// Convenience wrapper with a relative-tolerance retry: a first pass fixes the
// scale, the second integrates against it.
template <typename F>
double integrate_rel(const F& f, double a, double b, double rel_tol, int max_depth = 48) {
    const double coarse = integrate(f, a, b, 1e-8, max_depth);
    const double scale = std::max(std::abs(coarse), 1e-300);
    return integrate(f, a, b, rel_tol * scale, max_depth);
}

}  // namespace cavtrack
