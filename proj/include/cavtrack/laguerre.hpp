#pragma once

#include <cmath>

namespace cavtrack {

// Generalized Laguerre polynomial L_n^a(x) by the three-term recurrence
//   (k+1) L_{k+1} = (2k+1+a-x) L_k - (k+a) L_{k-1}.
inline double laguerre(int n, int a, double x) {
    if (n <= 0) return 1.0;
    double lkm1 = 1.0;
    double lk = 1.0 + a - x;
    for (int k = 1; k < n; ++k) {
        double lkp1 = ((2 * k + 1 + a - x) * lk - (k + a) * lkm1) / (k + 1);
        lkm1 = lk;
        lk = lkp1;
    }
    return lk;
}

// d/dx L_n^a(x) = -L_{n-1}^{a+1}(x)
inline double laguerre_deriv(int n, int a, double x) {
    if (n <= 0) return 0.0;
    return -laguerre(n - 1, a + 1, x);
}

}  // namespace cavtrack
