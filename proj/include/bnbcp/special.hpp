#pragma once

#include "bnbcp/defs.hpp"

#include <cmath>

namespace bnbcp {

/// Digamma Psi(x) for x > 0, via upward recurrence into the asymptotic
/// regime followed by the Stirling-type series. Absolute accuracy is better
/// than 1e-12 for x >= 1e-6; tiny arguments are handled by the recurrence
/// shifts alone.
inline double digamma(double x) {
    if (!(x > 0.0)) {
        throw NumericError("digamma: argument must be > 0, got " +
                           std::to_string(x));
    }
    double result = 0.0;
    // Psi(x) = Psi(x+1) - 1/x until the series is accurate.
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    // Psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n})
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv;
    result -= inv2 * (1.0 / 12.0 -
                      inv2 * (1.0 / 120.0 -
                              inv2 * (1.0 / 252.0 -
                                      inv2 * (1.0 / 240.0 -
                                              inv2 * (1.0 / 132.0)))));
    return result;
}

/// log(y!) = lgamma(y + 1); exact for y = 0 and y = 1.
inline double log_factorial(count_t y) {
    if (y <= 1) {
        return 0.0;
    }
    return std::lgamma(static_cast<double>(y) + 1.0);
}

} // namespace bnbcp
