#pragma once

#include "bnbcp/defs.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace bnbcp {

/// Mixes a base seed with a stream id into an independent seed (splitmix64).
/// Used to derive per-worker and per-block generators.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seeded generator with the samplers the model needs. All transforms are
/// written out explicitly (not std::*_distribution) so that a seed pins the
/// stream independent of the standard library implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1].
    double uniform01_open_left() { return 1.0 - uniform01(); }

    /// Uniform integer in [0, n).
    std::int64_t uniform_int(std::int64_t n) {
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::int64_t>(x % un);
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no caching).
    double normal() {
        const double u1 = uniform01_open_left();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Gamma(shape, scale); Marsaglia-Tsang for shape >= 1, boosted by
    /// U^{1/shape} below 1. Mean is shape * scale.
    double gamma(double shape, double scale) {
        if (!(shape > 0.0) || !(scale > 0.0)) {
            throw NumericError("gamma: shape and scale must be > 0");
        }
        if (shape < 1.0) {
            const double u = uniform01_open_left();
            return gamma(shape + 1.0, scale) *
                   std::exp(std::log(u) / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01_open_left();
            if (u < 1.0 - 0.0331 * x * x * x * x) {
                return d * v * scale;
            }
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
                return d * v * scale;
            }
        }
    }

    /// Beta(a, b) via two gamma draws; result clamped to the open interval.
    double beta(double a, double b) {
        double x = gamma(a, 1.0);
        double y = gamma(b, 1.0);
        if (x < 1e-300) x = 1e-300;
        if (y < 1e-300) y = 1e-300;
        double p = x / (x + y);
        if (p < 1e-300) p = 1e-300;
        const double hi = 1.0 - std::numeric_limits<double>::epsilon();
        if (p > hi) p = hi;
        return p;
    }

    /// Poisson(mean) by multiplicative inversion; large means are split by
    /// Poisson additivity so the product of uniforms cannot underflow.
    count_t poisson(double mean) {
        if (!(mean >= 0.0)) {
            throw NumericError("poisson: mean must be >= 0");
        }
        if (mean == 0.0) {
            return 0;
        }
        if (mean > 500.0) {
            return poisson(mean / 2.0) + poisson(mean / 2.0);
        }
        return poisson_knuth(mean);
    }

    /// Binomial(n, p), exact. CDF inversion when the starting mass is
    /// representable; otherwise the trial count is split (a sum of
    /// independent binomials with equal p is binomial).
    count_t binomial(count_t n, double p) {
        if (n < 0) {
            throw NumericError("binomial: n must be >= 0");
        }
        if (n == 0 || p <= 0.0) {
            return 0;
        }
        if (p >= 1.0) {
            return n;
        }
        if (p > 0.5) {
            return n - binomial(n, 1.0 - p);
        }
        const double log_q_mass = static_cast<double>(n) * std::log1p(-p);
        if (log_q_mass < -640.0) {
            const count_t half = n / 2;
            return binomial(half, p) + binomial(n - half, p);
        }
        // Walk the CDF from k = 0 with the pmf recurrence.
        const double q = 1.0 - p;
        double f = std::exp(log_q_mass);
        double cdf = f;
        double u = uniform01();
        count_t k = 0;
        while (u > cdf && k < n) {
            f *= static_cast<double>(n - k) / static_cast<double>(k + 1) *
                 (p / q);
            cdf += f;
            ++k;
            // rounding guard: remaining mass exhausted
            if (f < 1e-320 && u > cdf) {
                break;
            }
        }
        return k;
    }

  private:
    count_t poisson_knuth(double mean) {
        const double limit = std::exp(-mean);
        count_t k = 0;
        double prod = uniform01_open_left();
        while (prod > limit) {
            ++k;
            prod *= uniform01_open_left();
        }
        return k;
    }

    std::mt19937_64 engine_;
};

/// In-place Fisher-Yates shuffle driven by this project's Rng.
template <typename T>
void shuffle(std::vector<T>& values, Rng& rng) {
    for (std::int64_t i = static_cast<std::int64_t>(values.size()) - 1; i > 0;
         --i) {
        const std::int64_t j = rng.uniform_int(i + 1);
        std::swap(values[static_cast<std::size_t>(i)],
                  values[static_cast<std::size_t>(j)]);
    }
}

/// Symmetric Dirichlet(alpha, ..., alpha) draw of dimension n via normalized
/// gammas. Zero draws (possible in floating point at tiny alpha) are clamped
/// to 1e-300 before normalization so columns stay on the open simplex.
template <typename Scalar>
void dirichlet_symmetric(Rng& rng, double alpha, Eigen::Index n,
                         Eigen::Ref<VectorX<Scalar>> out) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double g = rng.gamma(alpha, 1.0);
        if (g < 1e-300) g = 1e-300;
        out[i] = static_cast<Scalar>(g);
        sum += g;
    }
    out /= static_cast<Scalar>(sum);
}

} // namespace bnbcp
