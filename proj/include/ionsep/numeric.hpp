// Small shared numerics: deterministic RNG, compensated summation,
// bracketed root finding, simple statistics.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "ionsep/errors.hpp"

namespace ionsep {

/// Deterministic RNG wrapper. Gaussian draws use an explicit Box-Muller so
/// streams are reproducible across standard-library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {
        // 53-bit mantissa uniform in [0,1)
        return (gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(kTau * u2);
        have_spare_ = true;
        return r * std::cos(kTau * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Binomial draw as a sum of Bernoulli trials; n is small (~200) everywhere
    /// this is used.
    std::int64_t binomial(std::int64_t n, double p) {
        std::int64_t k = 0;
        for (std::int64_t i = 0; i < n; ++i)
            if (uniform() < p) ++k;
        return k;
    }

    std::uint64_t raw() { return gen_(); }

  private:
    static constexpr double kTau = 6.28318530717958647692;
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Kahan-compensated accumulator.
class KahanSum {
  public:
    void add(double x) {
        double y = x - comp_;
        double t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Root of f on [a, b] (f(a), f(b) of opposite sign) by Brent's method.
/// Tolerance is relative on the abscissa.
inline double find_root(const std::function<double(double)>& f, double a, double b,
                        double rel_tol = 1e-14, int max_iter = 200) {
    double fa = f(a);
    double fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0.0) == (fb > 0.0))
        throw ConvergenceError("find_root: endpoints do not bracket a sign change");
    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int it = 0; it < max_iter; ++it) {
        if (std::fabs(fc) < std::fabs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::fabs(b) +
                     0.5 * rel_tol * (std::fabs(b) + std::fabs(c));
        double m = 0.5 * (c - b);
        if (fb == 0.0 || std::fabs(m) <= tol) return b;
        if (std::fabs(e) < tol || std::fabs(fa) <= std::fabs(fb)) {
            d = e = m; // bisection
        } else {
            double s = fb / fa, p, q;
            if (a == c) { // secant
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else { // inverse quadratic
                double qq = fa / fc, r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q; else p = -p;
            if (2.0 * p < std::min(3.0 * m * q - std::fabs(tol * q), std::fabs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = e = m;
            }
        }
        a = b;
        fa = fb;
        b += (std::fabs(d) > tol) ? d : (m > 0.0 ? tol : -tol);
        fb = f(b);
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            e = d = b - a;
        }
    }
    throw ConvergenceError("find_root: no convergence within iteration budget");
}

inline double mean_of(const std::vector<double>& v) {
    KahanSum s;
    for (double x : v) s.add(x);
    return v.empty() ? 0.0 : s.value() / static_cast<double>(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    KahanSum s;
    for (double x : v) s.add((x - m) * (x - m));
    return std::sqrt(s.value() / static_cast<double>(v.size() - 1));
}

/// Linear trapezoid integral of y(t) over the sampled grid.
inline double trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
    if (t.size() != y.size() || t.size() < 2)
        throw std::invalid_argument("trapezoid: need matching grids with >= 2 points");
    KahanSum s;
    for (std::size_t i = 0; i + 1 < t.size(); ++i)
        s.add(0.5 * (y[i] + y[i + 1]) * (t[i + 1] - t[i]));
    return s.value();
}

} // namespace ionsep
