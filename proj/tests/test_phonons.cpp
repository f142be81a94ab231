#include <catch2/catch_amalgamated.hpp>

#include "ionsep/phonons.hpp"

#include <cmath>
#include <vector>

using namespace ionsep;
using Catch::Approx;

namespace {

/// Literal signed log-space summation of the displaced-number-state overlap.
/// Catastrophic cancellation limits it to small quantum numbers; inside that
/// domain it is an independent oracle for the recurrence evaluation.
double displaced_fock_prob_signed_sum(int k, int n, double zeta_mag) {
    double z = zeta_mag * zeta_mag;
    if (z == 0.0) return k == n ? 1.0 : 0.0;
    int lmax = std::min(n, k);
    double lz = std::log(z);
    std::vector<double> logs(static_cast<std::size_t>(lmax) + 1);
    double maxlog = -1e300;
    for (int l = 0; l <= lmax; ++l) {
        logs[static_cast<std::size_t>(l)] = -l * lz - std::lgamma(l + 1.0) -
                                            std::lgamma(n - l + 1.0) - std::lgamma(k - l + 1.0);
        maxlog = std::max(maxlog, logs[static_cast<std::size_t>(l)]);
    }
    KahanSum s;
    for (int l = 0; l <= lmax; ++l) {
        double term = std::exp(logs[static_cast<std::size_t>(l)] - maxlog);
        s.add(l % 2 ? -term : term);
    }
    if (s.value() == 0.0) return 0.0;
    double logp = -z + (k + n) * lz + std::lgamma(n + 1.0) + std::lgamma(k + 1.0) +
                  2.0 * (maxlog + std::log(std::fabs(s.value())));
    return std::exp(logp);
}

/// Brute-force integration of the thermalization rate equations
/// p_n' = n p_{n-1} + (n+1) p_{n+1} - (2n+1) p_n (top state reflecting),
/// classic RK4 with steps inside the stability limit.
std::vector<double> rate_equation_rk4(std::vector<double> p, double nbar_added, double h) {
    auto deriv = [](const std::vector<double>& q) {
        std::size_t n = q.size();
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) {
            double v = -(2.0 * static_cast<double>(i) + 1.0) * q[i];
            if (i + 1 == n) v = -static_cast<double>(i) * q[i];
            if (i > 0) v += static_cast<double>(i) * q[i - 1];
            if (i + 1 < n) v += static_cast<double>(i + 1) * q[i + 1];
            d[i] = v;
        }
        return d;
    };
    auto steps = static_cast<long>(std::ceil(nbar_added / h));
    h = nbar_added / static_cast<double>(steps);
    std::size_t n = p.size();
    for (long s = 0; s < steps; ++s) {
        auto k1 = deriv(p);
        std::vector<double> tmp(n);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = p[i] + 0.5 * h * k1[i];
        auto k2 = deriv(tmp);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = p[i] + 0.5 * h * k2[i];
        auto k3 = deriv(tmp);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = p[i] + h * k3[i];
        auto k4 = deriv(tmp);
        for (std::size_t i = 0; i < n; ++i)
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return p;
}

} // namespace

TEST_CASE("displaced_fock_prob") {
    SECTION("displaced vacuum is Poisson") {
        double z = 3.7;
        for (int k = 0; k < 20; ++k) {
            double expect = std::exp(-z + k * std::log(z) - std::lgamma(k + 1.0));
            REQUIRE(displaced_fock_prob(k, 0, std::sqrt(z)) == Approx(expect).epsilon(1e-12));
        }
    }
    SECTION("single-phonon state projected to vacuum") {
        double z = 0.83;
        REQUIRE(displaced_fock_prob(0, 1, std::sqrt(z)) == Approx(std::exp(-z) * z).epsilon(1e-12));
    }
    SECTION("zero displacement is the identity") {
        REQUIRE(displaced_fock_prob(7, 7, 0.0) == 1.0);
        REQUIRE(displaced_fock_prob(6, 7, 0.0) == 0.0);
    }
    SECTION("agrees with the signed summation inside its stable domain") {
        for (double z : {0.25, 1.0, 4.0}) {
            for (int n : {0, 1, 3, 8}) {
                for (int k : {0, 2, 5, 12}) {
                    double a = displaced_fock_prob(k, n, std::sqrt(z));
                    double b = displaced_fock_prob_signed_sum(k, n, std::sqrt(z));
                    REQUIRE(a == Approx(b).margin(1e-13).epsilon(1e-10));
                }
            }
        }
    }
    SECTION("unitarity over the full supported range") {
        for (double z : {1.0, 25.0, 100.0}) {
            for (int n : {0, 10, 40, 100}) {
                double zeta = std::sqrt(z);
                KahanSum sum;
                int kmax = static_cast<int>(n + z + 14.0 * std::sqrt(z * (2.0 * n + 1) + n + 1)) + 60;
                for (int k = 0; k <= kmax; ++k) sum.add(displaced_fock_prob(k, n, zeta));
                REQUIRE(sum.value() == Approx(1.0).margin(1e-8));
            }
        }
    }
    SECTION("quantum numbers beyond the limit direct to the thermalization route") {
        REQUIRE_THROWS_AS(displaced_fock_prob(200, 180, 1.0), RangeError);
        REQUIRE_NOTHROW(displaced_fock_prob(2000, 100, 1.0)); // long ladder, short sum
    }
}

TEST_CASE("thermalization kernel") {
    SECTION("column sums vanish exactly") {
        ThermalizationKernel kern(64);
        for (std::size_t j = 0; j < 64; ++j) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(64);
            e[static_cast<Eigen::Index>(j)] = 1.0;
            REQUIRE(kern.apply_generator(e).sum() == 0.0);
        }
    }
    SECTION("eigendecomposition reconstructs the generator") {
        ThermalizationKernel kern(256);
        REQUIRE(kern.residual() < 1e-8);
        REQUIRE(kern.eigen_route());
    }
    SECTION("thermalize with zero added quanta is the identity") {
        ThermalizationKernel kern(64);
        PhononDistribution p = coherent_distribution(4.0, 64);
        PhononDistribution q = thermalize(p, 0.0, kern);
        for (std::size_t i = 0; i < p.p.size(); ++i)
            REQUIRE(q.p[i] == Approx(p.p[i]).margin(1e-10));
    }
    SECTION("vacuum thermalizes to the closed-form thermal distribution") {
        double nbar = 12.0;
        std::size_t n = choose_truncation({nbar, 0.0});
        ThermalizationKernel kern(n);
        PhononDistribution vac;
        vac.p.assign(n, 0.0);
        vac.p[0] = 1.0;
        PhononDistribution q = thermalize(vac, nbar, kern);
        PhononDistribution ref = thermal_distribution(nbar, n);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(q.p[i] == Approx(ref.p[i]).margin(1e-8));
    }
    SECTION("normalization is conserved and the mean grows by the added quanta") {
        Rng rng(99);
        std::size_t n = 600;
        ThermalizationKernel kern(n);
        for (int trial = 0; trial < 50; ++trial) {
            // random normalized input with mass in the lower quarter of the ladder
            PhononDistribution p;
            p.p.assign(n, 0.0);
            double sum = 0.0;
            for (std::size_t i = 0; i < n / 4; ++i) {
                p.p[i] = rng.uniform();
                sum += p.p[i];
            }
            for (auto& v : p.p) v /= sum;
            double added = rng.uniform(0.0, 20.0);
            PhononDistribution q = thermalize(p, added, kern);
            REQUIRE(q.sum() == Approx(p.sum()).margin(1e-10));
            REQUIRE(q.mean() - p.mean() == Approx(added).epsilon(1e-6));
        }
    }
    SECTION("kernel propagation matches brute-force rate-equation integration") {
        MotionalState state{5.0, 82.0};
        std::size_t n = choose_truncation(state);
        ThermalizationKernel kern(n);
        PhononDistribution coh = coherent_distribution(82.0, n);
        PhononDistribution fast = thermalize(coh, 5.0, kern);
        auto slow = rate_equation_rk4(coh.p, 5.0, 2e-4);
        REQUIRE(fast.mean() == Approx(87.0).margin(1e-6));
        for (std::size_t i = 0; i < n; ++i) REQUIRE(fast.p[i] == Approx(slow[i]).margin(1e-8));
    }
    SECTION("tail overflow raises a truncation error") {
        ThermalizationKernel kern(16);
        PhononDistribution vac;
        vac.p.assign(16, 0.0);
        vac.p[0] = 1.0;
        REQUIRE_THROWS_AS(thermalize(vac, 30.0, kern), TruncationError);
    }
}

TEST_CASE("displaced_thermal distribution") {
    SECTION("no thermal part gives the coherent Poisson distribution") {
        MotionalState s{0.0, 9.0};
        auto p = displaced_thermal(s, choose_truncation(s));
        auto ref = coherent_distribution(9.0, p.truncation());
        for (std::size_t i = 0; i < p.p.size(); ++i) REQUIRE(p.p[i] == Approx(ref.p[i]));
    }
    SECTION("no coherent part gives the thermal distribution") {
        MotionalState s{7.0, 0.0};
        auto p = displaced_thermal(s, choose_truncation(s));
        auto ref = thermal_distribution(7.0, p.truncation());
        for (std::size_t i = 0; i < p.p.size(); ++i) REQUIRE(p.p[i] == Approx(ref.p[i]));
    }
    SECTION("direct thermal average and kernel route agree pointwise") {
        MotionalState s{5.0, 10.0};
        std::size_t n = choose_truncation(s);
        auto direct = displaced_thermal(s, n); // mean 15 -> direct route
        auto kern = shared_kernel(n);
        auto via_kernel = thermalize(coherent_distribution(s.n_coh, n), s.n_th, *kern);
        for (std::size_t i = 0; i < n; ++i)
            REQUIRE(direct.p[i] == Approx(via_kernel.p[i]).margin(1e-6));
        REQUIRE(direct.mean() == Approx(15.0).epsilon(1e-6));
        direct.validate();
    }
}

TEST_CASE("choose_truncation") {
    REQUIRE(choose_truncation({0.0, 0.0}) <= 8);
    REQUIRE(choose_truncation({0.0, 400.0}) >= 600);
    REQUIRE(choose_truncation({0.0, 400.0}) <= 640);
    REQUIRE(choose_truncation({400.0, 0.0}) >= 4300);
    REQUIRE(choose_truncation({400.0, 0.0}) <= 4500);
}

TEST_CASE("rabi matrix elements") {
    double eta = 0.23;
    SECTION("no phonon to remove from the ground state") {
        REQUIRE(rabi_matrix_element(0, -1, eta) == 0.0);
        REQUIRE(rabi_matrix_element(1, -2, eta) == 0.0);
    }
    SECTION("carrier and blue sideband from the ground state") {
        REQUIRE(rabi_matrix_element(0, 0, eta) == Approx(0.9739).epsilon(1e-4));
        REQUIRE(rabi_matrix_element(0, +1, eta) == Approx(0.2240).epsilon(1e-4));
    }
    SECTION("vanishing Lamb-Dicke factor decouples the sidebands") {
        double tiny = 1e-8;
        REQUIRE(rabi_matrix_element(3, 0, tiny) == Approx(1.0).epsilon(1e-9));
        REQUIRE(rabi_matrix_element(3, +1, tiny) < 1e-7);
        REQUIRE(rabi_matrix_element(3, -1, tiny) < 1e-7);
    }
}

TEST_CASE("rabi_signal") {
    RabiModel model;
    SECTION("vacuum pi pulse on the carrier") {
        PhononDistribution vac;
        vac.p = {1.0};
        double tpi = kPi / (model.omega * rabi_matrix_element(0, 0, model.lamb_dicke));
        REQUIRE(rabi_signal(vac, model, 0, tpi) == Approx(1.0).epsilon(1e-12));
    }
    SECTION("vacuum red sideband stays dark") {
        PhononDistribution vac;
        vac.p = {1.0};
        for (double t : {0.0, 1e-6, 5e-6, 42e-6})
            REQUIRE(rabi_signal(vac, model, -1, t) == 0.0);
    }
    SECTION("bounded in [0, 1] for arbitrary states") {
        MotionalState s{3.0, 14.0};
        auto p = displaced_thermal(s, choose_truncation(s));
        for (double t = 0.0; t < 100e-6; t += 1.3e-6) {
            double v = rabi_signal(p, model, +1, t);
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
    SECTION("thermal 20.7: carrier contrast collapses while sidebands oscillate") {
        MotionalState s{20.7, 0.0};
        auto p = displaced_thermal(s, choose_truncation(s));
        double tpi = kPi / (model.omega * rabi_matrix_element(0, 0, model.lamb_dicke));
        auto contrast = [&](int dn) {
            double lo = 1.0, hi = 0.0;
            for (double t = 0.0; t <= 4.0 * tpi; t += tpi / 40.0) {
                double v = rabi_signal(p, model, dn, t);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            return hi - lo;
        };
        double carrier = contrast(0);
        double blue = contrast(+1);
        double red = contrast(-1);
        REQUIRE(carrier < 0.7 * blue);
        REQUIRE(blue > 0.75);
        REQUIRE(red > 0.75);
    }
    SECTION("large oscillatory states give more signal on the second red sideband") {
        MotionalState s{0.0, 82.0};
        auto p = displaced_thermal(s, choose_truncation(s));
        double tpi = kPi / (model.omega * rabi_matrix_element(0, 0, model.lamb_dicke));
        auto contrast = [&](int dn) {
            double lo = 1.0, hi = 0.0;
            for (double t = 0.0; t <= 4.0 * tpi; t += tpi / 40.0) {
                double v = rabi_signal(p, model, dn, t);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            return hi - lo;
        };
        REQUIRE(contrast(-2) > contrast(-1));
    }
}
