#include <catch2/catch_amalgamated.hpp>

#include "ionsep/calibrate.hpp"
#include "ionsep/numeric.hpp"

#include <cmath>

using namespace ionsep;
using Catch::Approx;

namespace {

SegmentBasis paper_basis() {
    SegmentBasis b;
    b.alpha_c = -2.612e6;
    b.alpha_s = -1.279e6;
    b.alpha_o = 0.993e6;
    b.alpha_prime = -1.956e6;
    b.beta_c = 3.1e13;
    b.beta_s = -6.2e12;
    b.beta_prime = 1.5e14;
    return b;
}

double omega_for(const SegmentBasis& b, const VoltageSet& v, const PhysicalConstants& c) {
    return single_well_frequency(coefficients_from_voltages(b, v).alpha, c);
}

std::vector<FrequencyScan> synthetic_alpha_scans(const SegmentBasis& b,
                                                 const PhysicalConstants& c, double noise,
                                                 Rng* rng, int points_per_scan = 6) {
    std::vector<FrequencyScan> scans(3);
    scans[0].segment = Segment::C;
    scans[0].background = {0.0, 0.0, 0.0, 0.0, 0.0};
    scans[1].segment = Segment::S;
    scans[1].background = {-7.0, 0.0, 0.0, 0.0, 0.0};
    scans[2].segment = Segment::O;
    scans[2].background = {-7.0, 0.0, 0.0, 0.0, 0.0};
    auto fill = [&](FrequencyScan& scan, double lo, double hi) {
        for (int i = 0; i < points_per_scan; ++i) {
            double u = lo + (hi - lo) * static_cast<double>(i) / (points_per_scan - 1);
            VoltageSet v = scan.background;
            switch (scan.segment) {
                case Segment::C: v.u_c = u; break;
                case Segment::S: v.u_s = u; break;
                case Segment::O: v.u_o = u; break;
            }
            double omega = omega_for(b, v, c);
            if (rng) omega += rng->normal(0.0, noise);
            scan.points.push_back({u, omega, noise});
        }
    };
    fill(scans[0], -9.0, -3.0);
    fill(scans[1], -7.5, 0.0);
    fill(scans[2], 0.0, 9.0);
    return scans;
}

} // namespace

TEST_CASE("fit_alpha recovers the segment coefficients") {
    PhysicalConstants c = PhysicalConstants::ca40();
    SegmentBasis b = paper_basis();

    SECTION("noiseless scans recover exactly") {
        auto scans = synthetic_alpha_scans(b, c, 0.0, nullptr);
        AlphaFit fit = fit_alpha(scans, c);
        REQUIRE(fit.alpha_c.value == Approx(b.alpha_c).epsilon(1e-9));
        REQUIRE(fit.alpha_s.value == Approx(b.alpha_s).epsilon(1e-9));
        REQUIRE(fit.alpha_o.value == Approx(b.alpha_o).epsilon(1e-9));
        REQUIRE(fit.alpha_prime.value == Approx(b.alpha_prime).epsilon(1e-9));
        REQUIRE(fit.dof == 18 - 4);
    }
    SECTION("frequency noise at the spectroscopy accuracy stays within 3 sigma") {
        Rng rng(2024);
        auto scans = synthetic_alpha_scans(b, c, kTwoPi * 2e3, &rng);
        AlphaFit fit = fit_alpha(scans, c);
        REQUIRE(std::fabs(fit.alpha_c.value - b.alpha_c) < 3.0 * fit.alpha_c.sigma);
        REQUIRE(std::fabs(fit.alpha_s.value - b.alpha_s) < 5.0 * fit.alpha_s.sigma);
        REQUIRE(std::fabs(fit.alpha_o.value - b.alpha_o) < 5.0 * fit.alpha_o.sigma);
        REQUIRE(std::fabs(fit.alpha_prime.value - b.alpha_prime) < 5.0 * fit.alpha_prime.sigma);
        // sub-percent accuracy, as quoted for this scheme
        REQUIRE(fit.alpha_c.sigma / std::fabs(fit.alpha_c.value) < 0.01);
    }
    SECTION("two points per scan give the same slope as six on noiseless data") {
        auto six = fit_alpha(synthetic_alpha_scans(b, c, 0.0, nullptr, 6), c);
        auto two = fit_alpha(synthetic_alpha_scans(b, c, 0.0, nullptr, 2), c);
        REQUIRE(two.alpha_c.value == Approx(six.alpha_c.value).epsilon(1e-9));
        REQUIRE(two.alpha_s.value == Approx(six.alpha_s.value).epsilon(1e-9));
    }
    SECTION("uncertainty shrinks as one over sqrt(N)") {
        auto scans6 = synthetic_alpha_scans(b, c, kTwoPi * 2e3, nullptr, 6);
        auto scans600 = scans6;
        for (auto& scan : scans600) {
            auto base = scan.points;
            for (int rep = 1; rep < 100; ++rep)
                scan.points.insert(scan.points.end(), base.begin(), base.end());
        }
        AlphaFit f6 = fit_alpha(scans6, c);
        AlphaFit f600 = fit_alpha(scans600, c);
        double ratio = f6.alpha_c.sigma / f600.alpha_c.sigma;
        REQUIRE(ratio == Approx(10.0).epsilon(0.15));
    }
    SECTION("degenerate scan (all voltages equal) is rejected") {
        auto scans = synthetic_alpha_scans(b, c, 0.0, nullptr);
        for (auto& pt : scans[0].points) pt.voltage = -7.0;
        REQUIRE_THROWS_AS(fit_alpha(scans, c), DegenerateFitError);
    }
    SECTION("missing segment is rejected") {
        auto scans = synthetic_alpha_scans(b, c, 0.0, nullptr);
        scans.pop_back();
        REQUIRE_THROWS_AS(fit_alpha(scans, c), DegenerateFitError);
    }
}

TEST_CASE("fit_beta recovers the quartic coefficients from CP distances") {
    PhysicalConstants c = PhysicalConstants::ca40();
    SegmentBasis b = paper_basis();
    double kappa = c.coulomb_factor();

    auto cp_point = [&](double u_s, double u_o, double noise, Rng* rng) {
        VoltageSet v;
        v.u_s = u_s;
        v.u_o = u_o;
        v.u_c = (-b.alpha_prime - b.alpha_s * u_s - b.alpha_o * u_o) / b.alpha_c;
        double beta = coefficients_from_voltages(b, v).beta;
        DistanceScanPoint pt;
        pt.voltages = v;
        pt.distance = std::pow(2.0 * kappa / beta, 0.2);
        if (rng) pt.distance += rng->normal(0.0, noise);
        pt.sigma = noise;
        return pt;
    };

    SECTION("22 voltage sets with camera-level noise recover beta_C within 3 sigma") {
        Rng rng(77);
        std::vector<DistanceScanPoint> scan;
        for (int i = 0; i < 22; ++i) {
            double u_s = 5.0 - 12.5 * static_cast<double>(i) / 21.0;
            double u_o = (i % 2 == 0) ? 0.0 : 6.0; // U_O must vary or the CP
                                                   // condition makes the design singular
            scan.push_back(cp_point(u_s, u_o, 0.1e-6, &rng));
        }
        BetaFit fit = fit_beta(scan, b, c);
        REQUIRE(std::fabs(fit.beta_c.value - b.beta_c) < 3.0 * fit.beta_c.sigma);
        REQUIRE(std::fabs(fit.beta_s.value - b.beta_s) < 3.0 * fit.beta_s.sigma);
        REQUIRE(std::fabs(fit.beta_prime.value - b.beta_prime) < 3.0 * fit.beta_prime.sigma);
    }
    SECTION("noiseless minimal set recovers exactly, including the offset") {
        std::vector<DistanceScanPoint> scan{cp_point(0.0, 0.0, 0.0, nullptr),
                                            cp_point(-3.0, 0.0, 0.0, nullptr),
                                            cp_point(2.0, 3.0, 0.0, nullptr)};
        BetaFit fit = fit_beta(scan, b, c);
        REQUIRE(fit.beta_c.value == Approx(b.beta_c).epsilon(1e-9));
        REQUIRE(fit.beta_s.value == Approx(b.beta_s).epsilon(1e-9));
        REQUIRE(fit.beta_prime.value == Approx(b.beta_prime).epsilon(1e-9));
        // the per-point transform is 2 kappa / d^5
        double d0 = scan[0].distance;
        REQUIRE(fit.beta_prime.value + scan[0].voltages.u_c * fit.beta_c.value ==
                Approx(2.0 * kappa / std::pow(d0, 5)).epsilon(1e-9));
    }
    SECTION("transform is the exact inverse of the quartic distance") {
        double beta = 1.5e14;
        double d = quartic_distance(beta, c);
        REQUIRE(2.0 * kappa / std::pow(d, 5) == Approx(beta).epsilon(1e-12));
        REQUIRE(d == Approx(28.62e-6).epsilon(1e-3));
    }
    SECTION("underdetermined scan is rejected") {
        std::vector<DistanceScanPoint> scan{cp_point(0.0, 0.0, 0.0, nullptr),
                                            cp_point(-3.0, 0.0, 0.0, nullptr)};
        REQUIRE_THROWS_AS(fit_beta(scan, b, c), DegenerateFitError);
    }
    SECTION("points away from the critical point are rejected") {
        auto pt = cp_point(0.0, 0.0, 0.0, nullptr);
        pt.voltages.u_c += 1.0;
        std::vector<DistanceScanPoint> scan{pt, cp_point(-3.0, 0.0, 0.0, nullptr),
                                            cp_point(2.0, 3.0, 0.0, nullptr)};
        REQUIRE_THROWS_AS(fit_beta(scan, b, c), UsageError);
    }
}

TEST_CASE("round-trip recovery for randomized bases") {
    PhysicalConstants c = PhysicalConstants::ca40();
    Rng rng(5150);
    for (int trial = 0; trial < 20; ++trial) {
        SegmentBasis b;
        b.alpha_c = -rng.uniform(1e6, 5e6);
        b.alpha_s = -rng.uniform(0.3e6, 3e6);
        b.alpha_o = rng.uniform(0.3e6, 3e6);
        b.alpha_prime = rng.uniform(-3e6, 3e6);
        b.beta_c = rng.uniform(1e13, 6e13);
        b.beta_s = -rng.uniform(2e12, 9e12);
        b.beta_prime = rng.uniform(0.8e14, 2.5e14);
        auto scans = synthetic_alpha_scans(b, c, 0.0, nullptr);
        AlphaFit af = fit_alpha(scans, c);
        REQUIRE(af.alpha_c.value == Approx(b.alpha_c).epsilon(1e-8));
        REQUIRE(af.alpha_s.value == Approx(b.alpha_s).epsilon(1e-8));
        REQUIRE(af.alpha_o.value == Approx(b.alpha_o).epsilon(1e-8));
        REQUIRE(af.alpha_prime.value == Approx(b.alpha_prime).epsilon(1e-8));

        std::vector<DistanceScanPoint> dscan;
        double kappa = c.coulomb_factor();
        int flip = 0;
        for (double u_s : {-6.0, -3.0, 0.0, 2.0, 4.0}) {
            VoltageSet v;
            v.u_s = u_s;
            v.u_o = (flip++ % 2) ? 3.0 : 0.0;
            v.u_c = (-b.alpha_prime - b.alpha_s * u_s - b.alpha_o * v.u_o) / b.alpha_c;
            double beta = coefficients_from_voltages(b, v).beta;
            if (!(beta > 1e12)) continue;
            dscan.push_back({v, std::pow(2.0 * kappa / beta, 0.2), 0.0});
        }
        if (dscan.size() < 3) continue;
        BetaFit bf = fit_beta(dscan, b, c);
        REQUIRE(bf.beta_c.value == Approx(b.beta_c).epsilon(1e-8));
        REQUIRE(bf.beta_prime.value == Approx(b.beta_prime).epsilon(1e-8));
    }
}

TEST_CASE("fit_heating_power_law") {
    SECTION("noiseless samples of the rate law recover exactly") {
        std::vector<std::pair<double, double>> pts;
        for (double f : {0.2, 0.5, 1.0, 1.4}) {
            double omega = kTwoPi * f * 1e6;
            pts.emplace_back(omega, 6.3 * std::pow(f, -1.8));
        }
        HeatingModel fit = fit_heating_power_law(pts);
        REQUIRE(fit.prefactor == Approx(6.3).epsilon(1e-9));
        REQUIRE(fit.exponent == Approx(1.8).epsilon(1e-9));
    }
    SECTION("rate law evaluation at the operating points") {
        HeatingModel law{6.3, 1.8, 0.0, 0.0};
        REQUIRE(law.rate(kTwoPi * 1.4e6) == Approx(3.44).epsilon(2e-3));
        REQUIRE(law.rate(kTwoPi * 0.174e6) == Approx(147.0).epsilon(3e-3));
    }
    SECTION("non-positive rates are rejected") {
        std::vector<std::pair<double, double>> pts{{kTwoPi * 1e6, 6.3},
                                                   {kTwoPi * 2e6, -1.0},
                                                   {kTwoPi * 3e6, 2.0}};
        REQUIRE_THROWS_AS(fit_heating_power_law(pts), NumericError);
    }
    SECTION("fewer than three points are rejected") {
        std::vector<std::pair<double, double>> pts{{kTwoPi * 1e6, 6.3}, {kTwoPi * 2e6, 1.8}};
        REQUIRE_THROWS_AS(fit_heating_power_law(pts), DegenerateFitError);
    }
}

TEST_CASE("magnification_from_frequency") {
    PhysicalConstants c = PhysicalConstants::ca40();
    SECTION("harmonic distance over the pixel separation") {
        double scale = magnification_from_frequency(kTwoPi * 1.413e6, 16.5, c);
        REQUIRE(scale == Approx(0.27e-6).epsilon(5e-3));
    }
    SECTION("doubling the pixel distance halves the scale") {
        double s1 = magnification_from_frequency(kTwoPi * 1.0e6, 10.0, c);
        double s2 = magnification_from_frequency(kTwoPi * 1.0e6, 20.0, c);
        REQUIRE(s1 == Approx(2.0 * s2).epsilon(1e-12));
    }
    SECTION("quarter-pixel resolution corresponds to the quoted accuracy") {
        double scale = magnification_from_frequency(kTwoPi * 1.413e6, 16.5, c);
        REQUIRE(scale * 0.25 == Approx(0.07e-6).epsilon(0.05));
    }
    SECTION("preconditions") {
        REQUIRE_THROWS_AS(magnification_from_frequency(0.0, 16.5, c), NonConfiningError);
        REQUIRE_THROWS_AS(magnification_from_frequency(kTwoPi * 1e6, 0.0, c), NumericError);
    }
}
