#include <catch2/catch_amalgamated.hpp>

#include "ionsep/rampgen.hpp"

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

struct Design {
    SegmentBasis basis = paper_basis();
    PhysicalConstants constants = PhysicalConstants::ca40();
    TrajectorySpec spec;
    RampMesh mesh;

    Design() {
        AxialPotential p0 = coefficients_from_voltages(basis, {-7.0, 0.0, 0.0, 0.0, 0.0});
        double d_i = equilibrium_two_ion(p0, constants).distance();
        spec = TrajectorySpec::from_emitted_duration(d_i, 900e-6, 80e-6);
        mesh = build_separation_mesh(basis, constants, MeshSpec{},
                                     distance_at(spec, spec.effective_duration()));
    }
};

} // namespace

TEST_CASE("trajectory distance function") {
    SECTION("boundary values on the untruncated clock") {
        REQUIRE(trajectory_distance(5e-6, 400e-6, 80e-6, 0.0) == Approx(5e-6));
        REQUIRE(trajectory_distance(5e-6, 400e-6, 80e-6, 80e-6) == Approx(400e-6));
    }
    SECTION("midpoint of the untruncated clock") {
        // (1/2)^2 sin^2(pi/4) = 1/8
        REQUIRE(trajectory_distance(5e-6, 400e-6, 80e-6, 40e-6) ==
                Approx(5e-6 + 395e-6 / 8.0).epsilon(1e-12));
    }
    SECTION("emitted clock covers the retained window") {
        TrajectorySpec spec;
        spec.d_initial = 5e-6;
        spec.d_final = 400e-6;
        spec.total_time = 100e-6;
        spec.validate();
        REQUIRE(spec.effective_duration() == Approx(60e-6));
        REQUIRE(distance_at(spec, 0.0) ==
                Approx(trajectory_distance(5e-6, 400e-6, 100e-6, 10e-6)));
        REQUIRE(distance_at(spec, 60e-6) ==
                Approx(trajectory_distance(5e-6, 400e-6, 100e-6, 70e-6)));
        REQUIRE_THROWS_AS(distance_at(spec, 61e-6), RangeError);
        REQUIRE_THROWS_AS(distance_at(spec, -1e-6), RangeError);
    }
    SECTION("emitted-duration constructor") {
        auto spec = TrajectorySpec::from_emitted_duration(5e-6, 400e-6, 80e-6);
        REQUIRE(spec.effective_duration() == Approx(80e-6));
        REQUIRE(spec.total_time == Approx(80e-6 / 0.6));
    }
    SECTION("invalid fractions are rejected") {
        TrajectorySpec spec;
        spec.d_initial = 5e-6;
        spec.d_final = 400e-6;
        spec.total_time = 100e-6;
        spec.truncate_head = 0.6;
        REQUIRE_THROWS_AS(spec.validate(), std::invalid_argument);
    }
}

TEST_CASE("mesh voltage interpolation") {
    Design d;

    SECTION("start anchor reproduces the trapping voltage exactly") {
        VoltageSet v = voltages_from_alpha(d.mesh.alpha_start(), d.mesh, d.basis);
        REQUIRE(v.u_c == Approx(-7.0).margin(1e-12));
        REQUIRE(v.u_s == 0.0);
        REQUIRE(v.u_o == 0.0);
    }
    SECTION("voltages_from_alpha is the algebraic inverse of the alpha model") {
        for (double f : {0.999, 0.7, 0.31, 0.0, -0.4, -0.93}) {
            double a = f >= 0.0 ? f * d.mesh.alpha_start() : -f * d.mesh.alpha_end();
            VoltageSet v = voltages_from_alpha(a, d.mesh, d.basis);
            double back = coefficients_from_voltages(d.basis, v).alpha;
            REQUIRE(back == Approx(a).margin(1e-10 * std::fabs(d.mesh.alpha_start())));
        }
    }
    SECTION("alpha outside the mesh is rejected") {
        REQUIRE_THROWS_AS(voltages_from_alpha(1.1 * d.mesh.alpha_start(), d.mesh, d.basis),
                          RangeError);
        REQUIRE_THROWS_AS(voltages_from_alpha(1.1 * d.mesh.alpha_end(), d.mesh, d.basis),
                          RangeError);
    }
    SECTION("mesh validation") {
        RampMesh bad;
        bad.anchors = {{1.0, 0, 0}, {2.0, 0, 0}, {-1.0, 0, 0}};
        REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
        RampMesh no_cp;
        no_cp.anchors = {{1.0, 0, 0}, {0.5, 0, 0}, {-1.0, 0, 0}};
        REQUIRE_THROWS_AS(no_cp.validate(), std::invalid_argument);
    }
}

TEST_CASE("alpha_from_distance inverts the equilibrium distance") {
    Design d;

    SECTION("the CP distance maps to alpha = 0") {
        double dcp = mesh_cp_distance(d.mesh, d.basis, d.constants);
        double a = alpha_from_distance(dcp, d.mesh, d.basis, d.constants);
        REQUIRE(std::fabs(a) < 1e-4 * d.mesh.alpha_start());
    }
    SECTION("the harmonic-dominated start maps back to the starting alpha") {
        double target = 0.9 * d.mesh.alpha_start();
        double dist = mesh_equilibrium_distance(target, d.mesh, d.basis, d.constants);
        REQUIRE(dist == Approx(4.59e-6).epsilon(0.02)); // near the 4.45 um harmonic distance
        double a = alpha_from_distance(dist, d.mesh, d.basis, d.constants);
        REQUIRE(a == Approx(target).epsilon(1e-8));
    }
    SECTION("monotonicity: larger distance means smaller alpha") {
        double d_lo = mesh_equilibrium_distance(0.95 * d.mesh.alpha_start(), d.mesh, d.basis,
                                                d.constants);
        double d_hi = mesh_equilibrium_distance(d.mesh.alpha_end(), d.mesh, d.basis, d.constants);
        double prev = 1e300;
        for (int i = 0; i < 100; ++i) {
            double dist = d_lo + (d_hi - d_lo) * static_cast<double>(i) / 99.0;
            double a = alpha_from_distance(dist, d.mesh, d.basis, d.constants);
            REQUIRE(a < prev);
            prev = a;
        }
    }
    SECTION("unreachable distances are rejected") {
        REQUIRE_THROWS_AS(alpha_from_distance(1e-6, d.mesh, d.basis, d.constants), RangeError);
        REQUIRE_THROWS_AS(alpha_from_distance(1e-3, d.mesh, d.basis, d.constants), RangeError);
    }
}

TEST_CASE("build_waveform") {
    Design d;
    RampConfig cfg;

    SECTION("80 us at 2.5 MS/s emits 200 samples per segment") {
        Waveform w = build_waveform(d.spec, d.mesh, cfg, d.basis, d.constants);
        REQUIRE(w.size() == 200);
        REQUIRE(w.duration() == Approx(80e-6));
    }
    SECTION("override to 160 us emits 400 samples") {
        auto spec2 = TrajectorySpec::from_emitted_duration(d.spec.d_initial, 900e-6, 160e-6);
        auto mesh2 = build_separation_mesh(d.basis, d.constants, MeshSpec{},
                                           distance_at(spec2, spec2.effective_duration()));
        Waveform w = build_waveform(spec2, mesh2, cfg, d.basis, d.constants);
        REQUIRE(w.size() == 400);
    }
    SECTION("emitted alpha decreases monotonically and the CP sits mid-ramp") {
        Waveform w = build_waveform(d.spec, d.mesh, cfg, d.basis, d.constants);
        double prev = 1e300;
        for (std::size_t k = 0; k < w.size(); ++k) {
            double a = coefficients_from_voltages(d.basis, w.sample(k)).alpha;
            REQUIRE(a < prev);
            prev = a;
        }
        REQUIRE(w.cp_index > w.size() / 4);
        REQUIRE(w.cp_index < 3 * w.size() / 4);
        double a_cp = coefficients_from_voltages(d.basis, w.sample(w.cp_index)).alpha;
        REQUIRE(std::fabs(a_cp) < 2e-3 * d.mesh.alpha_start());
    }
    SECTION("the CP offset shifts U_C by exactly the configured amount at the CP sample") {
        Waveform base = build_waveform(d.spec, d.mesh, cfg, d.basis, d.constants);
        RampConfig off = cfg;
        off.du_c_cp = -70e-3;
        Waveform shifted = build_waveform(d.spec, d.mesh, off, d.basis, d.constants);
        REQUIRE(shifted.cp_index == base.cp_index);
        REQUIRE(shifted.u_c[base.cp_index] - base.u_c[base.cp_index] ==
                Approx(-70e-3).margin(1e-15));
        // the triangular window vanishes at the ramp boundaries
        REQUIRE(shifted.u_c.front() == base.u_c.front());
        REQUIRE(shifted.u_c.back() == base.u_c.back());
    }
    SECTION("constant differential outer voltage is recorded on its own channel") {
        RampConfig tilt = cfg;
        tilt.du_o = 16e-3;
        Waveform w = build_waveform(d.spec, d.mesh, tilt, d.basis, d.constants);
        for (double v : w.du_o) REQUIRE(v == 16e-3);
    }
    SECTION("slow-at-CP: the alpha rate at the CP is at least 10x below the ends") {
        Waveform w = build_waveform(d.spec, d.mesh, cfg, d.basis, d.constants);
        auto alpha_at = [&](std::size_t k) {
            return coefficients_from_voltages(d.basis, w.sample(k)).alpha;
        };
        auto rate = [&](std::size_t k) { return std::fabs(alpha_at(k + 1) - alpha_at(k)); };
        REQUIRE(rate(0) / rate(w.cp_index) >= 10.0);
        REQUIRE(rate(w.size() - 2) / rate(w.cp_index) >= 10.0);
    }
    SECTION("equilibrium tracking below the CP") {
        Waveform w = build_waveform(d.spec, d.mesh, cfg, d.basis, d.constants);
        for (std::size_t k = 2; k < w.cp_index; k += w.cp_index / 20) {
            AxialPotential p = coefficients_from_voltages(d.basis, w.sample(k));
            double dist = equilibrium_two_ion(p, d.constants).distance();
            double designed = distance_at(d.spec, static_cast<double>(k) * w.dt);
            REQUIRE(dist == Approx(designed).epsilon(1e-3));
        }
    }
    SECTION("deterministic: identical inputs give bit-identical waveforms") {
        Waveform w1 = build_waveform(d.spec, d.mesh, cfg, d.basis, d.constants);
        Waveform w2 = build_waveform(d.spec, d.mesh, cfg, d.basis, d.constants);
        REQUIRE(w1.u_c == w2.u_c);
        REQUIRE(w1.u_s == w2.u_s);
        REQUIRE(w1.u_o == w2.u_o);
        REQUIRE(w1.cp_index == w2.cp_index);
    }
    SECTION("range violations after offsets raise a saturation error") {
        RampConfig tight = cfg;
        tight.awg_range = 5.0; // the mesh reaches |U_O| = 9 V
        REQUIRE_THROWS_AS(build_waveform(d.spec, d.mesh, tight, d.basis, d.constants),
                          SaturationError);
    }
}

TEST_CASE("reverse_waveform") {
    Design d;
    Waveform w = build_waveform(d.spec, d.mesh, RampConfig{}, d.basis, d.constants);

    SECTION("reversal is an involution") {
        Waveform rr = reverse_waveform(reverse_waveform(w));
        REQUIRE(rr.u_c == w.u_c);
        REQUIRE(rr.u_s == w.u_s);
        REQUIRE(rr.u_o == w.u_o);
        REQUIRE(rr.du_o == w.du_o);
        REQUIRE(rr.cp_index == w.cp_index);
    }
    SECTION("first sample of the reverse equals the last of the forward") {
        Waveform r = reverse_waveform(w);
        REQUIRE(r.u_c.front() == w.u_c.back());
        REQUIRE(r.u_s.front() == w.u_s.back());
    }
    SECTION("the CP annotation mirrors") {
        Waveform r = reverse_waveform(w);
        REQUIRE(r.cp_index == w.size() - 1 - w.cp_index);
    }
}
