// Flat, unit-annotated key-value configuration. Every numeric key carries an
// explicit unit that is converted to the internal SI convention at the
// boundary; unknown keys are rejected. Defaults reproduce the bundled trap
// calibration.
#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ionsep/calibrate.hpp"
#include "ionsep/constants.hpp"
#include "ionsep/drift.hpp"
#include "ionsep/dynamics.hpp"
#include "ionsep/errors.hpp"
#include "ionsep/estimate.hpp"
#include "ionsep/hardware.hpp"
#include "ionsep/io.hpp"
#include "ionsep/phonons.hpp"
#include "ionsep/trap_model.hpp"

namespace ionsep {

struct ProjectConfig {
    // ion
    std::string species = "40Ca+";
    double ion_mass_u = 0.0; // 0 = take from species

    // trap geometry / expansion validity
    double validity_radius = 200e-6; // m

    // calibrated segment basis (per-volt coefficients and stray offsets)
    double alpha_c = -2.612e6, alpha_s = -1.279e6, alpha_o = 0.993e6;   // 1/m^2
    double alpha_prime = -1.956e6;                                      // V/m^2
    double beta_c = 3.1e13, beta_s = -6.2e12, beta_o = 0.0;             // 1/m^4
    double beta_prime = 1.5e14;                                         // V/m^4
    double gamma_s = 500.0, gamma_o = 333.0;                            // 1/m
    double gamma_prime = 0.0;                                           // V/m
    double sigma_alpha_c = 0.007e6, sigma_alpha_s = 0.012e6, sigma_alpha_o = 0.005e6;
    double sigma_alpha_prime = 0.035e6;
    double sigma_beta_c = 0.1e13, sigma_beta_s = 0.3e12, sigma_beta_prime = 0.1e14;

    // waveform generator and filters
    double awg_range = 10.0;        // V
    double awg_resolution = 0.3e-3; // V
    double awg_max_rate = 2.5e6;    // 1/s
    double filter_cutoff = 50e3;    // Hz
    double filter_quality = 0.70710678118654752;

    // separation ramp
    double ramp_duration = 80e-6;     // s, emitted
    double ramp_final_distance = 900e-6; // m, trajectory target
    double truncate_head = 0.10;
    double truncate_tail = 0.30;
    double sample_rate = 2.5e6;  // 1/s
    double cp_offset = 0.0;      // V on segment C at the CP
    double tilt_compensation = 0.0; // V differential outer voltage

    // voltage mesh anchors
    double u_c_start = -7.0, u_s_start = 0.0, u_o_start = 0.0;
    double u_s_cp = -3.0, u_o_cp = 9.0;
    double u_s_end = -3.0, u_o_end = -9.0;
    double pre_cp_plateau = 0.5, post_cp_plateau = 0.3;

    // anomalous heating law
    double heating_prefactor = 6.3; // 1/ms at 2pi MHz
    double heating_exponent = 1.8;

    // simulation
    double sim_timestep = 1e-9;      // s
    double reference_frequency = 1.4e6; // Hz (phonon unit is 2pi x this)
    std::string integrator = "symplectic";
    double oversample = 16.0;
    double tail_hold = 25e-6;  // s
    double tail_periods = 5.0;

    // spectroscopy probe
    double rabi_frequency = 100e3; // Hz, bare Rabi Omega / 2pi
    double lamb_dicke = 0.23;

    // estimation
    double mcmc_length = 50000.0;
    double mcmc_burn_in = 0.2;
    double prior_cap = 1000.0;
    double omega_prior_halfwidth = 0.2;

    // tilt servo and charging model
    double servo_kp = 0.3;
    double servo_ki = 1.4;     // 1/s
    double servo_period = 0.5; // s
    double servo_noise = 0.2e-3; // V
    double charging_k_prime = 3.02;  // mV/min
    double charging_delta = 0.074;   // 1/min
    double charging_kappa_dis = 0.017; // 1/min

    // ---- component builders ----

    PhysicalConstants constants() const {
        PhysicalConstants c = PhysicalConstants::for_species(species);
        if (ion_mass_u > 0.0) c.mass = ion_mass_u * kAtomicMassUnit;
        return c;
    }

    SegmentBasis basis() const {
        SegmentBasis b;
        b.alpha_c = alpha_c;
        b.alpha_s = alpha_s;
        b.alpha_o = alpha_o;
        b.alpha_prime = alpha_prime;
        b.beta_c = beta_c;
        b.beta_s = beta_s;
        b.beta_o = beta_o;
        b.beta_prime = beta_prime;
        b.gamma_s = gamma_s;
        b.gamma_o = gamma_o;
        b.gamma_prime = gamma_prime;
        b.sigma_alpha_c = sigma_alpha_c;
        b.sigma_alpha_s = sigma_alpha_s;
        b.sigma_alpha_o = sigma_alpha_o;
        b.sigma_alpha_prime = sigma_alpha_prime;
        b.sigma_beta_c = sigma_beta_c;
        b.sigma_beta_s = sigma_beta_s;
        b.sigma_beta_prime = sigma_beta_prime;
        b.validate();
        return b;
    }

    AwgSpec awg() const { return {awg_range, awg_resolution, awg_max_rate}; }

    FilterSpec filter() const { return {filter_cutoff, filter_quality}; }

    MeshSpec mesh_spec() const {
        MeshSpec m;
        m.u_c_start = u_c_start;
        m.u_s_start = u_s_start;
        m.u_o_start = u_o_start;
        m.u_s_cp = u_s_cp;
        m.u_o_cp = u_o_cp;
        m.u_s_end = u_s_end;
        m.u_o_end = u_o_end;
        m.pre_cp_plateau = pre_cp_plateau;
        m.post_cp_plateau = post_cp_plateau;
        return m;
    }

    HeatingModel heating() const { return {heating_prefactor, heating_exponent, 0.0, 0.0}; }

    SimConfig sim() const {
        SimConfig s;
        s.timestep = sim_timestep;
        s.integrator = integrator == "rk4" ? Integrator::Rk4 : Integrator::Symplectic;
        s.omega_ref = kTwoPi * reference_frequency;
        s.tail_periods = tail_periods;
        s.validity_radius = validity_radius;
        return s;
    }

    RabiModel rabi_model() const { return {kTwoPi * rabi_frequency, lamb_dicke}; }

    PriorSpec priors() const {
        return PriorSpec::around_nominal(kTwoPi * rabi_frequency, prior_cap,
                                         omega_prior_halfwidth);
    }

    McmcConfig mcmc(std::uint64_t seed) const {
        McmcConfig m(seed);
        m.length = static_cast<std::size_t>(mcmc_length);
        m.burn_in_fraction = mcmc_burn_in;
        return m;
    }

    ServoConfig servo(std::uint64_t seed) const {
        return {servo_kp, servo_ki, servo_period, servo_noise * 1e3, seed};
    }

    ChargingParams charging() const {
        return {charging_k_prime, charging_delta, charging_kappa_dis};
    }

    SeparationSetup separation_setup() const {
        SeparationSetup s;
        s.basis = basis();
        s.constants = constants();
        s.mesh_spec = mesh_spec();
        s.d_final = ramp_final_distance;
        s.emitted_duration = ramp_duration;
        s.truncate_head = truncate_head;
        s.truncate_tail = truncate_tail;
        s.ramp = {cp_offset, tilt_compensation, sample_rate, awg_range};
        s.awg = awg();
        s.filter = filter();
        s.oversample = static_cast<int>(oversample);
        s.tail_hold = tail_hold;
        s.sim = sim();
        return s;
    }
};

namespace detail {

enum class Dim {
    Voltage,
    Length,
    Time,
    Frequency,
    SampleRate,
    Mass,
    PerMs,
    PerMin,
    MvPerMin,
    CurvaturePerVolt,
    QuarticPerVolt,
    FieldPerVolt,
    CurvatureOffset,
    QuarticOffset,
    FieldOffset,
    Scalar,
};

struct UnitDef {
    const char* name;
    double factor; // multiplier to the canonical unit
};

inline const std::vector<UnitDef>& units_for(Dim d) {
    static const std::vector<UnitDef> voltage{{"V", 1.0}, {"mV", 1e-3}, {"uV", 1e-6}};
    static const std::vector<UnitDef> length{{"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6}, {"nm", 1e-9}};
    static const std::vector<UnitDef> time{
        {"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}, {"min", 60.0}};
    static const std::vector<UnitDef> freq{
        {"Hz", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}};
    static const std::vector<UnitDef> srate{{"1/s", 1.0}, {"1/ms", 1e3}, {"1/us", 1e6}};
    static const std::vector<UnitDef> mass{{"u", 1.0}};
    static const std::vector<UnitDef> per_ms{{"1/ms", 1.0}};
    static const std::vector<UnitDef> per_min{{"1/min", 1.0}};
    static const std::vector<UnitDef> mv_min{{"mV/min", 1.0}};
    static const std::vector<UnitDef> curv{{"1/m^2", 1.0}};
    static const std::vector<UnitDef> quart{{"1/m^4", 1.0}};
    static const std::vector<UnitDef> field{{"1/m", 1.0}};
    static const std::vector<UnitDef> curv_off{{"V/m^2", 1.0}};
    static const std::vector<UnitDef> quart_off{{"V/m^4", 1.0}};
    static const std::vector<UnitDef> field_off{{"V/m", 1.0}};
    static const std::vector<UnitDef> scalar{{"-", 1.0}, {"1", 1.0}};
    switch (d) {
        case Dim::Voltage: return voltage;
        case Dim::Length: return length;
        case Dim::Time: return time;
        case Dim::Frequency: return freq;
        case Dim::SampleRate: return srate;
        case Dim::Mass: return mass;
        case Dim::PerMs: return per_ms;
        case Dim::PerMin: return per_min;
        case Dim::MvPerMin: return mv_min;
        case Dim::CurvaturePerVolt: return curv;
        case Dim::QuarticPerVolt: return quart;
        case Dim::FieldPerVolt: return field;
        case Dim::CurvatureOffset: return curv_off;
        case Dim::QuarticOffset: return quart_off;
        case Dim::FieldOffset: return field_off;
        case Dim::Scalar: return scalar;
    }
    return scalar;
}

struct KeyDef {
    const char* key;
    double ProjectConfig::*num = nullptr;
    std::string ProjectConfig::*str = nullptr;
    Dim dim = Dim::Scalar;
};

inline const std::vector<KeyDef>& key_registry() {
    using C = ProjectConfig;
    static const std::vector<KeyDef> reg{
        {"ion.species", nullptr, &C::species},
        {"ion.mass", &C::ion_mass_u, nullptr, Dim::Mass},
        {"trap.validity_radius", &C::validity_radius, nullptr, Dim::Length},
        {"basis.alpha_c", &C::alpha_c, nullptr, Dim::CurvaturePerVolt},
        {"basis.alpha_s", &C::alpha_s, nullptr, Dim::CurvaturePerVolt},
        {"basis.alpha_o", &C::alpha_o, nullptr, Dim::CurvaturePerVolt},
        {"basis.alpha_prime", &C::alpha_prime, nullptr, Dim::CurvatureOffset},
        {"basis.beta_c", &C::beta_c, nullptr, Dim::QuarticPerVolt},
        {"basis.beta_s", &C::beta_s, nullptr, Dim::QuarticPerVolt},
        {"basis.beta_o", &C::beta_o, nullptr, Dim::QuarticPerVolt},
        {"basis.beta_prime", &C::beta_prime, nullptr, Dim::QuarticOffset},
        {"basis.gamma_s", &C::gamma_s, nullptr, Dim::FieldPerVolt},
        {"basis.gamma_o", &C::gamma_o, nullptr, Dim::FieldPerVolt},
        {"basis.gamma_prime", &C::gamma_prime, nullptr, Dim::FieldOffset},
        {"basis.sigma_alpha_c", &C::sigma_alpha_c, nullptr, Dim::CurvaturePerVolt},
        {"basis.sigma_alpha_s", &C::sigma_alpha_s, nullptr, Dim::CurvaturePerVolt},
        {"basis.sigma_alpha_o", &C::sigma_alpha_o, nullptr, Dim::CurvaturePerVolt},
        {"basis.sigma_alpha_prime", &C::sigma_alpha_prime, nullptr, Dim::CurvatureOffset},
        {"basis.sigma_beta_c", &C::sigma_beta_c, nullptr, Dim::QuarticPerVolt},
        {"basis.sigma_beta_s", &C::sigma_beta_s, nullptr, Dim::QuarticPerVolt},
        {"basis.sigma_beta_prime", &C::sigma_beta_prime, nullptr, Dim::QuarticOffset},
        {"awg.range", &C::awg_range, nullptr, Dim::Voltage},
        {"awg.resolution", &C::awg_resolution, nullptr, Dim::Voltage},
        {"awg.max_rate", &C::awg_max_rate, nullptr, Dim::SampleRate},
        {"filter.cutoff", &C::filter_cutoff, nullptr, Dim::Frequency},
        {"filter.quality", &C::filter_quality, nullptr, Dim::Scalar},
        {"ramp.duration", &C::ramp_duration, nullptr, Dim::Time},
        {"ramp.final_distance", &C::ramp_final_distance, nullptr, Dim::Length},
        {"ramp.truncate_head", &C::truncate_head, nullptr, Dim::Scalar},
        {"ramp.truncate_tail", &C::truncate_tail, nullptr, Dim::Scalar},
        {"ramp.sample_rate", &C::sample_rate, nullptr, Dim::SampleRate},
        {"ramp.cp_offset", &C::cp_offset, nullptr, Dim::Voltage},
        {"ramp.tilt_compensation", &C::tilt_compensation, nullptr, Dim::Voltage},
        {"mesh.u_c_start", &C::u_c_start, nullptr, Dim::Voltage},
        {"mesh.u_s_start", &C::u_s_start, nullptr, Dim::Voltage},
        {"mesh.u_o_start", &C::u_o_start, nullptr, Dim::Voltage},
        {"mesh.u_s_cp", &C::u_s_cp, nullptr, Dim::Voltage},
        {"mesh.u_o_cp", &C::u_o_cp, nullptr, Dim::Voltage},
        {"mesh.u_s_end", &C::u_s_end, nullptr, Dim::Voltage},
        {"mesh.u_o_end", &C::u_o_end, nullptr, Dim::Voltage},
        {"mesh.pre_cp_plateau", &C::pre_cp_plateau, nullptr, Dim::Scalar},
        {"mesh.post_cp_plateau", &C::post_cp_plateau, nullptr, Dim::Scalar},
        {"heating.prefactor", &C::heating_prefactor, nullptr, Dim::PerMs},
        {"heating.exponent", &C::heating_exponent, nullptr, Dim::Scalar},
        {"sim.timestep", &C::sim_timestep, nullptr, Dim::Time},
        {"sim.reference_frequency", &C::reference_frequency, nullptr, Dim::Frequency},
        {"sim.integrator", nullptr, &C::integrator},
        {"sim.oversample", &C::oversample, nullptr, Dim::Scalar},
        {"sim.tail_hold", &C::tail_hold, nullptr, Dim::Time},
        {"sim.tail_periods", &C::tail_periods, nullptr, Dim::Scalar},
        {"probe.rabi_frequency", &C::rabi_frequency, nullptr, Dim::Frequency},
        {"probe.lamb_dicke", &C::lamb_dicke, nullptr, Dim::Scalar},
        {"mcmc.length", &C::mcmc_length, nullptr, Dim::Scalar},
        {"mcmc.burn_in", &C::mcmc_burn_in, nullptr, Dim::Scalar},
        {"mcmc.prior_cap", &C::prior_cap, nullptr, Dim::Scalar},
        {"mcmc.omega_prior_halfwidth", &C::omega_prior_halfwidth, nullptr, Dim::Scalar},
        {"servo.kp", &C::servo_kp, nullptr, Dim::Scalar},
        {"servo.ki", &C::servo_ki, nullptr, Dim::SampleRate},
        {"servo.period", &C::servo_period, nullptr, Dim::Time},
        {"servo.noise", &C::servo_noise, nullptr, Dim::Voltage},
        {"charging.k_prime", &C::charging_k_prime, nullptr, Dim::MvPerMin},
        {"charging.delta", &C::charging_delta, nullptr, Dim::PerMin},
        {"charging.kappa_dis", &C::charging_kappa_dis, nullptr, Dim::PerMin},
    };
    return reg;
}

} // namespace detail

/// Parses the key-value config format: one `key = value unit` per line,
/// `#` comments. Unknown keys, missing units and unit/dimension mismatches
/// are rejected with the offending line.
inline ProjectConfig parse_config(const std::string& text) {
    ProjectConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        // trim
        auto a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        auto b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        auto strip = [](std::string s) {
            auto x = s.find_first_not_of(" \t");
            auto y = s.find_last_not_of(" \t");
            return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
        };
        std::string key = strip(line.substr(0, eq));
        std::string rhs = strip(line.substr(eq + 1));

        const detail::KeyDef* def = nullptr;
        for (const auto& d : detail::key_registry())
            if (key == d.key) def = &d;
        if (!def)
            throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                             "'");
        if (def->str) {
            cfg.*(def->str) = rhs;
            continue;
        }
        auto sp = rhs.find_last_of(" \t");
        if (sp == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": key '" + key +
                             "' needs a unit");
        std::string unit = strip(rhs.substr(sp + 1));
        double value = parse_double(strip(rhs.substr(0, sp)), line_no);
        const auto& units = detail::units_for(def->dim);
        const detail::UnitDef* u = nullptr;
        for (const auto& cand : units)
            if (unit == cand.name) u = &cand;
        if (!u) {
            std::ostringstream os;
            os << "config line " << line_no << ": unit '" << unit << "' not valid for '" << key
               << "' (accepted:";
            for (const auto& cand : units) os << " " << cand.name;
            os << ")";
            throw UsageError(os.str());
        }
        cfg.*(def->num) = value * u->factor;
    }
    return cfg;
}

/// Canonical serialization: registry order, canonical units, 17 significant
/// digits. parse(serialize(c)) reproduces c exactly.
inline std::string serialize_config(const ProjectConfig& cfg) {
    std::ostringstream os;
    for (const auto& d : detail::key_registry()) {
        if (d.str) {
            os << d.key << " = " << cfg.*(d.str) << "\n";
        } else {
            os << d.key << " = " << fmt_double(cfg.*(d.num)) << " "
               << detail::units_for(d.dim).front().name << "\n";
        }
    }
    return os.str();
}

inline ProjectConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_text_file(path));
}

inline std::string config_hash(const ProjectConfig& cfg) {
    return hex64(fnv1a64(serialize_config(cfg)));
}

} // namespace ionsep
