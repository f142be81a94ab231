// Classical two-ion motion through a separation waveform: integration,
// outcome classification, oscillatory-energy extraction, parameter scans and
// the anomalous-heating budget.
#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ionsep/calibrate.hpp"
#include "ionsep/constants.hpp"
#include "ionsep/errors.hpp"
#include "ionsep/hardware.hpp"
#include "ionsep/numeric.hpp"
#include "ionsep/rampgen.hpp"
#include "ionsep/trap_model.hpp"

namespace ionsep {

enum class Integrator { Symplectic, Rk4 };

struct SimConfig {
    double timestep = 1e-9;                 // s
    Integrator integrator = Integrator::Symplectic;
    double omega_ref = kTwoPi * 1.4e6;      // rad/s, phonon energy unit
    double tail_periods = 5.0;              // local periods averaged for energy
    double validity_radius = kDefaultValidityRadius;
    double escape_factor = 3.0;             // abort beyond escape_factor * radius

    /// Step must resolve the fastest secular period by a factor 50.
    void validate(double omega_max) const {
        if (!(timestep > 0.0)) throw TimestepError("SimConfig: timestep <= 0");
        if (timestep * omega_max > kTwoPi / 50.0)
            throw TimestepError("SimConfig: timestep too coarse for the secular frequency");
    }
};

struct IonState {
    double x1 = 0.0, x2 = 0.0; // m, x1 < x2
    double v1 = 0.0, v2 = 0.0; // m/s
    double time = 0.0;         // s
};

enum class Classification { Separated, BothInLeftWell, BothInRightWell };

inline const char* to_string(Classification c) {
    switch (c) {
        case Classification::Separated: return "separated";
        case Classification::BothInLeftWell: return "both_left";
        default: return "both_right";
    }
}

struct SeparationOutcome {
    Classification classification = Classification::Separated;
    double n_coh_1 = 0.0; // oscillatory quanta at omega_ref
    double n_coh_2 = 0.0;
    double well_1 = 0.0; // m, final per-ion equilibrium position
    double well_2 = 0.0;
};

namespace detail {

struct ForceField {
    const ContinuousVoltage* cv;
    const SegmentBasis* basis;
    double q, kappa, inv_m;

    void accel(double t, double x1, double x2, double& a1, double& a2) const {
        AxialPotential p = coefficients_from_voltages(*basis, cv->at(t));
        double d = x2 - x1;
        double coul = q * kappa / (d * d);
        a1 = (-q * p.derivative(x1) - coul) * inv_m;
        a2 = (-q * p.derivative(x2) + coul) * inv_m;
    }
};

} // namespace detail

/// Integrates m x_i'' = -q dV/dx(x_i, t) +/- q kappa / d^2 over the record's
/// duration. The default velocity-Verlet scheme conserves energy for frozen
/// voltages and is time-reversible together with reverse_waveform.
inline std::vector<IonState> integrate(const ContinuousVoltage& cv, const SegmentBasis& basis,
                                       const IonState& init, const SimConfig& cfg,
                                       const PhysicalConstants& c, std::size_t record_stride = 1) {
    if (!(init.x1 < init.x2))
        throw std::invalid_argument("integrate: initial ordering must satisfy x1 < x2");
    double dt = cfg.timestep;
    auto nsteps = static_cast<std::size_t>(std::ceil(cv.duration() / dt));
    double bound = cfg.escape_factor * cfg.validity_radius;

    detail::ForceField ff{&cv, &basis, c.charge, c.coulomb_factor(), 1.0 / c.mass};
    std::vector<IonState> out;
    out.reserve(nsteps / record_stride + 2);

    double x1 = init.x1, x2 = init.x2, v1 = init.v1, v2 = init.v2;
    double t = init.time;
    out.push_back({x1, x2, v1, v2, t});

    if (cfg.integrator == Integrator::Symplectic) {
        // velocity Verlet with the voltages frozen at each step midpoint;
        // midpoints never coincide with hold boundaries, which keeps the
        // scheme exactly time-reversible against reverse_waveform
        for (std::size_t k = 0; k < nsteps; ++k) {
            double tmid = t + 0.5 * dt;
            double a1, a2;
            ff.accel(tmid, x1, x2, a1, a2);
            x1 += v1 * dt + 0.5 * a1 * dt * dt;
            x2 += v2 * dt + 0.5 * a2 * dt * dt;
            double b1, b2;
            ff.accel(tmid, x1, x2, b1, b2);
            v1 += 0.5 * (a1 + b1) * dt;
            v2 += 0.5 * (a2 + b2) * dt;
            t += dt;
            if (!std::isfinite(x1) || !std::isfinite(x2))
                throw TimestepError("integrate: step instability (non-finite position)");
            if (std::fabs(x1) > bound || std::fabs(x2) > bound) {
                std::ostringstream os;
                os << "integrate: ion escaped beyond " << bound << " m at t = " << t << " s";
                throw EscapeError(os.str());
            }
            if ((k + 1) % record_stride == 0 || k + 1 == nsteps)
                out.push_back({x1, x2, v1, v2, t});
        }
    } else {
        for (std::size_t k = 0; k < nsteps; ++k) {
            auto deriv = [&](double tt, const std::array<double, 4>& y,
                             std::array<double, 4>& dy) {
                double a1, a2;
                ff.accel(tt, y[0], y[1], a1, a2);
                dy = {y[2], y[3], a1, a2};
            };
            std::array<double, 4> y{x1, x2, v1, v2}, k1{}, k2{}, k3{}, k4{}, tmp{};
            deriv(t, y, k1);
            for (int i = 0; i < 4; ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
            deriv(t + 0.5 * dt, tmp, k2);
            for (int i = 0; i < 4; ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
            deriv(t + 0.5 * dt, tmp, k3);
            for (int i = 0; i < 4; ++i) tmp[i] = y[i] + dt * k3[i];
            deriv(t + dt, tmp, k4);
            for (int i = 0; i < 4; ++i)
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            x1 = y[0];
            x2 = y[1];
            v1 = y[2];
            v2 = y[3];
            t += dt;
            if (!std::isfinite(x1) || !std::isfinite(x2))
                throw TimestepError("integrate: step instability (non-finite position)");
            if (std::fabs(x1) > bound || std::fabs(x2) > bound)
                throw EscapeError("integrate: ion escaped the modeled region");
            if ((k + 1) % record_stride == 0 || k + 1 == nsteps)
                out.push_back({x1, x2, v1, v2, t});
        }
    }
    return out;
}

/// Total mechanical energy of a state in a frozen potential.
inline double total_energy(const IonState& s, const AxialPotential& p,
                           const PhysicalConstants& c) {
    return 0.5 * c.mass * (s.v1 * s.v1 + s.v2 * s.v2) +
           c.charge * (p.value(s.x1) + p.value(s.x2)) +
           c.charge * c.coulomb_factor() / (s.x2 - s.x1);
}

namespace detail {

/// Stationary points of the quartic potential, ascending. A double well has
/// three: minimum, barrier, minimum.
inline std::vector<double> stationary_points(const AxialPotential& p, double radius) {
    // 4 beta x^3 + 2 alpha x + gamma = 0
    std::vector<double> roots;
    if (p.beta == 0.0) {
        if (p.alpha != 0.0) roots.push_back(-p.gamma / (2.0 * p.alpha));
        return roots;
    }
    const int n = 2001;
    double prev_x = -radius, prev_f = p.derivative(prev_x);
    for (int i = 1; i < n; ++i) {
        double x = -radius + 2.0 * radius * static_cast<double>(i) / (n - 1);
        double f = p.derivative(x);
        if (prev_f == 0.0) roots.push_back(prev_x);
        else if ((prev_f < 0.0) != (f < 0.0))
            roots.push_back(find_root([&](double y) { return p.derivative(y); }, prev_x, x, 1e-14));
        prev_x = x;
        prev_f = f;
    }
    return roots;
}

} // namespace detail

/// Residual oscillatory energy per ion over the trajectory tail, expressed in
/// quanta of omega_ref, plus the final well classification. The final
/// potential must be a double well and the tail must cover at least
/// tail_periods local oscillation periods.
inline SeparationOutcome extract_excitation(const std::vector<IonState>& traj,
                                            const AxialPotential& final_potential,
                                            const SimConfig& cfg, const PhysicalConstants& c) {
    if (traj.size() < 16) throw std::invalid_argument("extract_excitation: trajectory too short");
    auto stats = detail::stationary_points(final_potential, cfg.escape_factor * cfg.validity_radius);
    if (stats.size() != 3 || !(final_potential.beta > 0.0))
        throw ClassificationError("extract_excitation: final potential is not a double well");
    double x_left = stats[0], x_barrier = stats[1], x_right = stats[2];
    double q = c.charge;

    double omega_well = std::sqrt(
        q * std::min(final_potential.second_derivative(x_left),
                     final_potential.second_derivative(x_right)) / c.mass);
    double span = traj.back().time - traj.front().time;
    double need = cfg.tail_periods * kTwoPi / omega_well;
    if (span < need)
        throw std::invalid_argument("extract_excitation: tail shorter than the averaging window");
    std::size_t first = traj.size();
    while (first > 0 && traj.back().time - traj[first - 1].time < need) --first;
    if (first == traj.size()) first = traj.size() - 1;

    // well membership over the tail; an ion straddling the barrier has no
    // well-defined residual energy
    bool left1 = true, right1 = true, left2 = true, right2 = true;
    for (std::size_t k = first; k < traj.size(); ++k) {
        left1 &= traj[k].x1 < x_barrier;
        right1 &= traj[k].x1 > x_barrier;
        left2 &= traj[k].x2 < x_barrier;
        right2 &= traj[k].x2 > x_barrier;
    }
    if ((!left1 && !right1) || (!left2 && !right2))
        throw ClassificationError("extract_excitation: ion astride the barrier");

    SeparationOutcome out;
    if (left1 && right2) out.classification = Classification::Separated;
    else if (left1 && left2) out.classification = Classification::BothInLeftWell;
    else out.classification = Classification::BothInRightWell;

    // per-ion rest positions: two-ion equilibrium constrained to the observed
    // wells, seeded from the tail means
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t k = first; k < traj.size(); ++k) {
        m1 += traj[k].x1;
        m2 += traj[k].x2;
    }
    auto ntail = static_cast<double>(traj.size() - first);
    m1 /= ntail;
    m2 /= ntail;
    double e1 = m1, e2 = m2;
    {
        double y1 = m1, y2 = m2;
        std::string trace;
        if (detail::newton_two_ion(final_potential, c, 1e-22, 80, y1, y2, &trace) &&
            ((y1 < x_barrier) == left1) && ((y2 < x_barrier) == left2)) {
            e1 = y1;
            e2 = y2;
        } else {
            e1 = left1 ? x_left : x_right;
            e2 = left2 ? x_left : x_right;
        }
    }
    double d = std::max(e2 - e1, 1e-12);
    double cc = 2.0 * q * c.coulomb_factor() / (d * d * d);
    double w1 = std::sqrt((q * final_potential.second_derivative(e1) + cc) / c.mass);
    double w2 = std::sqrt((q * final_potential.second_derivative(e2) + cc) / c.mass);

    KahanSum s1, s2;
    for (std::size_t k = first; k < traj.size(); ++k) {
        const auto& st = traj[k];
        s1.add(0.5 * c.mass * (st.v1 * st.v1 + w1 * w1 * (st.x1 - e1) * (st.x1 - e1)));
        s2.add(0.5 * c.mass * (st.v2 * st.v2 + w2 * w2 * (st.x2 - e2) * (st.x2 - e2)));
    }
    double unit = c.hbar * cfg.omega_ref;
    out.n_coh_1 = s1.value() / ntail / unit;
    out.n_coh_2 = s2.value() / ntail / unit;
    out.well_1 = e1;
    out.well_2 = e2;
    return out;
}

/// Everything needed to rebuild and run one separation end to end.
struct SeparationSetup {
    SegmentBasis basis;
    PhysicalConstants constants;
    MeshSpec mesh_spec;
    double d_final = 900e-6;        // m, trajectory target
    double emitted_duration = 80e-6; // s
    double truncate_head = 0.10;
    double truncate_tail = 0.30;
    RampConfig ramp;
    AwgSpec awg;
    FilterSpec filter;
    int oversample = 16;
    double tail_hold = 25e-6; // s of input hold past the ramp end
    bool quantize_output = true;
    bool filter_output = true;
    SimConfig sim;
};

struct SeparationRun {
    Waveform waveform;          // designed (pre-quantization)
    SeparationOutcome outcome;
    AxialPotential final_potential;
    std::vector<IonState> trajectory;
};

inline TrajectorySpec make_trajectory(const SeparationSetup& s) {
    VoltageSet start{s.mesh_spec.u_c_start, s.mesh_spec.u_s_start, s.mesh_spec.u_o_start, 0.0,
                     0.0};
    AxialPotential p0 = coefficients_from_voltages(s.basis, start);
    EquilibriumOptions opt;
    opt.validity_radius = s.sim.validity_radius;
    double d_i = equilibrium_two_ion(p0, s.constants, opt).distance();
    return TrajectorySpec::from_emitted_duration(d_i, s.d_final, s.emitted_duration,
                                                 s.truncate_head, s.truncate_tail);
}

inline Waveform design_waveform(const SeparationSetup& s) {
    TrajectorySpec spec = make_trajectory(s);
    EquilibriumOptions opt;
    opt.validity_radius = s.sim.validity_radius;
    double d_end = distance_at(spec, spec.effective_duration());
    RampMesh mesh = build_separation_mesh(s.basis, s.constants, s.mesh_spec, d_end, opt);
    return build_waveform(spec, mesh, s.ramp, s.basis, s.constants, opt);
}

inline SeparationRun run_separation(const SeparationSetup& s, std::size_t record_stride = 4) {
    SeparationRun run;
    run.waveform = design_waveform(s);
    Waveform emitted = s.quantize_output ? quantize(run.waveform, s.awg) : run.waveform;
    ContinuousVoltage cv = s.filter_output
                               ? apply_filter(emitted, s.filter, s.oversample, s.tail_hold)
                               : ContinuousVoltage::zero_order_hold(emitted, s.tail_hold);
    EquilibriumOptions opt;
    opt.validity_radius = s.sim.validity_radius;
    AxialPotential p0 = coefficients_from_voltages(s.basis, cv.at(0.0));
    auto eq0 = equilibrium_two_ion(p0, s.constants, opt);
    IonState init{eq0.x1, eq0.x2, 0.0, 0.0, 0.0};
    run.trajectory = integrate(cv, s.basis, init, s.sim, s.constants, record_stride);
    run.final_potential = coefficients_from_voltages(s.basis, cv.final_voltages());
    run.outcome = extract_excitation(run.trajectory, run.final_potential, s.sim, s.constants);
    return run;
}

enum class ScanAxis { Duration, TiltVoltage, CpOffset };

inline const char* to_string(ScanAxis a) {
    switch (a) {
        case ScanAxis::Duration: return "T";
        case ScanAxis::TiltVoltage: return "dU_O";
        default: return "dU_C_cp";
    }
}

struct ExpFit {
    double amplitude = 0.0; // quanta at T = 0
    double tau = 0.0;       // s
    double r_squared = 0.0;
};

struct ScanPoint {
    double value = 0.0;
    std::optional<SeparationOutcome> outcome;
    double n_thermal = 0.0; // heating-budget quanta for this point's ramp
    std::string error;
};

struct ScanResult {
    ScanAxis axis = ScanAxis::Duration;
    std::vector<ScanPoint> points;
    std::optional<ExpFit> fit; // duration scans only
};

/// Heating-budget integral of the rate law over a designed ramp.
inline double thermal_quanta(const Waveform& w, const SegmentBasis& basis,
                             const PhysicalConstants& c, const HeatingModel& heat,
                             const EquilibriumOptions& opt = {}) {
    auto tr = design_trace(w, basis, c, opt);
    std::vector<double> t_ms(tr.size()), rate(tr.size());
    for (std::size_t k = 0; k < tr.size(); ++k) {
        t_ms[k] = tr[k].t * 1e3;
        rate[k] = heat.rate(tr[k].omega);
    }
    return trapezoid(t_ms, rate);
}

struct TotalExcitation {
    double n_thermal = 0.0; // per ion
    double n_tot_1 = 0.0;
    double n_tot_2 = 0.0;
};

/// n_tot = n_coh + integral of the heating rate over the frequency trace
/// (times in seconds, rate law in 1/ms).
inline TotalExcitation total_excitation(const SeparationOutcome& outcome, const HeatingModel& heat,
                                        const std::vector<double>& times,
                                        const std::vector<double>& omegas) {
    std::vector<double> t_ms(times.size()), rate(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        t_ms[k] = times[k] * 1e3;
        rate[k] = heat.rate(omegas[k]);
    }
    TotalExcitation out;
    out.n_thermal = trapezoid(t_ms, rate);
    out.n_tot_1 = outcome.n_coh_1 + out.n_thermal;
    out.n_tot_2 = outcome.n_coh_2 + out.n_thermal;
    return out;
}

/// Runs the full design -> hardware -> integrate -> classify pipeline per grid
/// point. Point failures are recorded and the scan continues; points are
/// independent, so they may run on several threads with results assembled in
/// grid order. Duration scans fit mean n_coh to A exp(-T/tau) over fit_range
/// (grid subrange, inclusive).
inline ScanResult scan(ScanAxis axis, const std::vector<double>& grid,
                       const SeparationSetup& base, const HeatingModel& heat,
                       std::optional<std::pair<double, double>> fit_range = std::nullopt,
                       int threads = 1) {
    if (grid.empty()) throw UsageError("scan: empty grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw UsageError("scan: grid must be strictly increasing");

    ScanResult res;
    res.axis = axis;
    res.points.resize(grid.size());
    auto run_point = [&](std::size_t i) {
        SeparationSetup s = base;
        switch (axis) {
            case ScanAxis::Duration: s.emitted_duration = grid[i]; break;
            case ScanAxis::TiltVoltage: s.ramp.du_o = grid[i]; break;
            case ScanAxis::CpOffset: s.ramp.du_c_cp = grid[i]; break;
        }
        ScanPoint& pt = res.points[i];
        pt.value = grid[i];
        try {
            SeparationRun run = run_separation(s);
            pt.outcome = run.outcome;
            pt.n_thermal = thermal_quanta(run.waveform, s.basis, s.constants, heat,
                                          {s.sim.validity_radius, 1e-25, 120});
        } catch (const std::exception& e) {
            pt.error = e.what();
        }
    };
    int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(grid.size())));
    if (nthreads == 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) run_point(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < nthreads; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < grid.size(); i = next.fetch_add(1))
                    run_point(i);
            });
        for (auto& th : pool) th.join();
    }

    if (axis == ScanAxis::Duration) {
        std::vector<double> ts, ys;
        for (const auto& pt : res.points) {
            if (!pt.outcome) continue;
            if (fit_range && (pt.value < fit_range->first || pt.value > fit_range->second))
                continue;
            double n = 0.5 * (pt.outcome->n_coh_1 + pt.outcome->n_coh_2);
            if (n > 0.0) {
                ts.push_back(pt.value);
                ys.push_back(std::log(n));
            }
        }
        if (ts.size() >= 3) {
            // least squares on log n = log A - T / tau
            double st = mean_of(ts), sy = mean_of(ys);
            double sxx = 0.0, sxy = 0.0, syy = 0.0;
            for (std::size_t i = 0; i < ts.size(); ++i) {
                sxx += (ts[i] - st) * (ts[i] - st);
                sxy += (ts[i] - st) * (ys[i] - sy);
                syy += (ys[i] - sy) * (ys[i] - sy);
            }
            double slope = sxy / sxx;
            ExpFit fit;
            fit.tau = -1.0 / slope;
            fit.amplitude = std::exp(sy - slope * st);
            fit.r_squared = (syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
            res.fit = fit;
        }
    }
    return res;
}

} // namespace ionsep
