// Separation voltage-ramp design. The chain per output sample is
//   t -> d(t) -> alpha(d) -> {U_C, U_S, U_O}(alpha)
// with d(t) the smooth bifurcation trajectory, alpha(d) obtained by inverting
// the two-ion equilibrium, and U_S/U_O linearly interpolated in alpha between
// mesh anchors while U_C follows from the alpha constraint.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <vector>

#include "ionsep/constants.hpp"
#include "ionsep/errors.hpp"
#include "ionsep/numeric.hpp"
#include "ionsep/trap_model.hpp"

namespace ionsep {

/// Distance trajectory d(t) = d_i + (d_f - d_i) (t/T)^2 sin^2(pi t / 2T) with
/// head/tail truncation. total_time is the untruncated clock T; the emitted
/// ramp covers only [head*T, (1-tail)*T], remapped to [0, effective_duration].
struct TrajectorySpec {
    double d_initial = 0.0;   // m
    double d_final = 0.0;     // m
    double total_time = 0.0;  // s, untruncated T
    double truncate_head = 0.10;
    double truncate_tail = 0.30;

    double effective_duration() const {
        return (1.0 - truncate_head - truncate_tail) * total_time;
    }

    void validate() const {
        if (!(d_initial > 0.0) || !(d_final > d_initial))
            throw std::invalid_argument("TrajectorySpec: need 0 < d_i < d_f");
        if (!(total_time > 0.0)) throw std::invalid_argument("TrajectorySpec: T <= 0");
        if (!(truncate_head >= 0.0 && truncate_head < 0.5) ||
            !(truncate_tail >= 0.0 && truncate_tail < 0.5) ||
            !(truncate_head + truncate_tail < 1.0))
            throw std::invalid_argument("TrajectorySpec: truncation fractions out of range");
    }

    /// Spec with the emitted (post-truncation) duration given directly.
    static TrajectorySpec from_emitted_duration(double d_i, double d_f, double emitted,
                                                double head = 0.10, double tail = 0.30) {
        TrajectorySpec s;
        s.d_initial = d_i;
        s.d_final = d_f;
        s.truncate_head = head;
        s.truncate_tail = tail;
        s.total_time = emitted / (1.0 - head - tail);
        s.validate();
        return s;
    }
};

/// Eq.-of-design distance on the untruncated clock, t in [0, T].
inline double trajectory_distance(double d_i, double d_f, double total_time, double t) {
    double u = t / total_time;
    double s = std::sin(0.5 * kPi * u);
    return d_i + (d_f - d_i) * u * u * s * s;
}

/// Distance at emitted time t in [0, effective_duration].
inline double distance_at(const TrajectorySpec& spec, double t) {
    double teff = spec.effective_duration();
    double slack = 1e-12 * spec.total_time;
    if (t < -slack || t > teff + slack)
        throw RangeError("distance_at: t outside the emitted ramp");
    t = std::clamp(t, 0.0, teff);
    return trajectory_distance(spec.d_initial, spec.d_final, spec.total_time,
                               spec.truncate_head * spec.total_time + t);
}

struct RampAnchor {
    double alpha = 0.0; // V/m^2
    double u_s = 0.0;   // V
    double u_o = 0.0;   // V
};

/// Ordered interpolation anchors (alpha strictly decreasing) including the
/// start, the critical point at alpha = 0, and the end of the ramp. Extra
/// anchors may hold U_O constant around the critical point.
struct RampMesh {
    std::vector<RampAnchor> anchors;

    void validate() const {
        if (anchors.size() < 3)
            throw std::invalid_argument("RampMesh: need at least start, CP and end anchors");
        bool has_cp = false;
        for (std::size_t i = 0; i < anchors.size(); ++i) {
            if (anchors[i].alpha == 0.0) has_cp = true;
            if (i > 0 && !(anchors[i].alpha < anchors[i - 1].alpha))
                throw std::invalid_argument("RampMesh: anchor alphas must strictly decrease");
        }
        if (!has_cp) throw std::invalid_argument("RampMesh: missing CP anchor (alpha = 0)");
    }

    double alpha_start() const { return anchors.front().alpha; }
    double alpha_end() const { return anchors.back().alpha; }

    const RampAnchor& cp_anchor() const {
        for (const auto& a : anchors)
            if (a.alpha == 0.0) return a;
        throw std::logic_error("RampMesh: missing CP anchor");
    }

    /// Anchor alphas adjacent to the CP (above, below).
    std::pair<double, double> cp_neighbors() const {
        double above = anchors.front().alpha, below = anchors.back().alpha;
        for (std::size_t i = 0; i < anchors.size(); ++i) {
            if (anchors[i].alpha == 0.0) {
                above = anchors[i - 1].alpha;
                below = anchors[i + 1].alpha;
            }
        }
        return {above, below};
    }
};

/// Hardware-facing ramp options: critical-point offset on segment C, constant
/// tilt-compensation differential on the outer pair, output sample rate.
struct RampConfig {
    double du_c_cp = 0.0;       // V, applied in a triangular window around the CP
    double du_o = 0.0;          // V, constant differential outer voltage
    double sample_rate = 2.5e6; // samples/s
    double awg_range = 10.0;    // V, |U| limit checked at build time
};

/// Time-sampled per-segment voltage sequences plus design annotations.
struct Waveform {
    double dt = 0.0; // s
    std::vector<double> u_c, u_s, u_o, du_o;
    std::size_t cp_index = 0;
    TrajectorySpec trajectory;
    RampConfig config;
    bool reduced_accuracy_past_cp = true;

    std::size_t size() const { return u_c.size(); }
    double duration() const { return dt * static_cast<double>(size()); }
    double sample_rate() const { return 1.0 / dt; }

    VoltageSet sample(std::size_t k) const {
        return {u_c[k], u_s[k], u_o[k], 0.0, du_o[k]};
    }
};

/// U_S, U_O at a given alpha by linear interpolation between anchors; U_C from
/// the alpha constraint U_C = (alpha - alpha' - alpha_O U_O - alpha_S U_S) / alpha_C.
inline VoltageSet voltages_from_alpha(double alpha, const RampMesh& mesh,
                                      const SegmentBasis& basis) {
    const auto& a = mesh.anchors;
    double slack = 1e-9 * (std::fabs(mesh.alpha_start()) + std::fabs(mesh.alpha_end()));
    if (alpha > mesh.alpha_start() + slack || alpha < mesh.alpha_end() - slack)
        throw RangeError("voltages_from_alpha: alpha outside mesh range");
    alpha = std::clamp(alpha, mesh.alpha_end(), mesh.alpha_start());
    std::size_t hi = 1;
    while (hi + 1 < a.size() && alpha < a[hi].alpha) ++hi;
    const auto& p0 = a[hi - 1];
    const auto& p1 = a[hi];
    double f = (p0.alpha - alpha) / (p0.alpha - p1.alpha);
    VoltageSet v;
    v.u_s = p0.u_s + f * (p1.u_s - p0.u_s);
    v.u_o = p0.u_o + f * (p1.u_o - p0.u_o);
    if (basis.alpha_c == 0.0)
        throw NumericError("voltages_from_alpha: alpha_c coefficient is zero");
    v.u_c = (alpha - basis.alpha_prime - basis.alpha_o * v.u_o - basis.alpha_s * v.u_s) /
            basis.alpha_c;
    return v;
}

/// Equilibrium ion distance at a given mesh alpha.
inline double mesh_equilibrium_distance(double alpha, const RampMesh& mesh,
                                        const SegmentBasis& basis, const PhysicalConstants& c,
                                        const EquilibriumOptions& opt = {}) {
    AxialPotential p = coefficients_from_voltages(basis, voltages_from_alpha(alpha, mesh, basis));
    return equilibrium_two_ion(p, c, opt).distance();
}

/// Ion distance at the mesh's critical-point anchor.
inline double mesh_cp_distance(const RampMesh& mesh, const SegmentBasis& basis,
                               const PhysicalConstants& c, const EquilibriumOptions& opt = {}) {
    return mesh_equilibrium_distance(0.0, mesh, basis, c, opt);
}

/// Inverts the equilibrium distance to the harmonic coefficient: finds alpha
/// in the mesh range whose self-consistent (alpha, beta(alpha)) equilibrium
/// has the requested distance. The distance is monotone decreasing in alpha.
inline double alpha_from_distance(double d, const RampMesh& mesh, const SegmentBasis& basis,
                                  const PhysicalConstants& c, const EquilibriumOptions& opt = {},
                                  std::optional<double> bracket_hi = std::nullopt) {
    double lo = mesh.alpha_end();
    double hi = bracket_hi.value_or(mesh.alpha_start());
    double d_hi = mesh_equilibrium_distance(hi, mesh, basis, c, opt);
    double d_lo = mesh_equilibrium_distance(lo, mesh, basis, c, opt);
    double tol = 1e-12;
    if (d < d_hi * (1.0 - tol) || d > d_lo * (1.0 + tol))
        throw RangeError("alpha_from_distance: distance unreachable within mesh alpha range");
    auto f = [&](double alpha) { return mesh_equilibrium_distance(alpha, mesh, basis, c, opt) - d; };
    return find_root(f, lo, hi, 1e-13);
}

/// Mesh construction knobs. Start voltages pin alpha_start; the end anchor's
/// alpha is solved so the equilibrium distance there matches the emitted
/// trajectory endpoint. Plateau fractions insert extra anchors that hold U_O
/// at its CP value on either side (0 disables).
struct MeshSpec {
    double u_c_start = -7.0;
    double u_s_start = 0.0;
    double u_o_start = 0.0;
    double u_s_cp = -3.0;
    double u_o_cp = 9.0;
    double u_s_end = -3.0;
    double u_o_end = -9.0;
    double pre_cp_plateau = 0.5;  // anchor at alpha = frac * alpha_start
    double post_cp_plateau = 0.3; // anchor at alpha = frac * alpha_end
};

inline RampMesh build_separation_mesh(const SegmentBasis& basis, const PhysicalConstants& c,
                                      const MeshSpec& ms, double d_end,
                                      const EquilibriumOptions& opt = {}) {
    VoltageSet start{ms.u_c_start, ms.u_s_start, ms.u_o_start, 0.0, 0.0};
    double alpha_start = coefficients_from_voltages(basis, start).alpha;
    if (!(alpha_start > 0.0))
        throw NonConfiningError("build_separation_mesh: start voltages are not confining");

    // end-anchor alpha: solve d_eq(alpha) = d_end with the end-anchor U_S/U_O
    auto end_distance = [&](double alpha) {
        VoltageSet v;
        v.u_s = ms.u_s_end;
        v.u_o = ms.u_o_end;
        v.u_c = (alpha - basis.alpha_prime - basis.alpha_o * v.u_o - basis.alpha_s * v.u_s) /
                basis.alpha_c;
        AxialPotential p = coefficients_from_voltages(basis, v);
        return equilibrium_two_ion(p, c, opt).distance();
    };
    double hi = -1.0;
    while (end_distance(hi) > d_end) hi *= 0.5; // d_end below the CP distance is not expected
    double lo = hi * 2.0;
    for (int k = 0; k < 60 && end_distance(lo) < d_end; ++k) lo *= 2.0;
    if (end_distance(lo) < d_end)
        throw RangeError("build_separation_mesh: end distance unreachable");
    double alpha_end = find_root([&](double a) { return end_distance(a) - d_end; }, lo, hi, 1e-13);

    RampMesh mesh;
    mesh.anchors.push_back({alpha_start, ms.u_s_start, ms.u_o_start});
    if (ms.pre_cp_plateau > 0.0 && ms.pre_cp_plateau < 1.0) {
        double f = ms.pre_cp_plateau;
        double us = ms.u_s_start + (ms.u_s_cp - ms.u_s_start) * (1.0 - f);
        mesh.anchors.push_back({f * alpha_start, us, ms.u_o_cp});
    }
    mesh.anchors.push_back({0.0, ms.u_s_cp, ms.u_o_cp});
    if (ms.post_cp_plateau > 0.0 && ms.post_cp_plateau < 1.0) {
        double f = ms.post_cp_plateau;
        double us = ms.u_s_cp + (ms.u_s_end - ms.u_s_cp) * f;
        mesh.anchors.push_back({f * alpha_end, us, ms.u_o_cp});
    }
    mesh.anchors.push_back({alpha_end, ms.u_s_end, ms.u_o_end});
    mesh.validate();
    return mesh;
}

/// Samples the t -> d -> alpha -> voltages chain at the configured rate, adds
/// the triangular CP offset on U_C and the constant differential O voltage,
/// and annotates the sample nearest the alpha = 0 crossing.
inline Waveform build_waveform(const TrajectorySpec& spec, const RampMesh& mesh,
                               const RampConfig& cfg, const SegmentBasis& basis,
                               const PhysicalConstants& c, const EquilibriumOptions& opt = {}) {
    spec.validate();
    mesh.validate();
    double teff = spec.effective_duration();
    auto n = static_cast<std::size_t>(std::llround(teff * cfg.sample_rate));
    if (n < 2) throw UsageError("build_waveform: fewer than 2 output samples");

    Waveform w;
    w.dt = 1.0 / cfg.sample_rate;
    w.trajectory = spec;
    w.config = cfg;
    w.u_c.reserve(n);
    w.u_s.reserve(n);
    w.u_o.reserve(n);
    w.du_o.assign(n, cfg.du_o);

    std::vector<double> alphas(n);
    double bracket = mesh.alpha_start();
    for (std::size_t k = 0; k < n; ++k) {
        double t = static_cast<double>(k) * w.dt;
        double d = distance_at(spec, std::min(t, teff));
        double a = alpha_from_distance(d, mesh, basis, c, opt, bracket);
        alphas[k] = a;
        bracket = std::min(a + 1e-4 * std::fabs(mesh.alpha_start() - mesh.alpha_end()),
                           mesh.alpha_start());
        VoltageSet v = voltages_from_alpha(a, mesh, basis);
        w.u_c.push_back(v.u_c);
        w.u_s.push_back(v.u_s);
        w.u_o.push_back(v.u_o);
    }

    // CP sample: nearest to the alpha = 0 crossing
    std::size_t cp = 0;
    double best = std::fabs(alphas[0]);
    for (std::size_t k = 1; k < n; ++k) {
        if (std::fabs(alphas[k]) < best) {
            best = std::fabs(alphas[k]);
            cp = k;
        }
    }
    w.cp_index = cp;

    if (cfg.du_c_cp != 0.0) {
        auto [above, below] = mesh.cp_neighbors();
        // window feet: last sample at/above the upper neighbor, first at/below
        // the lower neighbor
        std::size_t k_lo = 0, k_hi = n - 1;
        for (std::size_t k = 0; k < cp; ++k)
            if (alphas[k] >= above) k_lo = k;
        for (std::size_t k = n; k-- > cp + 1;)
            if (alphas[k] <= below) k_hi = k;
        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            double wgt;
            if (k < cp)
                wgt = static_cast<double>(k - k_lo) / static_cast<double>(cp - k_lo);
            else if (k > cp)
                wgt = static_cast<double>(k_hi - k) / static_cast<double>(k_hi - cp);
            else
                wgt = 1.0;
            w.u_c[k] += cfg.du_c_cp * wgt;
        }
    }

    std::ostringstream bad;
    int nbad = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double m = std::max({std::fabs(w.u_c[k]), std::fabs(w.u_s[k]),
                             std::fabs(w.u_o[k]) + 0.5 * std::fabs(w.du_o[k])});
        if (m > cfg.awg_range) {
            if (nbad < 8) bad << (nbad ? ", " : "") << k;
            ++nbad;
        }
    }
    if (nbad > 0)
        throw SaturationError("build_waveform: " + std::to_string(nbad) +
                              " samples exceed the AWG range (indices " + bad.str() + ")");
    return w;
}

inline Waveform reverse_waveform(const Waveform& w) {
    Waveform r = w;
    std::reverse(r.u_c.begin(), r.u_c.end());
    std::reverse(r.u_s.begin(), r.u_s.end());
    std::reverse(r.u_o.begin(), r.u_o.end());
    std::reverse(r.du_o.begin(), r.du_o.end());
    r.cp_index = w.size() - 1 - w.cp_index;
    return r;
}

/// Per-sample design diagnostics recomputed from the emitted voltages.
struct DesignTracePoint {
    double t = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double distance = 0.0;
    double omega = 0.0; // local frequency at the instantaneous equilibrium
};

inline std::vector<DesignTracePoint> design_trace(const Waveform& w, const SegmentBasis& basis,
                                                  const PhysicalConstants& c,
                                                  const EquilibriumOptions& opt = {}) {
    std::vector<DesignTracePoint> out(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
        AxialPotential p = coefficients_from_voltages(basis, w.sample(k));
        auto eq = equilibrium_two_ion(p, c, opt);
        out[k] = {static_cast<double>(k) * w.dt, p.alpha, p.beta, eq.distance(),
                  local_frequency(p, eq.distance(), c)};
    }
    return out;
}

} // namespace ionsep
