// Axial electrostatic potential of the segmented trap: voltage-to-coefficient
// conversion, single/two-ion equilibria, local and normal-mode frequencies.
//
// The axial potential is modeled as V(x) = beta x^4 + alpha x^2 + gamma x
// around the center segment, with the coefficients linear in the applied
// segment voltages plus stray-field offsets.
#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>

#include "ionsep/constants.hpp"
#include "ionsep/errors.hpp"
#include "ionsep/numeric.hpp"

namespace ionsep {

/// Calibrated per-segment expansion coefficients. The alpha_i are m^-2 per
/// applied volt, beta_i m^-4 per volt, gamma_i m^-1 per volt; the primed
/// offsets absorb stray fields and carry the full potential units.
struct SegmentBasis {
    double alpha_c = 0.0, alpha_s = 0.0, alpha_o = 0.0; // 1/m^2 per V
    double beta_c = 0.0, beta_s = 0.0, beta_o = 0.0;    // 1/m^4 per V
    double gamma_s = 0.0, gamma_o = 0.0;                // 1/m per V
    double alpha_prime = 0.0;                           // V/m^2
    double beta_prime = 0.0;                            // V/m^4
    double gamma_prime = 0.0;                           // V/m

    // optional 1-sigma uncertainties, zero when not calibrated
    double sigma_alpha_c = 0.0, sigma_alpha_s = 0.0, sigma_alpha_o = 0.0;
    double sigma_beta_c = 0.0, sigma_beta_s = 0.0, sigma_beta_o = 0.0;
    double sigma_gamma_s = 0.0, sigma_gamma_o = 0.0;
    double sigma_alpha_prime = 0.0, sigma_beta_prime = 0.0, sigma_gamma_prime = 0.0;

    void validate() const {
        for (double v : {alpha_c, alpha_s, alpha_o, beta_c, beta_s, beta_o, gamma_s,
                         gamma_o, alpha_prime, beta_prime, gamma_prime})
            if (!std::isfinite(v))
                throw std::invalid_argument("SegmentBasis: non-finite coefficient");
        for (double s : {sigma_alpha_c, sigma_alpha_s, sigma_alpha_o, sigma_beta_c,
                         sigma_beta_s, sigma_beta_o, sigma_gamma_s, sigma_gamma_o,
                         sigma_alpha_prime, sigma_beta_prime, sigma_gamma_prime})
            if (!(s >= 0.0))
                throw std::invalid_argument("SegmentBasis: negative uncertainty");
    }
};

/// One applied voltage configuration. u_* are common-mode voltages of the
/// center / split / outer segment pairs, du_* differential voltages within
/// the split and outer pairs.
struct VoltageSet {
    double u_c = 0.0;
    double u_s = 0.0;
    double u_o = 0.0;
    double du_s = 0.0;
    double du_o = 0.0;
};

/// Instantaneous Taylor coefficients of the axial potential.
struct AxialPotential {
    double alpha = 0.0; // V/m^2
    double beta = 0.0;  // V/m^4
    double gamma = 0.0; // V/m

    double value(double x) const { return ((beta * x * x + alpha) * x + gamma) * x; }
    double derivative(double x) const { return (4.0 * beta * x * x + 2.0 * alpha) * x + gamma; }
    double second_derivative(double x) const { return 12.0 * beta * x * x + 2.0 * alpha; }
};

struct PotentialSample {
    double value;             // V
    double derivative;        // V/m
    double second_derivative; // V/m^2
};

/// Static two-ion configuration with the residual force of the solve.
struct EquilibriumConfig {
    double x1 = 0.0; // m, x1 < x2
    double x2 = 0.0; // m
    double residual_force = 0.0; // N, max over both ions

    double distance() const { return x2 - x1; }
};

struct ModeFrequencies {
    double omega_com = 0.0; // rad/s
    double omega_str = 0.0; // rad/s
};

/// Solver knobs for the equilibrium search.
struct EquilibriumOptions {
    double validity_radius = 200e-6; // m, one segment width
    double force_tolerance = 1e-25;  // N
    int max_iterations = 120;
};

inline constexpr double kDefaultValidityRadius = 200e-6; // m

inline AxialPotential coefficients_from_voltages(const SegmentBasis& b, const VoltageSet& v) {
    AxialPotential p;
    p.alpha = v.u_c * b.alpha_c + v.u_s * b.alpha_s + v.u_o * b.alpha_o + b.alpha_prime;
    p.beta = v.u_c * b.beta_c + v.u_s * b.beta_s + v.u_o * b.beta_o + b.beta_prime;
    p.gamma = v.du_s * b.gamma_s + v.du_o * b.gamma_o + b.gamma_prime;
    return p;
}

/// Potential and exact derivatives at x. The quartic expansion is only
/// trusted within one segment width of the expansion center.
inline PotentialSample evaluate_potential(const AxialPotential& p, double x,
                                          double validity_radius = kDefaultValidityRadius) {
    if (std::fabs(x) > validity_radius) {
        std::ostringstream os;
        os << "evaluate_potential: |x| = " << std::fabs(x)
           << " m exceeds validity radius " << validity_radius << " m";
        throw RangeError(os.str());
    }
    return {p.value(x), p.derivative(x), p.second_derivative(x)};
}

/// omega = sqrt(2 q alpha / m) for a single ion in the harmonic term.
inline double single_well_frequency(double alpha, const PhysicalConstants& c) {
    if (!(alpha > 0.0))
        throw NonConfiningError("single_well_frequency: alpha must be positive");
    return std::sqrt(2.0 * c.charge * alpha / c.mass);
}

/// Local trap frequency at ion distance d: omega^2 = (q/m)(3 beta d^2 + 2 alpha).
inline double local_frequency(const AxialPotential& p, double d, const PhysicalConstants& c) {
    double curv = 3.0 * p.beta * d * d + 2.0 * p.alpha;
    if (!(curv > 0.0))
        throw NonConfiningError("local_frequency: 3 beta d^2 + 2 alpha must be positive");
    return std::sqrt(c.charge * curv / c.mass);
}

namespace detail {

/// Positive root of (beta/2) d^5 + alpha d^3 = kappa near the harmonic
/// closed-form seed. For beta > 0 the root is unique; for beta < 0 the root
/// closest to the harmonic seed (below the turning point) is returned.
inline double symmetric_distance(double alpha, double beta, double kappa,
                                 double validity_radius) {
    auto f = [&](double d) { return (0.5 * beta * d * d + alpha) * d * d * d - kappa; };
    double dmax = 2.0 * validity_radius;
    double lo = 1e-12, hi = dmax;
    if (beta > 0.0) {
        // f is monotone increasing past any alpha<0 dip; expand hi until positive
        while (f(hi) < 0.0) {
            hi *= 2.0;
            if (hi > 1.0) throw NoEquilibriumError("symmetric_distance: no root found");
        }
    } else if (beta < 0.0) {
        // confining only below the turning point d* = sqrt(-6 alpha / (5 beta))
        if (!(alpha > 0.0))
            throw NoEquilibriumError("symmetric_distance: unbounded potential (alpha <= 0, beta < 0)");
        double dstar = std::sqrt(6.0 * alpha / (-5.0 * beta));
        hi = dstar;
        if (f(hi) < 0.0)
            throw NoEquilibriumError("symmetric_distance: Coulomb repulsion exceeds barrier");
    } else {
        if (!(alpha > 0.0))
            throw NoEquilibriumError("symmetric_distance: flat potential");
        return std::cbrt(kappa / alpha);
    }
    if (f(lo) > 0.0) throw NoEquilibriumError("symmetric_distance: root below minimum scale");
    return find_root(f, lo, hi, 1e-15);
}

struct Force2 {
    double f1, f2;
};

inline Force2 two_ion_force(const AxialPotential& p, double x1, double x2,
                            const PhysicalConstants& c) {
    double d = x2 - x1;
    double coul = c.charge * c.coulomb_factor() / (d * d);
    return {-c.charge * p.derivative(x1) - coul, -c.charge * p.derivative(x2) + coul};
}

/// Damped Newton on the two-ion force system from a given seed. Returns true
/// on convergence to |F|_inf < tol with x1 < x2.
inline bool newton_two_ion(const AxialPotential& p, const PhysicalConstants& c, double tol,
                           int max_iter, double& x1, double& x2, std::string* trace) {
    double q = c.charge;
    double kappa = c.coulomb_factor();
    for (int it = 0; it < max_iter; ++it) {
        if (!(x2 > x1)) return false;
        Force2 f = two_ion_force(p, x1, x2, c);
        double fn = std::max(std::fabs(f.f1), std::fabs(f.f2));
        if (trace) {
            std::ostringstream os;
            os << "  it " << it << ": x1=" << x1 << " x2=" << x2 << " |F|=" << fn << "\n";
            *trace += os.str();
        }
        if (fn < tol) return true;
        double d = x2 - x1;
        double cc = 2.0 * q * kappa / (d * d * d);
        // J = dF/dx
        double j11 = -q * p.second_derivative(x1) - cc;
        double j22 = -q * p.second_derivative(x2) - cc;
        double j12 = cc;
        double det = j11 * j22 - j12 * j12;
        if (det == 0.0 || !std::isfinite(det)) return false;
        double dx1 = -(j22 * f.f1 - j12 * f.f2) / det;
        double dx2 = -(-j12 * f.f1 + j11 * f.f2) / det;
        // backtrack until the force norm decreases and the ordering survives
        double lam = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            double y1 = x1 + lam * dx1;
            double y2 = x2 + lam * dx2;
            if (y2 > y1) {
                Force2 g = two_ion_force(p, y1, y2, c);
                double gn = std::max(std::fabs(g.f1), std::fabs(g.f2));
                if (gn < fn || gn < tol) {
                    x1 = y1;
                    x2 = y2;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if (!accepted) return false;
    }
    return false;
}

inline double total_energy(const AxialPotential& p, const PhysicalConstants& c, double x1,
                           double x2) {
    return c.charge * (p.value(x1) + p.value(x2)) +
           c.charge * c.coulomb_factor() / (x2 - x1);
}

} // namespace detail

/// Static positions of two ions in the potential, Coulomb repulsion included.
/// For gamma = 0 the symmetric quintic is solved directly; otherwise a damped
/// Newton iteration is run from several seeds and the lowest-energy converged
/// configuration is returned.
inline EquilibriumConfig equilibrium_two_ion(const AxialPotential& p, const PhysicalConstants& c,
                                             const EquilibriumOptions& opt = {}) {
    double kappa = c.coulomb_factor();
    std::string trace;

    if (p.gamma == 0.0) {
        double d = detail::symmetric_distance(p.alpha, p.beta, kappa, opt.validity_radius);
        double x1 = -0.5 * d, x2 = 0.5 * d;
        // polish with Newton to drive the residual to tolerance
        if (!detail::newton_two_ion(p, c, opt.force_tolerance, opt.max_iterations, x1, x2,
                                    &trace))
            throw ConvergenceError("equilibrium_two_ion: Newton polish failed\n" + trace);
        detail::Force2 f = detail::two_ion_force(p, x1, x2, c);
        double res = std::max(std::fabs(f.f1), std::fabs(f.f2));
        if (std::max(std::fabs(x1), std::fabs(x2)) > opt.validity_radius)
            throw NoEquilibriumError("equilibrium_two_ion: root outside validity radius");
        return {x1, x2, res};
    }

    // candidate seeds: tilt-shifted symmetric solution plus pairs stacked in
    // each local well of the bare potential
    std::array<std::pair<double, double>, 4> seeds{};
    int nseeds = 0;
    AxialPotential p0 = p;
    p0.gamma = 0.0;
    try {
        double d0 = detail::symmetric_distance(p0.alpha, p0.beta, kappa, opt.validity_radius);
        double stiff = 3.0 * p.beta * d0 * d0 + 2.0 * p.alpha;
        double shift = (stiff != 0.0) ? -p.gamma / stiff : 0.0;
        seeds[nseeds++] = {shift - 0.5 * d0, shift + 0.5 * d0};
    } catch (const NumericError&) {
        // no symmetric solution; well seeds below may still work
    }
    // stationary points of V' = 4 beta x^3 + 2 alpha x + gamma: scan for local
    // minima on a coarse grid, then refine
    if (p.beta != 0.0) {
        const int ngrid = 4001;
        double prev_slope = 0.0;
        for (int i = 0; i < ngrid && nseeds < 4; ++i) {
            double x = -opt.validity_radius +
                       2.0 * opt.validity_radius * static_cast<double>(i) / (ngrid - 1);
            double slope = p.derivative(x);
            if (i > 0 && prev_slope < 0.0 && slope >= 0.0) {
                double xm = find_root([&](double y) { return p.derivative(y); },
                                      x - 2.0 * opt.validity_radius / (ngrid - 1), x, 1e-14);
                if (p.second_derivative(xm) > 0.0) {
                    double s = std::cbrt(2.0 * kappa / p.second_derivative(xm));
                    seeds[nseeds++] = {xm - 0.5 * s, xm + 0.5 * s};
                }
            }
            prev_slope = slope;
        }
    }
    if (nseeds == 0)
        throw NoEquilibriumError("equilibrium_two_ion: no candidate seed (non-confining potential)");

    bool found = false;
    double best_e = 0.0;
    EquilibriumConfig best{};
    for (int i = 0; i < nseeds; ++i) {
        double x1 = seeds[i].first, x2 = seeds[i].second;
        std::string t;
        if (!detail::newton_two_ion(p, c, opt.force_tolerance, opt.max_iterations, x1, x2, &t)) {
            trace += "seed " + std::to_string(i) + " failed:\n" + t;
            continue;
        }
        if (std::max(std::fabs(x1), std::fabs(x2)) > opt.validity_radius) continue;
        double e = detail::total_energy(p, c, x1, x2);
        if (!found || e < best_e) {
            detail::Force2 f = detail::two_ion_force(p, x1, x2, c);
            best = {x1, x2, std::max(std::fabs(f.f1), std::fabs(f.f2))};
            best_e = e;
            found = true;
        }
    }
    if (!found) {
        if (trace.empty())
            throw NoEquilibriumError("equilibrium_two_ion: no equilibrium inside validity radius");
        throw ConvergenceError("equilibrium_two_ion: Newton failed from all seeds\n" + trace);
    }
    return best;
}

/// Axial normal modes from the 2x2 Hessian of the total potential energy at
/// the equilibrium. For a symmetric crystal omega_str^2 - omega_com^2
/// = 4 q kappa / (m d^3) exactly.
inline ModeFrequencies normal_modes(const AxialPotential& p, const EquilibriumConfig& eq,
                                    const PhysicalConstants& c) {
    double q = c.charge;
    double d = eq.distance();
    double cc = 2.0 * q * c.coulomb_factor() / (d * d * d);
    double h11 = q * p.second_derivative(eq.x1) + cc;
    double h22 = q * p.second_derivative(eq.x2) + cc;
    double h12 = -cc;
    double tr = h11 + h22;
    double disc = std::sqrt((h11 - h22) * (h11 - h22) + 4.0 * h12 * h12);
    double lam_hi = 0.5 * (tr + disc);
    double lam_lo = (lam_hi != 0.0) ? (h11 * h22 - h12 * h12) / lam_hi : 0.5 * (tr - disc);
    if (!(lam_lo > 0.0))
        throw UnstableConfigurationError("normal_modes: negative Hessian eigenvalue");
    return {std::sqrt(lam_lo / c.mass), std::sqrt(lam_hi / c.mass)};
}

/// Harmonic two-ion distance d = (kappa / alpha)^(1/3) expressed through the
/// center-of-mass frequency: d = (2 q kappa / (m omega^2))^(1/3).
inline double harmonic_distance_from_frequency(double omega, const PhysicalConstants& c) {
    if (!(omega > 0.0)) throw NonConfiningError("harmonic_distance_from_frequency: omega <= 0");
    return std::cbrt(2.0 * c.charge * c.coulomb_factor() / (c.mass * omega * omega));
}

/// Purely quartic equilibrium distance d = (2 kappa / beta)^(1/5).
inline double quartic_distance(double beta, const PhysicalConstants& c) {
    if (!(beta > 0.0)) throw NonConfiningError("quartic_distance: beta <= 0");
    return std::pow(2.0 * c.coulomb_factor() / beta, 0.2);
}

} // namespace ionsep
