// Calibration regressions: segment alpha coefficients from frequency-vs-voltage
// scans, beta coefficients from ion distances at the critical point, the
// anomalous-heating power law, and the imaging magnification.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ionsep/constants.hpp"
#include "ionsep/errors.hpp"
#include "ionsep/trap_model.hpp"

namespace ionsep {

enum class Segment { C, S, O };

inline char segment_letter(Segment s) {
    switch (s) {
        case Segment::C: return 'C';
        case Segment::S: return 'S';
        default: return 'O';
    }
}

inline Segment segment_from_letter(char ch) {
    switch (ch) {
        case 'C': case 'c': return Segment::C;
        case 'S': case 's': return Segment::S;
        case 'O': case 'o': return Segment::O;
        default: throw UsageError(std::string("unknown segment id: ") + ch);
    }
}

struct FrequencyScanPoint {
    double voltage = 0.0;     // V applied to the varied segment
    double omega = 0.0;       // rad/s measured axial frequency
    double sigma_omega = 0.0; // rad/s
};

/// Trap-frequency scan over one segment's voltage with the others held at a
/// fixed background configuration.
struct FrequencyScan {
    Segment segment = Segment::C;
    std::vector<FrequencyScanPoint> points;
    VoltageSet background; // the varied segment's entry here is ignored
};

struct DistanceScanPoint {
    VoltageSet voltages;  // configuration at the critical point
    double distance = 0.0; // m
    double sigma = 0.0;    // m
};

struct FitResult {
    double value = 0.0;
    double sigma = 0.0;
};

struct AlphaFit {
    FitResult alpha_c, alpha_s, alpha_o, alpha_prime;
    double rss = 0.0; // weighted residual sum of squares
    int dof = 0;
};

struct BetaFit {
    FitResult beta_c, beta_s, beta_prime;
    double rss = 0.0;
    int dof = 0;
};

/// Anomalous heating rate law: rate(omega) = prefactor * (omega / 2pi MHz)^-exponent
/// in 1/ms, with omega expressed in rad/s at the interface.
struct HeatingModel {
    double prefactor = 6.3; // 1/ms at omega = 2pi * 1 MHz
    double exponent = 1.8;
    double sigma_prefactor = 0.0;
    double sigma_exponent = 0.0;

    double rate(double omega_rad_s) const {
        if (!(omega_rad_s > 0.0)) throw NumericError("HeatingModel::rate: omega <= 0");
        return prefactor * std::pow(omega_rad_s / (kTwoPi * 1e6), -exponent);
    }
};

namespace detail {

struct WlsSolution {
    Eigen::VectorXd coeff;
    Eigen::MatrixXd covariance;
    double rss = 0.0;
    int dof = 0;
};

/// Weighted least squares via QR on the sqrt-weight-scaled system. Weights are
/// 1/sigma^2; rows with sigma = 0 get unit weight (exact synthetic data).
inline WlsSolution weighted_least_squares(const Eigen::MatrixXd& design,
                                          const Eigen::VectorXd& rhs,
                                          const Eigen::VectorXd& sigma) {
    const auto n = design.rows();
    const auto k = design.cols();
    if (n < k) throw DegenerateFitError("weighted_least_squares: underdetermined system");
    Eigen::MatrixXd xs(n, k);
    Eigen::VectorXd ys(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double w = (sigma[i] > 0.0) ? 1.0 / sigma[i] : 1.0;
        xs.row(i) = design.row(i) * w;
        ys[i] = rhs[i] * w;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
    qr.setThreshold(1e-10);
    if (qr.rank() < k)
        throw DegenerateFitError("weighted_least_squares: rank-deficient design matrix");
    WlsSolution out;
    out.coeff = qr.solve(ys);
    Eigen::MatrixXd xtx = xs.transpose() * xs;
    out.covariance = xtx.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    out.rss = (ys - xs * out.coeff).squaredNorm();
    out.dof = static_cast<int>(n - k);
    return out;
}

} // namespace detail

/// Joint weighted regression of m omega^2 / (2q) against the full voltage
/// configuration of every scan. Held-segment background voltages enter the
/// design matrix directly, so all scans share a single alpha_prime.
inline AlphaFit fit_alpha(const std::vector<FrequencyScan>& scans, const PhysicalConstants& c) {
    bool have_c = false, have_s = false, have_o = false;
    std::size_t total = 0;
    for (const auto& s : scans) {
        total += s.points.size();
        if (s.segment == Segment::C) have_c = true;
        if (s.segment == Segment::S) have_s = true;
        if (s.segment == Segment::O) have_o = true;
    }
    if (!(have_c && have_s && have_o))
        throw DegenerateFitError("fit_alpha: need at least one scan per segment");
    if (total < 4) throw DegenerateFitError("fit_alpha: fewer points than parameters");

    Eigen::MatrixXd design(total, 4);
    Eigen::VectorXd rhs(total), sig(total);
    double scale = c.mass / (2.0 * c.charge);
    Eigen::Index row = 0;
    for (const auto& s : scans) {
        for (const auto& pt : s.points) {
            double uc = (s.segment == Segment::C) ? pt.voltage : s.background.u_c;
            double us = (s.segment == Segment::S) ? pt.voltage : s.background.u_s;
            double uo = (s.segment == Segment::O) ? pt.voltage : s.background.u_o;
            design(row, 0) = uc;
            design(row, 1) = us;
            design(row, 2) = uo;
            design(row, 3) = 1.0;
            rhs[row] = scale * pt.omega * pt.omega;
            sig[row] = scale * 2.0 * pt.omega * pt.sigma_omega;
            ++row;
        }
    }
    auto sol = detail::weighted_least_squares(design, rhs, sig);
    AlphaFit out;
    out.alpha_c = {sol.coeff[0], std::sqrt(sol.covariance(0, 0))};
    out.alpha_s = {sol.coeff[1], std::sqrt(sol.covariance(1, 1))};
    out.alpha_o = {sol.coeff[2], std::sqrt(sol.covariance(2, 2))};
    out.alpha_prime = {sol.coeff[3], std::sqrt(sol.covariance(3, 3))};
    out.rss = sol.rss;
    out.dof = sol.dof;
    return out;
}

/// Beta coefficients from critical-point distance measurements. Each distance
/// maps to beta = 2 kappa / d^5; the regression runs against (U_C, U_S, 1).
/// The outer segments' feed-through is too small to resolve, so beta_o is
/// excluded by construction.
inline BetaFit fit_beta(const std::vector<DistanceScanPoint>& scan, const SegmentBasis& basis,
                        const PhysicalConstants& c, double alpha_tolerance = 1e4) {
    if (scan.size() < 3) throw DegenerateFitError("fit_beta: fewer points than parameters");
    double kappa = c.coulomb_factor();
    Eigen::MatrixXd design(scan.size(), 3);
    Eigen::VectorXd rhs(scan.size()), sig(scan.size());
    for (std::size_t i = 0; i < scan.size(); ++i) {
        const auto& pt = scan[i];
        AxialPotential p = coefficients_from_voltages(basis, pt.voltages);
        if (std::fabs(p.alpha) > alpha_tolerance)
            throw UsageError("fit_beta: scan point is not at the critical point (alpha != 0)");
        if (!(pt.distance > 0.0)) throw NumericError("fit_beta: non-positive distance");
        double d = pt.distance;
        double beta_pt = 2.0 * kappa / std::pow(d, 5);
        design(i, 0) = pt.voltages.u_c;
        design(i, 1) = pt.voltages.u_s;
        design(i, 2) = 1.0;
        rhs[i] = beta_pt;
        sig[i] = beta_pt * 5.0 * pt.sigma / d;
    }
    auto sol = detail::weighted_least_squares(design, rhs, sig);
    BetaFit out;
    out.beta_c = {sol.coeff[0], std::sqrt(sol.covariance(0, 0))};
    out.beta_s = {sol.coeff[1], std::sqrt(sol.covariance(1, 1))};
    out.beta_prime = {sol.coeff[2], std::sqrt(sol.covariance(2, 2))};
    out.rss = sol.rss;
    out.dof = sol.dof;
    return out;
}

/// Log-log regression of heating rate against trap frequency. Points are
/// (omega [rad/s], rate [1/ms]); uncertainties of the rates are optional.
inline HeatingModel fit_heating_power_law(const std::vector<std::pair<double, double>>& points,
                                          const std::vector<double>& sigma_rate = {}) {
    if (points.size() < 3) throw DegenerateFitError("fit_heating_power_law: need >= 3 points");
    Eigen::MatrixXd design(points.size(), 2);
    Eigen::VectorXd rhs(points.size()), sig(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto [omega, rate] = points[i];
        if (!(omega > 0.0) || !(rate > 0.0))
            throw NumericError("fit_heating_power_law: non-positive point");
        design(i, 0) = std::log(omega / (kTwoPi * 1e6));
        design(i, 1) = 1.0;
        rhs[i] = std::log(rate);
        sig[i] = (i < sigma_rate.size() && sigma_rate[i] > 0.0) ? sigma_rate[i] / rate : 0.0;
    }
    auto sol = detail::weighted_least_squares(design, rhs, sig);
    // with no stated uncertainties, scale the covariance by the residual variance
    double var_scale = 1.0;
    if (sigma_rate.empty() && sol.dof > 0) var_scale = sol.rss / sol.dof;
    HeatingModel out;
    out.exponent = -sol.coeff[0];
    out.prefactor = std::exp(sol.coeff[1]);
    out.sigma_exponent = std::sqrt(sol.covariance(0, 0) * var_scale);
    out.sigma_prefactor = out.prefactor * std::sqrt(sol.covariance(1, 1) * var_scale);
    return out;
}

/// Imaging scale from the harmonic two-ion distance at a known center-of-mass
/// frequency and the measured pixel separation.
inline double magnification_from_frequency(double omega, double pixel_distance,
                                           const PhysicalConstants& c) {
    if (!(omega > 0.0)) throw NonConfiningError("magnification_from_frequency: omega <= 0");
    if (!(pixel_distance > 0.0))
        throw NumericError("magnification_from_frequency: pixel distance <= 0");
    return harmonic_distance_from_frequency(omega, c) / pixel_distance;
}

} // namespace ionsep
