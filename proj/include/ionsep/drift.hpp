// Laser-induced charging of the trap, its rate fit, the PI tilt-compensation
// servo, and the separation success-window search.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ionsep/dynamics.hpp"
#include "ionsep/errors.hpp"
#include "ionsep/numeric.hpp"

namespace ionsep {

/// Charging dynamics in compensation-voltage units: laser on drives
/// dU/dt = K' - (delta + kappa_dis) U, laser off decays at kappa_dis. The
/// discharge rate is named kappa_dis to keep it apart from the Coulomb factor.
struct ChargingParams {
    double k_prime = 3.02;    // mV/min
    double delta = 0.074;     // 1/min, screening while the laser is on
    double kappa_dis = 0.017; // 1/min, discharge

    void validate() const {
        if (!(k_prime >= 0.0) || !(delta >= 0.0) || !(kappa_dis >= 0.0))
            throw std::invalid_argument("ChargingParams: negative rate");
    }

    double asymptote() const {
        double r = delta + kappa_dis;
        return r > 0.0 ? k_prime / r : 0.0;
    }
};

/// Ordered, non-overlapping laser-on intervals in minutes.
struct LaserSchedule {
    std::vector<std::pair<double, double>> on_intervals;

    void validate() const {
        double prev = -1e300;
        for (const auto& [a, b] : on_intervals) {
            if (!(a < b)) throw std::invalid_argument("LaserSchedule: empty interval");
            if (!(a >= prev)) throw std::invalid_argument("LaserSchedule: overlapping intervals");
            prev = b;
        }
    }

    bool on(double t) const {
        for (const auto& [a, b] : on_intervals)
            if (t >= a && t < b) return true;
        return false;
    }

    bool any_on(double lo, double hi) const {
        for (const auto& [a, b] : on_intervals)
            if (a < hi && b > lo) return true;
        return false;
    }

    bool any_off(double lo, double hi) const {
        double cursor = lo;
        for (const auto& [a, b] : on_intervals) {
            if (a > cursor && std::min(a, hi) > cursor) return true;
            cursor = std::max(cursor, b);
            if (cursor >= hi) return false;
        }
        return cursor < hi;
    }
};

/// Compensation-voltage trace from the piecewise closed form of the charging
/// dynamics: on-intervals relax toward K'/(delta+kappa_dis), off-intervals
/// decay at kappa_dis.
inline std::vector<double> simulate_charging(const ChargingParams& params,
                                             const LaserSchedule& sched, double u0,
                                             const std::vector<double>& times) {
    params.validate();
    sched.validate();
    std::vector<double> out(times.size());
    auto evolve = [&](double u, double t0, double t1) {
        // segment [t0, t1] with constant laser state
        if (sched.on(0.5 * (t0 + t1))) {
            double r = params.delta + params.kappa_dis;
            if (r == 0.0) return u + params.k_prime * (t1 - t0);
            double uinf = params.k_prime / r;
            return uinf + (u - uinf) * std::exp(-r * (t1 - t0));
        }
        return u * std::exp(-params.kappa_dis * (t1 - t0));
    };
    for (std::size_t i = 0; i < times.size(); ++i) {
        // piecewise evolution from 0 to times[i], split at interval edges
        std::vector<double> edges{0.0};
        for (const auto& [a, b] : sched.on_intervals) {
            if (a > 0.0 && a < times[i]) edges.push_back(a);
            if (b > 0.0 && b < times[i]) edges.push_back(b);
        }
        edges.push_back(times[i]);
        std::sort(edges.begin(), edges.end());
        double u = u0;
        for (std::size_t j = 0; j + 1 < edges.size(); ++j) u = evolve(u, edges[j], edges[j + 1]);
        out[i] = u;
    }
    return out;
}

struct ChargingFit {
    ChargingParams params;
    double sigma_k_prime = 0.0;
    double sigma_delta = 0.0;
    double sigma_kappa_dis = 0.0;
    double rss = 0.0;
    int dof = 0;
};

/// Nonlinear least squares against the piecewise closed form, via
/// Levenberg-Marquardt with a forward-difference Jacobian. The trace must
/// span both an on and an off interval, otherwise delta and kappa_dis are
/// only identified through their sum.
inline ChargingFit fit_charging(const std::vector<double>& times, const std::vector<double>& u,
                                const LaserSchedule& sched, double u0,
                                const ChargingParams& initial = {}) {
    if (times.size() != u.size() || times.size() < 4)
        throw std::invalid_argument("fit_charging: need >= 4 samples");
    double span_lo = times.front(), span_hi = times.back();
    if (!sched.any_on(span_lo, span_hi) || !sched.any_off(span_lo, span_hi))
        throw IdentifiabilityError(
            "fit_charging: trace must cover both laser-on and laser-off intervals");

    auto residuals = [&](const Eigen::Vector3d& p, Eigen::VectorXd& r) {
        ChargingParams cp{p[0], p[1], p[2]};
        auto model = simulate_charging(cp, sched, u0, times);
        for (std::size_t i = 0; i < u.size(); ++i)
            r[static_cast<Eigen::Index>(i)] = model[i] - u[i];
    };

    Eigen::Vector3d p(initial.k_prime, initial.delta, initial.kappa_dis);
    auto m = static_cast<Eigen::Index>(times.size());
    Eigen::VectorXd r(m), r_try(m);
    residuals(p, r);
    double cost = r.squaredNorm();
    double lambda = 1e-3;

    Eigen::MatrixXd jac(m, 3);
    bool converged = false;
    for (int it = 0; it < 200 && !converged; ++it) {
        for (int j = 0; j < 3; ++j) {
            double h = std::max(1e-8, 1e-6 * std::fabs(p[j]));
            Eigen::Vector3d pj = p;
            pj[j] += h;
            Eigen::VectorXd rj(m);
            residuals(pj.cwiseMax(0.0), rj);
            jac.col(j) = (rj - r) / h;
        }
        Eigen::Matrix3d jtj = jac.transpose() * jac;
        Eigen::Vector3d g = jac.transpose() * r;
        bool improved = false;
        for (int tries = 0; tries < 12; ++tries) {
            Eigen::Matrix3d a = jtj + lambda * Eigen::Matrix3d(jtj.diagonal().asDiagonal());
            Eigen::Vector3d dp = a.ldlt().solve(-g);
            Eigen::Vector3d p_try = (p + dp).cwiseMax(0.0);
            residuals(p_try, r_try);
            double cost_try = r_try.squaredNorm();
            if (cost_try < cost) {
                if (cost - cost_try < 1e-14 * (1.0 + cost)) converged = true;
                p = p_try;
                r = r_try;
                cost = cost_try;
                improved = true;
                lambda = std::max(lambda * 0.3, 1e-12);
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) break;
    }

    ChargingFit fit;
    fit.params = {p[0], p[1], p[2]};
    fit.rss = cost;
    fit.dof = static_cast<int>(times.size()) - 3;
    // covariance from the final Jacobian, scaled by the residual variance
    for (int j = 0; j < 3; ++j) {
        double h = std::max(1e-8, 1e-6 * std::fabs(p[j]));
        Eigen::Vector3d pj = p;
        pj[j] += h;
        Eigen::VectorXd rj(m);
        residuals(pj, rj);
        jac.col(j) = (rj - r) / h;
    }
    double s2 = fit.dof > 0 ? fit.rss / fit.dof : 0.0;
    Eigen::Matrix3d cov = (jac.transpose() * jac).ldlt().solve(Eigen::Matrix3d::Identity()) * s2;
    fit.sigma_k_prime = std::sqrt(std::max(cov(0, 0), 0.0));
    fit.sigma_delta = std::sqrt(std::max(cov(1, 1), 0.0));
    fit.sigma_kappa_dis = std::sqrt(std::max(cov(2, 2), 0.0));
    return fit;
}

/// Tilt field equivalent of a compensation voltage: gamma' = gamma_O * U.
inline double tilt_field_from_voltage(double u_volts, double gamma_o) {
    return gamma_o * u_volts;
}

struct ServoConfig {
    double kp = 0.3;
    double ki = 1.4;        // 1/s
    double period = 0.5;    // s
    double noise_mv = 0.2;  // measurement noise sigma
    std::uint64_t seed = 1;

    void validate() const {
        if (!(period > 0.0)) throw std::invalid_argument("ServoConfig: period <= 0");
    }

    /// Closed-loop poles of the velocity-form PI on a static plant:
    /// z^2 - (1 - kp - ki T) z - kp = 0.
    double max_pole_magnitude() const {
        double b = -(1.0 - kp - ki * period);
        double c = -kp;
        double disc = b * b - 4.0 * c;
        if (disc >= 0.0) {
            double s = std::sqrt(disc);
            return std::max(std::fabs((-b + s) / 2.0), std::fabs((-b - s) / 2.0));
        }
        return std::sqrt(std::fabs(c)); // complex pair, |z|^2 = |c|
    }
};

struct ServoStep {
    double time = 0.0;     // s
    double error_mv = 0.0; // true tilt error at this update
    double applied_mv = 0.0;
};

struct ServoTrace {
    std::vector<ServoStep> steps;
    int settled_after = -1; // first update after which |error| stays < 0.6 mV
    double steady_state_error_mv = 0.0;
};

/// Discrete PI loop on the tilt compensation voltage. The plant is a tilt
/// offset that may keep drifting per the charging model; each update measures
/// the current error with Gaussian noise and corrects the applied voltage.
inline ServoTrace simulate_servo(double initial_offset_mv, const ChargingParams& drift,
                                 const LaserSchedule& sched, const ServoConfig& cfg,
                                 int n_updates) {
    cfg.validate();
    if (cfg.max_pole_magnitude() >= 1.0)
        throw DivergenceError("simulate_servo: gains give closed-loop pole magnitude >= 1");
    Rng rng(cfg.seed);
    ServoTrace out;
    out.steps.reserve(static_cast<std::size_t>(n_updates));

    double applied = 0.0;
    double prev_err_meas = 0.0;
    double settle_band = 0.6;
    for (int k = 0; k < n_updates; ++k) {
        double t_min = static_cast<double>(k) * cfg.period / 60.0;
        double tilt = initial_offset_mv +
                      simulate_charging(drift, sched, 0.0, {t_min}).front();
        double err = tilt - applied;
        double meas = err + rng.normal(0.0, cfg.noise_mv);
        // velocity-form PI
        applied += cfg.kp * (meas - prev_err_meas) + cfg.ki * cfg.period * meas;
        prev_err_meas = meas;
        out.steps.push_back({static_cast<double>(k) * cfg.period, err, applied});
    }
    for (std::size_t k = 0; k < out.steps.size(); ++k) {
        bool stays = true;
        for (std::size_t j = k; j < out.steps.size(); ++j)
            stays &= std::fabs(out.steps[j].error_mv) < settle_band;
        if (stays) {
            out.settled_after = static_cast<int>(k);
            break;
        }
    }
    if (!out.steps.empty()) {
        std::size_t tail = out.steps.size() - std::min<std::size_t>(out.steps.size(), 5);
        std::vector<double> errs;
        for (std::size_t j = tail; j < out.steps.size(); ++j)
            errs.push_back(out.steps[j].error_mv);
        out.steady_state_error_mv = mean_of(errs);
    }
    return out;
}

struct TiltWindow {
    double lower = 0.0;      // V
    double upper = 0.0;      // V
    double center = 0.0;     // V
    double half_width = 0.0; // V
    double gamma_crit = 0.0; // V/m
};

/// Locates the tilt-compensation window over which a (slow) separation still
/// puts one ion in each well. Classification boundaries are refined by
/// bisection to `resolution` volts; the half-width converts to the critical
/// tilt field via gamma_O.
inline TiltWindow find_tilt_window(const std::function<Classification(double)>& classify,
                                   double grid_lo, double grid_hi, int grid_points,
                                   double resolution, double gamma_o) {
    if (grid_points < 8) throw UsageError("find_tilt_window: need a scan budget >= 8 points");
    if (!(grid_hi > grid_lo)) throw UsageError("find_tilt_window: empty grid span");

    std::vector<double> xs(static_cast<std::size_t>(grid_points));
    std::vector<Classification> cls(xs.size());
    int first_ok = -1, last_ok = -1;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = grid_lo + (grid_hi - grid_lo) * static_cast<double>(i) /
                              static_cast<double>(grid_points - 1);
        cls[i] = classify(xs[i]);
        if (cls[i] == Classification::Separated) {
            if (first_ok < 0) first_ok = static_cast<int>(i);
            last_ok = static_cast<int>(i);
        }
    }
    if (first_ok < 0)
        throw WindowNotFoundError("find_tilt_window: no successful separation on the grid");

    auto bisect_edge = [&](double ok, double bad) {
        while (std::fabs(ok - bad) > resolution) {
            double mid = 0.5 * (ok + bad);
            if (classify(mid) == Classification::Separated) ok = mid;
            else bad = mid;
        }
        return 0.5 * (ok + bad);
    };

    TiltWindow w;
    w.lower = (first_ok > 0) ? bisect_edge(xs[static_cast<std::size_t>(first_ok)],
                                           xs[static_cast<std::size_t>(first_ok - 1)])
                             : xs.front();
    w.upper = (last_ok + 1 < grid_points)
                  ? bisect_edge(xs[static_cast<std::size_t>(last_ok)],
                                xs[static_cast<std::size_t>(last_ok + 1)])
                  : xs.back();
    w.center = 0.5 * (w.lower + w.upper);
    w.half_width = 0.5 * (w.upper - w.lower);
    w.gamma_crit = gamma_o * w.half_width;
    return w;
}

} // namespace ionsep
