// Phonon-number distributions for displaced, thermal and displaced-thermal
// motional states, the rate-equation thermalization kernel, and the Rabi
// forward model for carrier/sideband spectroscopy.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "ionsep/constants.hpp"
#include "ionsep/errors.hpp"
#include "ionsep/numeric.hpp"

namespace ionsep {

/// Truncated probability vector over Fock states.
struct PhononDistribution {
    std::vector<double> p;

    std::size_t truncation() const { return p.size(); }

    double sum() const {
        KahanSum s;
        for (double v : p) s.add(v);
        return s.value();
    }

    double mean() const {
        KahanSum s;
        for (std::size_t n = 0; n < p.size(); ++n) s.add(static_cast<double>(n) * p[n]);
        return s.value();
    }

    double tail_mass() const {
        double t = 0.0;
        for (std::size_t i = p.size() > 5 ? p.size() - 5 : 0; i < p.size(); ++i) t += p[i];
        return t;
    }

    void validate(double tail_bound = 1e-6) const {
        for (double v : p)
            if (!(v >= 0.0)) throw NumericError("PhononDistribution: negative probability");
        double s = sum();
        if (s < 1.0 - 1e-6 || s > 1.0 + 1e-9)
            throw NumericError("PhononDistribution: normalization outside [1-1e-6, 1]");
        if (tail_mass() > tail_bound)
            throw TruncationError("PhononDistribution: tail mass above bound");
    }
};

/// Thermal + coherent decomposition of a motional state; the displacement
/// phase is irrelevant to populations and is not tracked.
struct MotionalState {
    double n_th = 0.0;
    double n_coh = 0.0;

    double zeta_mag() const { return std::sqrt(n_coh); }
    double mean() const { return n_th + n_coh; }
    double variance() const { return n_th * (n_th + 1.0) + n_coh * (2.0 * n_th + 1.0); }

    void validate() const {
        if (!(n_th >= 0.0) || !(n_coh >= 0.0))
            throw std::invalid_argument("MotionalState: negative occupation");
    }
};

inline constexpr int kDisplacedFockLimit = 150;

/// |<k | zeta, n>|^2: phonon distribution of a displaced number state.
/// Evaluated in log scale through the generalized-Laguerre three-term
/// recurrence, which keeps the alternating inner sum implicit and accurate;
/// the explicit signed summation loses all precision for moderate quantum
/// numbers. The limit guards the recurrence length.
inline double displaced_fock_prob(int k, int n, double zeta_mag, int limit = kDisplacedFockLimit) {
    if (k < 0 || n < 0) throw std::invalid_argument("displaced_fock_prob: negative index");
    if (std::min(k, n) > limit)
        throw RangeError("displaced_fock_prob: quantum numbers beyond the accuracy limit; "
                         "use the thermalization route");
    double z = zeta_mag * zeta_mag;
    if (z == 0.0) return k == n ? 1.0 : 0.0;
    int m = std::min(k, n);
    int mm = std::max(k, n);
    int a = mm - m;
    double logscale = 0.0;
    double lprev = 0.0; // L_{j-1}
    double lcur = 1.0;  // L_0
    for (int j = 0; j < m; ++j) {
        double lnext = ((2.0 * j + 1.0 + a - z) * lcur - (j + a) * lprev) / (j + 1.0);
        lprev = lcur;
        lcur = lnext;
        double mag = std::max(std::fabs(lcur), std::fabs(lprev));
        if (mag > 1e150) {
            lcur /= mag;
            lprev /= mag;
            logscale += std::log(mag);
        }
    }
    if (lcur == 0.0) return 0.0;
    double logp = -z + a * std::log(z) + std::lgamma(m + 1.0) - std::lgamma(mm + 1.0) +
                  2.0 * (logscale + std::log(std::fabs(lcur)));
    return std::exp(logp);
}

/// Poisson distribution of a displaced vacuum, in log space.
inline PhononDistribution coherent_distribution(double n_coh, std::size_t truncation) {
    PhononDistribution out;
    out.p.resize(truncation);
    if (n_coh == 0.0) {
        out.p[0] = 1.0;
        return out;
    }
    double lz = std::log(n_coh);
    for (std::size_t k = 0; k < truncation; ++k)
        out.p[k] = std::exp(-n_coh + static_cast<double>(k) * lz - std::lgamma(k + 1.0));
    return out;
}

inline PhononDistribution thermal_distribution(double n_th, std::size_t truncation) {
    PhononDistribution out;
    out.p.resize(truncation);
    if (n_th == 0.0) {
        out.p[0] = 1.0;
        return out;
    }
    double r = n_th / (n_th + 1.0);
    double v = 1.0 / (n_th + 1.0);
    for (std::size_t k = 0; k < truncation; ++k) {
        out.p[k] = v;
        v *= r;
    }
    return out;
}

/// Smallest truncation with the analytic tail bound below 1e-6; at least
/// mean + 10 sigma of the displaced-thermal state.
inline std::size_t choose_truncation(const MotionalState& state) {
    state.validate();
    double n = state.mean() + 10.0 * std::sqrt(state.variance());
    return std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(n)) + 1);
}

/// Rate-equation generator of thermalization, eigendecomposed once per
/// truncation. The kernel is tridiagonal with integer entries and exactly
/// vanishing column sums (the top diagonal entry is reduced so no probability
/// leaks through the truncation boundary), which also makes it symmetric, so
/// the eigenvector inverse is the transpose.
class ThermalizationKernel {
  public:
    explicit ThermalizationKernel(std::size_t dimension) : n_(dimension) {
        if (n_ < 2) throw std::invalid_argument("ThermalizationKernel: dimension < 2");
        Eigen::VectorXd diag(n_), off(n_ - 1);
        for (std::size_t i = 0; i < n_; ++i) diag[i] = -(2.0 * static_cast<double>(i) + 1.0);
        diag[n_ - 1] = -static_cast<double>(n_ - 1);
        for (std::size_t i = 0; i + 1 < n_; ++i) off[i] = static_cast<double>(i + 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
        if (es.info() != Eigen::Success)
            throw NumericError("ThermalizationKernel: eigendecomposition failed");
        eigenvalues_ = es.eigenvalues();
        vectors_ = es.eigenvectors();
        diag_ = diag;
        off_ = off;
        residual_ = reconstruction_residual();
        use_eigen_route_ = residual_ <= 1e-8;
    }

    std::size_t dimension() const { return n_; }
    double residual() const { return residual_; }
    bool eigen_route() const { return use_eigen_route_; }

    /// K v for the tridiagonal kernel.
    Eigen::VectorXd apply_generator(const Eigen::VectorXd& v) const {
        Eigen::VectorXd out(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            double s = diag_[i] * v[i];
            if (i > 0) s += off_[i - 1] * v[i - 1];
            if (i + 1 < n_) s += off_[i] * v[i + 1];
            out[i] = s;
        }
        return out;
    }

    /// exp(nbar K) v, by the eigen route (three matrix products) or, if the
    /// decomposition did not reconstruct to 1e-8, by scaled-and-squared Taylor
    /// action on the tridiagonal generator.
    Eigen::VectorXd propagate(const Eigen::VectorXd& v, double nbar) const {
        if (nbar == 0.0) return v;
        if (use_eigen_route_) {
            Eigen::VectorXd y = vectors_.transpose() * v;
            for (std::size_t i = 0; i < n_; ++i) y[i] *= std::exp(nbar * eigenvalues_[i]);
            return vectors_ * y;
        }
        return expm_action(v, nbar);
    }

  private:
    std::size_t n_;
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd vectors_;
    Eigen::VectorXd diag_, off_;
    double residual_ = 0.0;
    bool use_eigen_route_ = true;

    double reconstruction_residual() const {
        // sampled columns: || K v - lambda v || relative to the eigenvalue scale
        double scale = std::max(1.0, eigenvalues_.cwiseAbs().maxCoeff());
        double worst = 0.0;
        std::size_t stride = std::max<std::size_t>(1, n_ / 16);
        for (std::size_t j = 0; j < n_; j += stride) {
            Eigen::VectorXd v = vectors_.col(j);
            double r = (apply_generator(v) - eigenvalues_[j] * v).norm() / scale;
            worst = std::max(worst, r);
        }
        return worst;
    }

    /// Taylor action on the tridiagonal generator with substeps sized so the
    /// scaled norm stays small.
    Eigen::VectorXd expm_action(Eigen::VectorXd v, double nbar) const {
        double knorm = 2.0 * (2.0 * static_cast<double>(n_) + 1.0);
        auto nsub = static_cast<long>(std::ceil(nbar * knorm / 0.5)) + 1;
        double h = nbar / static_cast<double>(nsub);
        for (long s = 0; s < nsub; ++s) {
            Eigen::VectorXd term = v;
            Eigen::VectorXd acc = v;
            for (int j = 1; j < 32; ++j) {
                term = apply_generator(term) * (h / j);
                acc += term;
                if (term.norm() < 1e-18 * acc.norm()) break;
            }
            v = acc;
        }
        return v;
    }
};

/// Process-wide kernel cache, one factorization per truncation.
inline std::shared_ptr<const ThermalizationKernel> shared_kernel(std::size_t dimension) {
    static std::map<std::size_t, std::shared_ptr<const ThermalizationKernel>> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(dimension);
    if (it != cache.end()) return it->second;
    auto k = std::make_shared<const ThermalizationKernel>(dimension);
    cache.emplace(dimension, k);
    return k;
}

/// Adds n_th_added thermal quanta to a distribution by propagating the
/// rate-equation kernel: p' = D exp(n_th Lambda) D^-1 p. Normalization is
/// conserved exactly by the kernel's construction; the mean grows by
/// n_th_added while the truncation holds the tail.
inline PhononDistribution thermalize(const PhononDistribution& p, double n_th_added,
                                     const ThermalizationKernel& kern) {
    if (!(n_th_added >= 0.0)) throw std::invalid_argument("thermalize: negative n_th_added");
    if (p.truncation() > kern.dimension())
        throw std::invalid_argument("thermalize: distribution exceeds kernel dimension");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kern.dimension()));
    for (std::size_t i = 0; i < p.p.size(); ++i) v[static_cast<Eigen::Index>(i)] = p.p[i];
    Eigen::VectorXd w = kern.propagate(v, n_th_added);
    PhononDistribution out;
    out.p.resize(kern.dimension());
    for (std::size_t i = 0; i < out.p.size(); ++i) {
        double x = w[static_cast<Eigen::Index>(i)];
        out.p[i] = (x < 0.0 && x > -1e-11) ? 0.0 : x;
        if (out.p[i] < 0.0)
            throw NumericError("thermalize: propagated distribution went negative");
    }
    if (out.tail_mass() > 1e-6)
        throw TruncationError("thermalize: tail mass exceeds bound, increase the truncation");
    return out;
}

/// Displaced-thermal phonon distribution. Small total means evaluate the
/// thermal average of displaced-Fock probabilities directly; larger states go
/// through coherent-distribution thermalization. Both routes agree to 1e-6 in
/// the overlap regime.
inline PhononDistribution displaced_thermal(const MotionalState& state, std::size_t truncation,
                                            double direct_route_threshold = 20.0) {
    state.validate();
    if (state.n_th == 0.0) return coherent_distribution(state.n_coh, truncation);
    if (state.n_coh == 0.0) return thermal_distribution(state.n_th, truncation);
    if (state.mean() <= direct_route_threshold) {
        // thermal average over Fock states; weights decay geometrically
        double r = state.n_th / (state.n_th + 1.0);
        auto n_max = static_cast<int>(std::ceil(std::log(1e-10) / std::log(r)));
        double z = state.zeta_mag();
        PhononDistribution out;
        out.p.assign(truncation, 0.0);
        double w = 1.0 / (state.n_th + 1.0);
        for (int n = 0; n <= n_max; ++n) {
            for (std::size_t k = 0; k < truncation; ++k)
                out.p[k] += w * displaced_fock_prob(static_cast<int>(k), n, z,
                                                    std::max(kDisplacedFockLimit, n_max + 1));
            w *= r;
        }
        return out;
    }
    auto kern = shared_kernel(truncation);
    return thermalize(coherent_distribution(state.n_coh, truncation), state.n_th, *kern);
}

/// Laser-ion coupling for carrier and sideband transitions.
struct RabiModel {
    double omega = kTwoPi * 100e3; // rad/s bare Rabi frequency
    double lamb_dicke = 0.23;

    void validate() const {
        if (!(omega > 0.0)) throw std::invalid_argument("RabiModel: omega <= 0");
        if (!(lamb_dicke > 0.0 && lamb_dicke < 1.0))
            throw std::invalid_argument("RabiModel: lamb_dicke outside (0, 1)");
    }
};

/// Sideband coupling matrix element
/// M = e^{-eta^2/2} eta^{|dn|} sqrt(n_<! / n_>!) L_{n_<}^{|dn|}(eta^2),
/// computed through the Laguerre recurrence. Transitions leaving the ladder
/// return 0.
inline double rabi_matrix_element(int n, int dn, double eta) {
    if (n < 0) throw std::invalid_argument("rabi_matrix_element: n < 0");
    if (n + dn < 0) return 0.0;
    int lo = std::min(n, n + dn);
    int hi = std::max(n, n + dn);
    int a = hi - lo;
    double x = eta * eta;
    double lprev = 0.0, lcur = 1.0;
    for (int j = 0; j < lo; ++j) {
        double lnext = ((2.0 * j + 1.0 + a - x) * lcur - (j + a) * lprev) / (j + 1.0);
        lprev = lcur;
        lcur = lnext;
    }
    double logfac = 0.5 * (std::lgamma(lo + 1.0) - std::lgamma(hi + 1.0));
    return std::exp(-0.5 * x + a * std::log(eta) + logfac) * lcur;
}

/// Spin-up probability after driving the dn transition for time t:
/// p = sum_n p_n sin^2(Omega M_{n,dn} t / 2).
inline double rabi_signal(const PhononDistribution& p, const RabiModel& model, int dn, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("rabi_signal: t < 0");
    model.validate();
    KahanSum s;
    for (std::size_t n = 0; n < p.p.size(); ++n) {
        if (p.p[n] == 0.0) continue;
        double m = rabi_matrix_element(static_cast<int>(n), dn, model.lamb_dicke);
        double amp = std::sin(0.5 * model.omega * m * t);
        s.add(p.p[n] * amp * amp);
    }
    return std::clamp(s.value(), 0.0, 1.0);
}

} // namespace ionsep
