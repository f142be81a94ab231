// Bayesian inference of (n_th, n_coh, Omega) from multi-transition Rabi data
// by Metropolis random-walk MCMC, plus synthetic-dataset generation for
// round-trip validation.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ionsep/errors.hpp"
#include "ionsep/numeric.hpp"
#include "ionsep/phonons.hpp"

namespace ionsep {

struct RabiRecord {
    int dn = 0;
    double t = 0.0; // s
    std::int64_t successes = 0;
    std::int64_t shots = 200;
};

struct RabiDataset {
    std::vector<RabiRecord> records;

    void validate() const {
        for (const auto& r : records) {
            if (r.shots <= 0) throw std::invalid_argument("RabiDataset: shots <= 0");
            if (r.successes < 0 || r.successes > r.shots)
                throw std::invalid_argument("RabiDataset: successes outside [0, shots]");
            if (!(r.t >= 0.0)) throw std::invalid_argument("RabiDataset: negative time");
        }
    }

    int transition_count() const {
        std::vector<int> seen;
        for (const auto& r : records)
            if (std::find(seen.begin(), seen.end(), r.dn) == seen.end()) seen.push_back(r.dn);
        return static_cast<int>(seen.size());
    }
};

struct PriorSpec {
    double n_th_lo = 0.0, n_th_hi = 1000.0;
    double n_coh_lo = 0.0, n_coh_hi = 1000.0;
    double omega_lo = 0.0, omega_hi = 0.0;

    static PriorSpec around_nominal(double omega_nominal, double cap = 1000.0,
                                    double omega_halfwidth = 0.2) {
        PriorSpec p;
        p.n_th_hi = cap;
        p.n_coh_hi = cap;
        p.omega_lo = omega_nominal * (1.0 - omega_halfwidth);
        p.omega_hi = omega_nominal * (1.0 + omega_halfwidth);
        return p;
    }

    void validate() const {
        if (!(n_th_lo < n_th_hi) || !(n_coh_lo < n_coh_hi) || !(omega_lo < omega_hi))
            throw std::invalid_argument("PriorSpec: lower bound must be below upper bound");
    }

    bool contains(double n_th, double n_coh, double omega) const {
        return n_th >= n_th_lo && n_th <= n_th_hi && n_coh >= n_coh_lo && n_coh <= n_coh_hi &&
               omega >= omega_lo && omega <= omega_hi;
    }
};

struct McmcConfig {
    std::size_t length = 50000;
    double burn_in_fraction = 0.2;
    double step_n_th = 1.0;
    double step_n_coh = 1.0;
    double step_omega_rel = 0.01;
    std::uint64_t seed; // mandatory, no default
    bool adapt_during_burn_in = true;
    std::size_t kernel_cap = 2048;

    explicit McmcConfig(std::uint64_t seed_value) : seed(seed_value) {}

    void validate() const {
        if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0))
            throw std::invalid_argument("McmcConfig: burn-in fraction outside [0, 1)");
        if (length < 10) throw std::invalid_argument("McmcConfig: chain too short");
    }
};

struct ParamSummary {
    double mean = 0.0;
    double sd = 0.0;
    double ci_lo = 0.0; // 68% central credible interval
    double ci_hi = 0.0;
};

struct Posterior {
    std::vector<std::array<double, 3>> samples; // retained (post burn-in)
    ParamSummary n_th, n_coh, omega;
    double acceptance_rate = 0.0;
    std::vector<std::string> flags;
};

namespace detail {

/// Likelihood-side forward model. Distributions are produced through the
/// thermalization kernel at a quantized truncation so factorizations are
/// reused across the chain; probability mass beyond the truncation enters the
/// Rabi signal at the dephased average 1/2.
class RabiLikelihood {
  public:
    RabiLikelihood(const RabiDataset& data, const RabiModel& model, std::size_t kernel_cap)
        : data_(data), model_(model), cap_(kernel_cap) {
        data_.validate();
        model_.validate();
        for (const auto& r : data_.records) {
            // binomial coefficient, constant in the parameters
            log_choose_.push_back(std::lgamma(r.shots + 1.0) - std::lgamma(r.successes + 1.0) -
                                  std::lgamma(r.shots - r.successes + 1.0));
        }
    }

    double operator()(double n_th, double n_coh, double omega) const {
        MotionalState state{n_th, n_coh};
        std::size_t n = quantized_truncation(state);
        Eigen::VectorXd p = distribution(state, n);
        double tail = 1.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) tail -= p[i];
        tail = std::max(tail, 0.0);

        double ll = 0.0;
        double eta = model_.lamb_dicke;
        for (std::size_t ri = 0; ri < data_.records.size(); ++ri) {
            const auto& r = data_.records[ri];
            const std::vector<double>& m = matrix_elements(r.dn, n, eta);
            KahanSum s;
            for (std::size_t k = 0; k < n; ++k) {
                double pk = p[static_cast<Eigen::Index>(k)];
                if (pk <= 0.0) continue;
                double a = std::sin(0.5 * omega * m[k] * r.t);
                s.add(pk * a * a);
            }
            double pup = std::clamp(s.value() + 0.5 * tail, 1e-9, 1.0 - 1e-9);
            ll += log_choose_[ri] + r.successes * std::log(pup) +
                  (r.shots - r.successes) * std::log(1.0 - pup);
        }
        return ll;
    }

  private:
    RabiDataset data_;
    RabiModel model_;
    std::size_t cap_;
    std::vector<double> log_choose_;
    mutable std::map<int, std::vector<double>> m_cache_;

    std::size_t quantized_truncation(const MotionalState& state) const {
        std::size_t need = choose_truncation(state);
        std::size_t n = 32;
        while (n < need && n < cap_) n *= 2;
        return std::min(n, cap_);
    }

    Eigen::VectorXd distribution(const MotionalState& state, std::size_t n) const {
        PhononDistribution base = coherent_distribution(state.n_coh, n);
        Eigen::VectorXd v(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = base.p[i];
        if (state.n_th > 0.0) {
            auto kern = shared_kernel(n);
            v = kern->propagate(v, state.n_th);
            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::max(v[i], 0.0);
        }
        return v;
    }

    const std::vector<double>& matrix_elements(int dn, std::size_t n, double eta) const {
        auto& m = m_cache_[dn];
        if (m.size() < n) {
            std::size_t old = m.size();
            m.resize(n);
            for (std::size_t k = old; k < n; ++k)
                m[k] = rabi_matrix_element(static_cast<int>(k), dn, eta);
        }
        return m;
    }
};

} // namespace detail

/// Sum over records of the binomial log-pmf with success probability given by
/// the Rabi forward model at (n_th, n_coh, Omega). Empty data gives 0.
inline double log_likelihood(double n_th, double n_coh, double omega, const RabiDataset& data,
                             const RabiModel& model, std::size_t kernel_cap = 2048) {
    if (data.records.empty()) return 0.0;
    detail::RabiLikelihood lik(data, model, kernel_cap);
    return lik(n_th, n_coh, omega);
}

/// Metropolis random walk over (n_th, n_coh, Omega) with uniform priors.
/// Proposal scales adapt during burn-in only; the retained chain is sampled
/// with frozen scales. Deterministic for a fixed seed.
inline Posterior run_mcmc(const RabiDataset& data, const PriorSpec& priors, const McmcConfig& cfg,
                          const RabiModel& model) {
    cfg.validate();
    priors.validate();
    data.validate();
    if (data.records.empty()) throw UsageError("run_mcmc: empty dataset");
    if (data.transition_count() < 2)
        throw IdentifiabilityError(
            "run_mcmc: need data on >= 2 transitions to separate n_th and n_coh");

    detail::RabiLikelihood lik(data, model, cfg.kernel_cap);
    Rng rng(cfg.seed);

    double nominal = 0.5 * (priors.omega_lo + priors.omega_hi);
    std::array<double, 3> theta{std::min(2.0, 0.5 * (priors.n_th_lo + priors.n_th_hi)),
                                std::min(2.0, 0.5 * (priors.n_coh_lo + priors.n_coh_hi)),
                                nominal};
    theta[0] = std::clamp(theta[0], priors.n_th_lo, priors.n_th_hi);
    theta[1] = std::clamp(theta[1], priors.n_coh_lo, priors.n_coh_hi);
    std::array<double, 3> step{cfg.step_n_th, cfg.step_n_coh, cfg.step_omega_rel * nominal};

    double ll = lik(theta[0], theta[1], theta[2]);
    auto burn = static_cast<std::size_t>(cfg.burn_in_fraction * static_cast<double>(cfg.length));

    Posterior post;
    post.samples.reserve(cfg.length - burn);
    std::size_t accepted_retained = 0, retained = 0;

    for (std::size_t it = 0; it < cfg.length; ++it) {
        std::array<double, 3> prop{theta[0] + step[0] * rng.normal(),
                                   theta[1] + step[1] * rng.normal(),
                                   theta[2] + step[2] * rng.normal()};
        bool accept = false;
        if (priors.contains(prop[0], prop[1], prop[2])) {
            double ll_prop = lik(prop[0], prop[1], prop[2]);
            if (ll_prop >= ll || rng.uniform() < std::exp(ll_prop - ll)) {
                theta = prop;
                ll = ll_prop;
                accept = true;
            }
        }
        if (it < burn && cfg.adapt_during_burn_in) {
            // Robbins-Monro drift of the step scales toward ~30% acceptance
            double gain = 2.0 / std::sqrt(static_cast<double>(it + 8));
            double dir = accept ? 1.0 : -0.43; // 0.3/0.7 balance
            for (double& s : step) s *= std::exp(gain * dir * 0.3);
        }
        if (it >= burn) {
            post.samples.push_back(theta);
            ++retained;
            if (accept) ++accepted_retained;
        }
    }

    post.acceptance_rate =
        retained ? static_cast<double>(accepted_retained) / static_cast<double>(retained) : 0.0;
    if (post.acceptance_rate <= 0.05 || post.acceptance_rate >= 0.8)
        post.flags.push_back("acceptance rate outside (0.05, 0.8)");

    auto summarize = [&](int idx, double lo, double hi) {
        std::vector<double> v(post.samples.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = post.samples[i][idx];
        ParamSummary s;
        s.mean = mean_of(v);
        s.sd = stddev_of(v);
        std::sort(v.begin(), v.end());
        auto q = [&](double f) {
            double pos = f * static_cast<double>(v.size() - 1);
            auto i = static_cast<std::size_t>(pos);
            double frac = pos - static_cast<double>(i);
            return (i + 1 < v.size()) ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
        };
        s.ci_lo = q(0.16);
        s.ci_hi = q(0.84);
        // boundary pileup: > 20% of mass within 1% of a prior bound
        double margin = 0.01 * (hi - lo);
        std::size_t low_pile = 0, high_pile = 0;
        for (double x : v) {
            if (x <= lo + margin) ++low_pile;
            if (x >= hi - margin) ++high_pile;
        }
        const char* names[] = {"n_th", "n_coh", "omega"};
        auto frac_of = [&](std::size_t k) {
            return static_cast<double>(k) / static_cast<double>(v.size());
        };
        if (frac_of(low_pile) > 0.2)
            post.flags.push_back(std::string(names[idx]) + " piles at the lower prior bound");
        if (frac_of(high_pile) > 0.2)
            post.flags.push_back(std::string(names[idx]) + " piles at the upper prior bound");
        return s;
    };
    post.n_th = summarize(0, priors.n_th_lo, priors.n_th_hi);
    post.n_coh = summarize(1, priors.n_coh_lo, priors.n_coh_hi);
    post.omega = summarize(2, priors.omega_lo, priors.omega_hi);
    return post;
}

/// Binomial draws from the forward model on a (transition x time) grid.
/// exact_expectation replaces the draw by the rounded expected count, for
/// infinite-shot limits.
inline RabiDataset synthesize_dataset(const MotionalState& truth, double omega,
                                      const std::vector<int>& transitions,
                                      const std::vector<double>& times, std::int64_t shots,
                                      std::uint64_t seed, const RabiModel& model,
                                      bool exact_expectation = false) {
    if (shots <= 0) throw std::invalid_argument("synthesize_dataset: shots <= 0");
    RabiModel m = model;
    m.omega = omega;
    PhononDistribution dist = displaced_thermal(truth, choose_truncation(truth));
    Rng rng(seed);
    RabiDataset out;
    for (int dn : transitions) {
        for (double t : times) {
            double p = rabi_signal(dist, m, dn, t);
            RabiRecord r;
            r.dn = dn;
            r.t = t;
            r.shots = shots;
            r.successes = exact_expectation
                              ? std::llround(p * static_cast<double>(shots))
                              : rng.binomial(shots, p);
            out.records.push_back(r);
        }
    }
    return out;
}

} // namespace ionsep
