// Waveform-generator quantization and the per-segment second-order low-pass
// filters sitting between the generator and the trap electrodes.
#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "ionsep/constants.hpp"
#include "ionsep/errors.hpp"
#include "ionsep/rampgen.hpp"

namespace ionsep {

struct AwgSpec {
    double range = 10.0;       // V, symmetric output limit
    double resolution = 0.3e-3; // V
    double max_rate = 2.5e6;   // samples/s

    void validate() const {
        if (!(range > 0.0) || !(resolution > 0.0) || !(max_rate > 0.0))
            throw std::invalid_argument("AwgSpec: all entries must be positive");
    }
};

struct FilterSpec {
    static constexpr int order = 2;
    double cutoff = 50e3;                      // Hz
    double quality = 0.70710678118654752440;   // Butterworth damping

    void validate() const {
        if (!(cutoff > 0.0) || !(quality > 0.0))
            throw std::invalid_argument("FilterSpec: cutoff and Q must be positive");
    }
};

/// Rounds every sample of every channel to the AWG resolution grid. Samples
/// beyond the output range are rejected.
inline Waveform quantize(const Waveform& w, const AwgSpec& spec) {
    spec.validate();
    if (w.sample_rate() > spec.max_rate * (1.0 + 1e-12))
        throw RateError("quantize: sample rate exceeds the AWG maximum");
    auto snap = [&](double v) { return std::round(v / spec.resolution) * spec.resolution; };
    Waveform q = w;
    std::ostringstream bad;
    int nbad = 0;
    for (auto* ch : {&q.u_c, &q.u_s, &q.u_o, &q.du_o}) {
        for (std::size_t k = 0; k < ch->size(); ++k) {
            double v = snap((*ch)[k]);
            if (std::fabs(v) > spec.range + 0.5 * spec.resolution) {
                if (nbad < 8) bad << (nbad ? ", " : "") << k;
                ++nbad;
            }
            (*ch)[k] = v;
        }
    }
    if (nbad > 0)
        throw SaturationError("quantize: " + std::to_string(nbad) +
                              " samples exceed the AWG range (indices " + bad.str() + ")");
    return q;
}

namespace detail {

/// One filter channel, discretized exactly for zero-order-held input: the
/// state (y, y') of y'' = w0^2 (u - y) - (w0/Q) y' advances per fine step by
/// the 2x2 matrix exponential. The constant-input fixed point is exactly the
/// input, so DC gain is unity, and the step map is unconditionally stable.
struct SecondOrderStepper {
    double e11, e12, e21, e22; // exp(A h)
    double g1, g2;             // A^-1 (exp(A h) - I) B
    double y = 0.0, v = 0.0;

    SecondOrderStepper(double cutoff_hz, double q, double fs) {
        double w0 = kTwoPi * cutoff_hz;
        double h = 1.0 / fs;
        // A = [[0, 1], [-w0^2, -w0/Q]], B = [0, w0^2]
        double a21 = -w0 * w0, a22 = -w0 / q;
        // exp(A h) by plain Taylor; ||A h|| is small at any sane oversampling
        double t11 = 1, t12 = 0, t21 = 0, t22 = 1;
        e11 = 1; e12 = 0; e21 = 0; e22 = 1;
        for (int k = 1; k <= 24; ++k) {
            double n11 = (t12 * a21) * h / k;
            double n12 = (t11 + t12 * a22) * h / k;
            double n21 = (t22 * a21) * h / k;
            double n22 = (t21 + t22 * a22) * h / k;
            t11 = n11; t12 = n12; t21 = n21; t22 = n22;
            e11 += t11; e12 += t12; e21 += t21; e22 += t22;
        }
        // inverse of A = [[0,1],[a21,a22]] is [[-a22/a21, 1/a21], [1, 0]]
        double i11 = -a22 / a21, i12 = 1.0 / a21;
        double m12 = e12, m22 = e22 - 1.0;
        g1 = (i11 * m12 + i12 * m22) * (-a21);
        g2 = m12 * (-a21);
    }

    void settle(double u) {
        y = u;
        v = 0.0;
    }

    double step(double u) {
        double ny = e11 * y + e12 * v + g1 * u;
        double nv = e21 * y + e22 * v + g2 * u;
        y = ny;
        v = nv;
        return y;
    }
};

} // namespace detail

/// Continuous-in-time voltage record: either the zero-order hold of a raw
/// waveform or a filtered trace on an oversampled grid (linearly interpolated
/// between fine samples). Evaluation past the end holds the final value.
class ContinuousVoltage {
  public:
    static ContinuousVoltage zero_order_hold(const Waveform& w, double tail_hold = 0.0) {
        ContinuousVoltage cv;
        cv.zoh_ = true;
        cv.dt_ = w.dt;
        cv.duration_ = w.duration() + tail_hold;
        cv.ch_ = {w.u_c, w.u_s, w.u_o, w.du_o};
        return cv;
    }

    double duration() const { return duration_; }
    double fine_dt() const { return dt_; }

    VoltageSet at(double t) const {
        VoltageSet v;
        v.u_c = eval(0, t);
        v.u_s = eval(1, t);
        v.u_o = eval(2, t);
        v.du_o = eval(3, t);
        return v;
    }

    /// Final asymptotic voltages (input held at its last sample).
    VoltageSet final_voltages() const {
        return {ch_[0].back(), ch_[1].back(), ch_[2].back(), 0.0, ch_[3].back()};
    }

    friend ContinuousVoltage apply_filter(const Waveform&, const FilterSpec&, int, double);

  private:
    bool zoh_ = false;
    double dt_ = 0.0;
    double duration_ = 0.0;
    std::array<std::vector<double>, 4> ch_;

    double eval(int c, double t) const {
        const auto& v = ch_[c];
        if (t <= 0.0) return v.front();
        double idx = t / dt_;
        auto i = static_cast<std::size_t>(idx);
        if (i >= v.size() - 1) return v.back();
        if (zoh_) return v[i];
        double f = idx - static_cast<double>(i);
        return v[i] + f * (v[i + 1] - v[i]);
    }
};

/// Passes the zero-order-held waveform through the second-order low-pass,
/// discretized at oversample times the waveform sample rate. The filter is
/// settled at the first sample's value, matching a ramp that starts from a
/// long-held initial configuration. tail_hold extends the input past the end
/// so the filter output can settle.
inline ContinuousVoltage apply_filter(const Waveform& w, const FilterSpec& spec, int oversample,
                                      double tail_hold = 0.0) {
    spec.validate();
    if (oversample < 1) throw UsageError("apply_filter: oversample must be >= 1");
    double fs = w.sample_rate() * oversample;
    if (fs < 4.0 * 2.0 * spec.cutoff)
        throw UsageError("apply_filter: oversampled rate below 4x filter Nyquist");

    ContinuousVoltage cv;
    cv.zoh_ = false;
    cv.dt_ = 1.0 / fs;
    auto n_in = w.size();
    auto tail = static_cast<std::size_t>(std::ceil(tail_hold * fs));
    auto n = n_in * static_cast<std::size_t>(oversample) + tail + 1;
    cv.duration_ = static_cast<double>(n - 1) * cv.dt_;

    const std::array<const std::vector<double>*, 4> in = {&w.u_c, &w.u_s, &w.u_o, &w.du_o};
    for (int c = 0; c < 4; ++c) {
        detail::SecondOrderStepper bq(spec.cutoff, spec.quality, fs);
        bq.settle(in[c]->front());
        auto& out = cv.ch_[c];
        out.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            // sample k is the state at t_k; input k is held over [t_k, t_k+1)
            out[k] = bq.y;
            std::size_t src = std::min(k / oversample, n_in - 1);
            bq.step((*in[c])[src]);
        }
    }
    return cv;
}

} // namespace ionsep
