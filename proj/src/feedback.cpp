#include "levicool/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "levicool/constants.hpp"
#include "levicool/errors.hpp"

namespace levicool::feedback {

using std::numbers::pi;

double DacConfig::step() const { return vref / std::ldexp(1.0, bits); }

void FeedbackConfig::validate(double frame_period) const {
    if (coarse_delay_frames < 0) throw ConfigError("coarse delay must be >= 0 frames");
    if (!(fine_delay >= 0.0 && fine_delay < frame_period)) throw ConfigError("fine delay must lie in [0, frame period)");
    if (!(latency >= 0.0)) throw ConfigError("latency must be >= 0");
    if (!(gain >= 0.0)) throw ConfigError("feedback gain must be >= 0");
    if (dac.bits < 8 || dac.bits > 16) throw ConfigError("DAC bits must be in [8, 16]");
    if (!(dac.vref > 0.0)) throw ConfigError("DAC vref must be > 0");
    if (sign != 1 && sign != -1) throw ConfigError("feedback sign must be +1 or -1");
    if (!(full_scale > 0.0)) throw ConfigError("DAC full scale must be > 0");
    if (!(filter.q > 0.0)) throw ConfigError("filter Q must be > 0");
    if (!(filter.cutoff_hz > 0.0) || filter.cutoff_hz >= 0.5 / frame_period)
        throw ConfigError("filter cutoff must lie below the Nyquist frequency of the actuation rate");
}

double FeedbackConfig::total_delay(double frame_period) const {
    return coarse_delay_frames * frame_period + fine_delay + latency;
}

double optimal_delay(double omega0) {
    if (!(omega0 > 0.0)) throw ConfigError("omega0 must be > 0");
    return pi / (2.0 * omega0);
}

DelaySplit split_delay(double total_delay, double fps) {
    if (!(total_delay >= 0.0)) throw ConfigError("delay must be >= 0");
    if (!(fps > 0.0)) throw ConfigError("fps must be > 0");
    // Tolerate rounding so an exact multiple of the frame period has no remainder.
    auto coarse = static_cast<int>(std::floor(total_delay * fps * (1.0 + 1e-12)));
    double fine = total_delay - coarse / fps;
    if (fine < 0.0) fine = 0.0;
    return {coarse, fine};
}

DelaySplit delay_for_total(double total_delay, double fps, double latency) {
    return split_delay(std::max(total_delay - latency, 0.0), fps);
}

double force_coefficient(int charge_number, double geometry_factor, double z0) {
    if (!(z0 > 0.0)) throw ConfigError("z0 must be > 0");
    return charge_number * constants::kElementaryCharge * geometry_factor / z0;
}

Biquad::Biquad(const LowpassConfig& cfg, double sample_rate) : sample_rate_(sample_rate) {
    if (!(sample_rate > 0.0)) throw ConfigError("filter sample rate must be > 0");
    if (!(cfg.cutoff_hz > 0.0) || cfg.cutoff_hz >= 0.5 * sample_rate)
        throw ConfigError("filter cutoff must lie in (0, Nyquist)");
    if (!(cfg.q > 0.0)) throw ConfigError("filter Q must be > 0");
    const double k = std::tan(pi * cfg.cutoff_hz / sample_rate);
    const double norm = 1.0 / (1.0 + k / cfg.q + k * k);
    b0_ = k * k * norm;
    b1_ = 2.0 * b0_;
    b2_ = b0_;
    a1_ = 2.0 * (k * k - 1.0) * norm;
    a2_ = (1.0 - k / cfg.q + k * k) * norm;
}

double Biquad::step(double x) {
    const double y = b0_ * x + s1_;
    s1_ = b1_ * x - a1_ * y + s2_;
    s2_ = b2_ * x - a2_ * y;
    return y;
}

std::complex<double> Biquad::response(double freq_hz) const {
    const std::complex<double> zi = std::polar(1.0, -2.0 * pi * freq_hz / sample_rate_);
    return (b0_ + b1_ * zi + b2_ * zi * zi) / (1.0 + a1_ * zi + a2_ * zi * zi);
}

double Biquad::phase_lag(double freq_hz) const {
    double lag = -std::arg(response(freq_hz));
    lag = std::fmod(lag, 2.0 * pi);
    return lag < 0.0 ? lag + 2.0 * pi : lag;
}

double calibrate_cutoff(double target_lag_deg, double freq_hz, double sample_rate, double q) {
    const double target = target_lag_deg * pi / 180.0;
    auto lag = [&](double fc) { return Biquad({fc, q}, sample_rate).phase_lag(freq_hz); };
    double lo = 1e-6 * sample_rate, hi = 0.5 * sample_rate * (1.0 - 1e-9);
    // Lag falls monotonically as the cutoff rises.
    if (!(lag(lo) > target && lag(hi) < target))
        throw ConfigError("filter phase target " + std::to_string(target_lag_deg) + " deg is not reachable");
    for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (lag(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

DacOutput dac_output(double value, const DacConfig& dac, double full_scale, double gain, int sign) {
    const double step = dac.step();
    const double volts = sign * value * 0.5 * dac.vref / full_scale;
    const double max_code = std::ldexp(1.0, dac.bits - 1) - 1.0;
    const double min_code = -std::ldexp(1.0, dac.bits - 1);
    double code = std::round(volts / step);
    DacOutput out;
    if (code > max_code || code < min_code || !std::isfinite(code)) {
        out.saturated = true;
        code = std::isnan(code) ? 0.0 : std::clamp(code, min_code, max_code);
    }
    out.pin_volts = code * step;
    out.fb_volts = gain * out.pin_volts;
    return out;
}

double force_on_particle(double v_fb, const FeedbackConfig& cfg) { return cfg.force_coeff * v_fb; }

double lowpass_step(ControllerState& state, double value) { return state.filter.step(value); }

Controller::Controller(const FeedbackConfig& cfg, double frame_period) : cfg_(cfg), frame_period_(frame_period) {
    cfg_.validate(frame_period);
    const auto n = static_cast<std::size_t>(cfg_.coarse_delay_frames) + 1;
    state_.positions.assign(n, 0.0);
    state_.times.assign(n, 0.0);
    state_.filter = Biquad(cfg_.filter, 1.0 / frame_period);
}

Actuation Controller::ingest_sample(const localization::PositionSample& sample) {
    if (state_.filled > 0 && !(sample.t > state_.last_update_t))
        throw SequencingError("controller sample at t = " + std::to_string(sample.t) + " is not after t = " +
                              std::to_string(state_.last_update_t));
    const std::size_t n = state_.positions.size();
    state_.positions[state_.head] = sample.z_est;
    state_.times[state_.head] = sample.t;
    state_.filled = std::min(state_.filled + 1, n);
    // Oldest slot is the one written next; it holds the sample coarse frames back.
    const std::size_t oldest = (state_.head + 1) % n;
    state_.head = oldest;
    state_.last_update_t = sample.t;
    ++state_.tick;

    Actuation act;
    act.tick = state_.tick;
    act.t_sample = sample.t;
    act.t_actuate = sample.t + cfg_.fine_delay + cfg_.latency;
    act.raw = sample.z_est;
    act.delayed = state_.filled == n ? state_.positions[oldest] : 0.0;
    act.filtered = lowpass_step(state_, act.delayed);
    const DacOutput dac = dac_output(act.filtered, cfg_.dac, cfg_.full_scale, cfg_.gain, cfg_.sign);
    act.pin_volts = dac.pin_volts;
    act.fb_volts = cfg_.enabled ? dac.fb_volts : 0.0;
    act.saturated = dac.saturated;
    if (dac.saturated) ++saturations_;
    act.force = force_on_particle(act.fb_volts, cfg_);
    state_.last_output_v = act.fb_volts;
    return act;
}

LoopPrediction predicted_effective_damping(const FeedbackConfig& cfg, double omega0, double mass,
                                           double frame_period) {
    const Biquad filter(cfg.filter, 1.0 / frame_period);
    const double f0 = omega0 / (2.0 * pi);
    LoopPrediction p;
    p.delay = cfg.total_delay(frame_period);
    p.delay_phase = omega0 * p.delay;
    p.filter_lag = filter.phase_lag(f0);
    p.hold_phase = 0.5 * omega0 * frame_period;
    p.total_phase = p.delay_phase + p.filter_lag + p.hold_phase + (cfg.sign < 0 ? pi : 0.0);
    const double x = p.hold_phase;
    const double hold_gain = x > 0.0 ? std::sin(x) / x : 1.0;
    const double volts_per_meter = 0.5 * cfg.dac.vref / cfg.full_scale;
    const double gain = cfg.enabled ? cfg.gain : 0.0;
    p.loop_gain = cfg.force_coeff * gain * volts_per_meter * std::abs(filter.response(f0)) * hold_gain;
    p.damping_rate = p.loop_gain * std::sin(p.total_phase) / (mass * omega0);
    p.omega_sq_shift = -p.loop_gain * std::cos(p.total_phase) / mass;
    return p;
}

double sine_injection_phase(FeedbackConfig cfg, double frame_period, double freq_hz, int n_samples) {
    cfg.enabled = true;
    cfg.gain = 1.0;
    Controller ctrl(cfg, frame_period);
    const double w = 2.0 * pi * freq_hz;
    const double amp = 0.5 * cfg.full_scale;
    // Least squares for y = a sin(w t) + b cos(w t) over the settled half.
    double ss = 0.0, cc = 0.0, sc = 0.0, ys = 0.0, yc = 0.0;
    for (int k = 0; k < n_samples; ++k) {
        localization::PositionSample in;
        in.t = (k + 0.5) * frame_period;
        in.z_est = amp * std::sin(w * in.t);
        const Actuation act = ctrl.ingest_sample(in);
        if (k < n_samples / 2) continue;
        const double s = std::sin(w * act.t_actuate), c = std::cos(w * act.t_actuate);
        ss += s * s;
        cc += c * c;
        sc += s * c;
        ys += act.fb_volts * s;
        yc += act.fb_volts * c;
    }
    const double det = ss * cc - sc * sc;
    if (!(std::abs(det) > 0.0)) throw InsufficientData("sine injection needs more samples");
    const double a = (ys * cc - yc * sc) / det;
    const double b = (yc * ss - ys * sc) / det;
    // a sin + b cos = r sin(w t + atan2(b, a)); the lag is the negated phase.
    double lag = std::fmod(-std::atan2(b, a), 2.0 * pi);
    return lag < 0.0 ? lag + 2.0 * pi : lag;
}

}  // namespace levicool::feedback
