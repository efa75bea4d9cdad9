#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "levicool/localization.hpp"

namespace levicool::feedback {

struct LowpassConfig {
    double cutoff_hz = 8.66;
    double q = 0.7071067811865476;
};

struct DacConfig {
    int bits = 12;
    double vref = 3.3;

    double step() const;
};

struct FeedbackConfig {
    bool enabled = true;
    int coarse_delay_frames = 0;
    double fine_delay = 0.0;  // s, realized by scheduling the actuation
    double latency = 0.9e-3;  // s, frame midpoint to earliest actuation
    double gain = 0.0;        // V_FB / V_0 (attenuation after the DAC)
    LowpassConfig filter{};
    DacConfig dac{};
    int sign = -1;            // end-cap electrode faces the negative sensor axis
    double force_coeff = 0.0;  // N/V
    double full_scale = 1e-3;  // m of position mapped to +vref/2 at the DAC pin

    void validate(double frame_period) const;
    /// Frame midpoint to actuation.
    double total_delay(double frame_period) const;
};

/// Quarter-period delay pi / (2 omega0) that turns position into velocity.
double optimal_delay(double omega0);

struct DelaySplit {
    int coarse_frames = 0;
    double fine = 0.0;
};

/// Whole frames plus the remainder in [0, 1/fps).
DelaySplit split_delay(double total_delay, double fps);

/// Coarse/fine split realizing a total delay that includes the processing
/// latency. Delays shorter than the latency are clamped to it.
DelaySplit delay_for_total(double total_delay, double fps, double latency);

/// charge * e * geometry_factor / z0.
double force_coefficient(int charge_number, double geometry_factor, double z0);

/// Second-order low-pass, bilinear transform with cutoff prewarping,
/// transposed direct form II.
class Biquad {
public:
    Biquad() = default;
    Biquad(const LowpassConfig& cfg, double sample_rate);

    double step(double x);
    void reset() { s1_ = s2_ = 0.0; }
    std::complex<double> response(double freq_hz) const;
    /// Phase lag in radians, unwrapped to [0, 2 pi).
    double phase_lag(double freq_hz) const;
    double state1() const { return s1_; }
    double state2() const { return s2_; }
    double b0() const { return b0_; }
    double b1() const { return b1_; }
    double b2() const { return b2_; }
    double a1() const { return a1_; }
    double a2() const { return a2_; }

private:
    double sample_rate_ = 1.0;
    double b0_ = 1.0, b1_ = 0.0, b2_ = 0.0, a1_ = 0.0, a2_ = 0.0;
    double s1_ = 0.0, s2_ = 0.0;
};

/// Cutoff giving the requested phase lag at `freq_hz` for the given Q.
double calibrate_cutoff(double target_lag_deg, double freq_hz, double sample_rate, double q);

struct DacOutput {
    double pin_volts = 0.0;  // quantized DAC output V_0
    double fb_volts = 0.0;   // after the gain stage, V_FB
    bool saturated = false;
};

/// Maps a position to DAC volts (full_scale -> vref/2), applies the sign,
/// quantizes to `bits` levels over [-vref/2, vref/2) and saturates there,
/// then scales by the gain.
DacOutput dac_output(double value, const DacConfig& dac, double full_scale, double gain, int sign);

double force_on_particle(double v_fb, const FeedbackConfig& cfg);

struct ControllerState {
    std::vector<double> positions;  // ring of the last coarse+1 samples
    std::vector<double> times;
    std::size_t head = 0;
    std::size_t filled = 0;
    Biquad filter;
    double last_output_v = 0.0;
    double last_update_t = -1.0;
    std::int64_t tick = -1;
};

/// One scheduled actuation and the telemetry behind it.
struct Actuation {
    std::int64_t tick = 0;
    double t_sample = 0.0;
    double t_actuate = 0.0;
    double raw = 0.0;
    double delayed = 0.0;
    double filtered = 0.0;
    double pin_volts = 0.0;
    double fb_volts = 0.0;
    double force = 0.0;
    bool saturated = false;
};

class Controller {
public:
    Controller(const FeedbackConfig& cfg, double frame_period);

    /// Pushes a sample and returns the actuation it triggers: the sample
    /// coarse_delay_frames back, filtered and converted, due at
    /// sample.t + fine_delay + latency.
    Actuation ingest_sample(const localization::PositionSample& sample);

    const ControllerState& state() const { return state_; }
    const FeedbackConfig& config() const { return cfg_; }
    std::size_t saturation_count() const { return saturations_; }

private:
    FeedbackConfig cfg_;
    double frame_period_;
    ControllerState state_;
    std::size_t saturations_ = 0;
};

double lowpass_step(ControllerState& state, double value);

struct LoopPrediction {
    double delay = 0.0;          // s, frame midpoint to actuation
    double delay_phase = 0.0;    // rad
    double filter_lag = 0.0;     // rad
    double hold_phase = 0.0;     // rad, half a frame of zero-order hold
    double total_phase = 0.0;    // rad, including the sign flip
    double loop_gain = 0.0;      // N/m at omega0
    double damping_rate = 0.0;   // 1/s, positive cools
    double omega_sq_shift = 0.0; // rad^2/s^2 added to omega0^2
};

/// Small-gain closed form: delayed, filtered position feedback acts as a
/// damping rate K |H| sin(phi) / (m omega0) plus a spring term.
LoopPrediction predicted_effective_damping(const FeedbackConfig& cfg, double omega0, double mass,
                                           double frame_period);

/// Drives a unit-free sine at `freq_hz` through a controller built from
/// `cfg` (gain forced to 1, sign kept) and returns the phase lag in [0, 2 pi)
/// of the actuated values, stamped at their actuation times, relative to the
/// input.
double sine_injection_phase(FeedbackConfig cfg, double frame_period, double freq_hz, int n_samples = 4000);

}  // namespace levicool::feedback
