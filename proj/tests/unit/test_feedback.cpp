#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "levicool/errors.hpp"
#include "levicool/feedback.hpp"

using namespace levicool;
using namespace levicool::feedback;
using std::numbers::pi;

namespace {

constexpr double kFps = 221.0;
const double kOmega = 2.0 * pi * 23.5;

localization::PositionSample sample(double t, double z) {
    localization::PositionSample s;
    s.t = t;
    s.z_est = z;
    return s;
}

FeedbackConfig passthrough() {
    FeedbackConfig cfg;
    cfg.gain = 1.0;
    cfg.sign = 1;
    cfg.latency = 0.0;
    cfg.force_coeff = 1.0;
    cfg.full_scale = 1.65;  // 1 m -> 1 V
    cfg.dac.bits = 16;
    cfg.filter.cutoff_hz = 0.45 * kFps;
    return cfg;
}

double wrap_deg(double d) {
    d = std::fmod(d, 360.0);
    return d < 0.0 ? d + 360.0 : d;
}

double circ_diff_deg(double a, double b) {
    const double d = wrap_deg(a - b);
    return d > 180.0 ? 360.0 - d : d;
}

}  // namespace

TEST_CASE("quarter-period delay") {
    CHECK(optimal_delay(kOmega) == doctest::Approx(1.0 / (4.0 * 23.5)));
    CHECK(optimal_delay(kOmega) == doctest::Approx(10.638e-3).epsilon(1e-4));
    CHECK(optimal_delay(2.0 * pi * 25.0) == doctest::Approx(10e-3));
    CHECK(optimal_delay(2.0 * kOmega) == doctest::Approx(0.5 * optimal_delay(kOmega)));
}

TEST_CASE("coarse/fine delay split") {
    const DelaySplit s = split_delay(1.0 / (4.0 * 23.5), kFps);
    CHECK(s.coarse_frames == 2);
    CHECK(s.fine == doctest::Approx(1.0 / 94.0 - 2.0 / 221.0).epsilon(1e-12));
    CHECK(std::abs(s.fine - 1.588e-3) < 1e-6);

    const DelaySplit exact = split_delay(2.0 / kFps, kFps);
    CHECK(exact.coarse_frames == 2);
    CHECK(exact.fine == doctest::Approx(0.0).epsilon(1e-15));

    const DelaySplit short_delay = split_delay(1e-3, kFps);
    CHECK(short_delay.coarse_frames == 0);
    CHECK(short_delay.fine == 1e-3);

    const DelaySplit with_latency = delay_for_total(10e-3, kFps, 0.9e-3);
    CHECK(with_latency.coarse_frames * (1.0 / kFps) + with_latency.fine == doctest::Approx(9.1e-3));
    CHECK(delay_for_total(0.1e-3, kFps, 0.9e-3).fine == 0.0);
}

TEST_CASE("controller delay line") {
    FeedbackConfig cfg = passthrough();
    cfg.filter.cutoff_hz = 0.49999 * kFps;  // close to a pass-through at low frequency
    Controller pass(cfg, 1.0 / kFps);
    const Actuation a = pass.ingest_sample(sample(0.001, 0.2));
    CHECK(a.delayed == 0.2);
    CHECK(a.t_actuate == 0.001);

    cfg.coarse_delay_frames = 2;
    cfg.fine_delay = 1e-3;
    cfg.latency = 0.5e-3;
    Controller ctrl(cfg, 1.0 / kFps);
    std::vector<double> delayed;
    for (int k = 0; k < 6; ++k) {
        const Actuation act = ctrl.ingest_sample(sample(k / kFps, 0.1 * (k + 1)));
        delayed.push_back(act.delayed);
        CHECK(act.t_actuate == doctest::Approx(k / kFps + 1.5e-3));
    }
    CHECK(delayed[0] == 0.0);
    CHECK(delayed[1] == 0.0);
    for (int k = 2; k < 6; ++k) CHECK(delayed[static_cast<std::size_t>(k)] == doctest::Approx(0.1 * (k - 1)));

    CHECK_THROWS_AS(ctrl.ingest_sample(sample(1.0 / kFps, 0.0)), SequencingError);
}

TEST_CASE("biquad low-pass") {
    const LowpassConfig lp{8.66, std::sqrt(0.5)};
    Biquad f(lp, kFps);
    double y = 0.0;
    for (int i = 0; i < 2000; ++i) y = f.step(3.0);
    CHECK(y == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(std::abs(f.response(0.0)) == doctest::Approx(1.0).epsilon(1e-14));

    // Sine sweep: measured lag against the closed-form response.
    for (double freq : {5.0, 23.5, 60.0}) {
        Biquad g(lp, kFps);
        const double w = 2.0 * pi * freq;
        double ss = 0, cc = 0, sc = 0, ys = 0, yc = 0;
        for (int n = 0; n < 20000; ++n) {
            const double t = n / kFps;
            const double out = g.step(std::sin(w * t));
            if (n < 10000) continue;
            const double s = std::sin(w * t), c = std::cos(w * t);
            ss += s * s, cc += c * c, sc += s * c, ys += out * s, yc += out * c;
        }
        const double det = ss * cc - sc * sc;
        const double a = (ys * cc - yc * sc) / det, b = (yc * ss - ys * sc) / det;
        const double lag_deg = wrap_deg(-std::atan2(b, a) * 180.0 / pi);
        CHECK(circ_diff_deg(lag_deg, g.phase_lag(freq) * 180.0 / pi) < 2.0);
    }

    CHECK_THROWS_AS(Biquad({kFps / 2.0, 0.7}, kFps), ConfigError);
}

TEST_CASE("cutoff calibration hits the phase target") {
    const double fc = calibrate_cutoff(150.0, 23.5, kFps, std::sqrt(0.5));
    const Biquad f({fc, std::sqrt(0.5)}, kFps);
    CHECK(f.phase_lag(23.5) * 180.0 / pi == doctest::Approx(150.0).epsilon(1e-6));
    CHECK(std::abs(LowpassConfig{}.cutoff_hz - fc) < 0.01);
    CHECK_THROWS_AS(calibrate_cutoff(200.0, 23.5, kFps, std::sqrt(0.5)), ConfigError);
}

TEST_CASE("DAC quantization") {
    const DacConfig dac;
    CHECK(dac.step() == doctest::Approx(0.806e-3).epsilon(1e-3));
    CHECK(dac_output(0.0, dac, 1.0, 0.7, -1).fb_volts == 0.0);
    CHECK(dac_output(0.3, dac, 1.0, 0.0, -1).fb_volts == 0.0);

    // Full scale maps to +vref/2 and saturates there.
    const DacOutput top = dac_output(2.0, dac, 1.0, 1.0, 1);
    CHECK(top.saturated);
    CHECK(top.pin_volts == doctest::Approx(1.65 - dac.step()));
    const DacOutput bottom = dac_output(-2.0, dac, 1.0, 1.0, 1);
    CHECK(bottom.saturated);
    CHECK(bottom.pin_volts == doctest::Approx(-1.65));
    CHECK(dac_output(-0.5, dac, 1.0, 1.0, -1).pin_volts == doctest::Approx(0.825).epsilon(1e-3));

    // Quantization error is uniform over one step: variance step^2 / 12.
    Rng rng(3);
    double s2 = 0.0;
    std::vector<int> hist(10, 0);
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = (rng.uniform() - 0.5) * 1.6;
        const double e = dac_output(v / 1.65, dac, 1.0, 1.0, 1).pin_volts - v;
        s2 += e * e;
        ++hist[static_cast<std::size_t>(std::min(9.0, (e / dac.step() + 0.5) * 10.0))];
    }
    CHECK(s2 / n == doctest::Approx(dac.step() * dac.step() / 12.0).epsilon(0.02));
    for (int h : hist) CHECK(h == doctest::Approx(n / 10.0).epsilon(0.05));

    FeedbackConfig cfg = passthrough();
    cfg.dac.bits = 8;
    cfg.full_scale = 1.0;
    Controller ctrl(cfg, 1.0 / kFps);
    for (int k = 0; k < 50; ++k) ctrl.ingest_sample(sample(k / kFps, 5.0));
    CHECK(ctrl.saturation_count() > 0);
}

TEST_CASE("force on the particle") {
    FeedbackConfig cfg;
    cfg.force_coeff = force_coefficient(500, 0.25, 7e-3);
    CHECK(cfg.force_coeff == doctest::Approx(500 * 1.602176634e-19 * 0.25 / 7e-3).epsilon(1e-12));
    CHECK(force_on_particle(0.0, cfg) == 0.0);
    CHECK(force_on_particle(2.0, cfg) == doctest::Approx(2.0 * force_on_particle(1.0, cfg)));
}

TEST_CASE("disabled controller emits zero force") {
    FeedbackConfig cfg = passthrough();
    cfg.enabled = false;
    Controller ctrl(cfg, 1.0 / kFps);
    for (int k = 0; k < 10; ++k) CHECK(ctrl.ingest_sample(sample(k / kFps, 0.3)).force == 0.0);
}

TEST_CASE("sine injection recovers the loop phase budget") {
    const double period = 1.0 / kFps;
    FeedbackConfig cfg;
    cfg.full_scale = 1e-3;
    cfg.force_coeff = 1.0;
    cfg.filter.cutoff_hz = calibrate_cutoff(150.0, 23.5, kFps, cfg.filter.q);
    for (double delay_deg : {30.0, 110.0, 250.0}) {
        const double total = delay_deg / 360.0 / 23.5;
        const DelaySplit split = delay_for_total(total, kFps, cfg.latency);
        cfg.coarse_delay_frames = split.coarse_frames;
        cfg.fine_delay = split.fine;
        const double measured = sine_injection_phase(cfg, period, 23.5) * 180.0 / pi;
        CHECK(circ_diff_deg(measured, delay_deg + 150.0 + 180.0) < 3.0);

        // Without the sign flip and with a near-transparent filter the lag is
        // the pure delay, 2 pi f tau.
        FeedbackConfig plain = cfg;
        plain.sign = 1;
        plain.filter.cutoff_hz = 0.49 * kFps;
        const double filter_deg = Biquad(plain.filter, kFps).phase_lag(23.5) * 180.0 / pi;
        const double pure = sine_injection_phase(plain, period, 23.5) * 180.0 / pi - filter_deg;
        CHECK(circ_diff_deg(pure, delay_deg) < 0.01 * delay_deg);
    }
}

TEST_CASE("small-gain damping prediction") {
    FeedbackConfig cfg;
    cfg.gain = 0.5;
    cfg.force_coeff = 2.86e-15;
    cfg.full_scale = 1.6e-3;
    const double mass = 1.05e-16;
    // Pick the delay so that the total phase lands on 90 and 270 degrees.
    auto with_total = [&](double target_deg) {
        FeedbackConfig c = cfg;
        const LoopPrediction base = predicted_effective_damping(c, kOmega, mass, 1.0 / kFps);
        const double fixed = base.total_phase - base.delay_phase;
        double want = std::fmod((target_deg * pi / 180.0 - fixed), 2.0 * pi);
        if (want < 0.0) want += 2.0 * pi;
        double total = want / kOmega;
        if (total < c.latency) total += 2.0 * pi / kOmega;
        const DelaySplit s = delay_for_total(total, kFps, c.latency);
        c.coarse_delay_frames = s.coarse_frames;
        c.fine_delay = s.fine;
        return predicted_effective_damping(c, kOmega, mass, 1.0 / kFps);
    };
    const LoopPrediction cool = with_total(90.0);
    const LoopPrediction heat = with_total(270.0);
    CHECK(cool.damping_rate > 0.0);
    CHECK(heat.damping_rate < 0.0);
    CHECK(cool.damping_rate == doctest::Approx(-heat.damping_rate).epsilon(1e-9));
    CHECK(cool.damping_rate == doctest::Approx(cool.loop_gain / (mass * kOmega)).epsilon(1e-9));
    CHECK(std::abs(cool.omega_sq_shift) < 1e-6 * cool.loop_gain / mass);

    cfg.gain = 0.0;
    CHECK(predicted_effective_damping(cfg, kOmega, mass, 1.0 / kFps).damping_rate == 0.0);
}

TEST_CASE("feedback config validation") {
    FeedbackConfig cfg;
    CHECK_NOTHROW(cfg.validate(1.0 / kFps));
    cfg.fine_delay = 1.0 / kFps;
    CHECK_THROWS_AS(cfg.validate(1.0 / kFps), ConfigError);
    cfg = FeedbackConfig{};
    cfg.dac.bits = 20;
    CHECK_THROWS_AS(cfg.validate(1.0 / kFps), ConfigError);
    cfg = FeedbackConfig{};
    cfg.gain = -1.0;
    CHECK_THROWS_AS(cfg.validate(1.0 / kFps), ConfigError);
    cfg = FeedbackConfig{};
    cfg.filter.cutoff_hz = 120.0;
    CHECK_THROWS_AS(cfg.validate(1.0 / kFps), ConfigError);
}
