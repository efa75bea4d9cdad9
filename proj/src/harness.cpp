#include "levicool/harness.hpp"

#include <cmath>
#include <deque>
#include <optional>
#include <limits>
#include <numbers>

#include "levicool/errors.hpp"
#include "levicool/imaging.hpp"
#include "levicool/rng.hpp"

namespace levicool::harness {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One camera's place in the exposure schedule.
struct CameraTrack {
    const config::CameraSection* section = nullptr;
    localization::PixelCalibration calib;
    Rng shot;
    Rng read;
    std::int64_t frame = 0;
    int sub = 0;
    std::vector<double> exposure_z;
    std::size_t dumped = 0;

    CameraTrack(const config::CameraSection& s, std::uint64_t seed)
        : section(&s),
          calib(localization::PixelCalibration::from_camera(s.model)),
          shot(seed, "shot/" + s.model.label()),
          read(seed, "read/" + s.model.label()) {}

    double next_time() const {
        return section->enabled ? section->model.subsample_time(frame, sub) : kInf;
    }
};

localization::PositionSample localize(const imaging::Frame& frame, const config::CameraSection& cam,
                                      const localization::PixelCalibration& calib,
                                      const localization::PositionSample* previous, std::size_t& failures) {
    try {
        return localization::estimate(frame, cam.estimator, calib);
    } catch (const localization::FitFailed& e) {
        ++failures;
        localization::PositionSample s = e.best_iterate().sample;
        s.t = frame.t_mid;
        return s;
    } catch (const ParticleLost&) {
        throw;
    } catch (const Error&) {
        // No usable signal in this frame: hold the last estimate.
        ++failures;
        localization::PositionSample s;
        if (previous) s = *previous;
        s.t = frame.t_mid;
        s.estimator = cam.estimator.tag();
        s.quality = 0.0;
        return s;
    }
}

}  // namespace

std::string code_version() { return LEVICOOL_VERSION; }

RunArtifacts run_closed_loop(const config::ExperimentConfig& cfg) {
    cfg.validate();
    RunArtifacts out;
    const std::uint64_t seed = cfg.run.seed;
    const double mass = cfg.particle.mass();
    const double omega0 = cfg.trap.omega0;
    const double gamma = dynamics::gas_damping_rate(cfg.environment, cfg.particle);
    const double t_ss = dynamics::steady_state_temperature(cfg.environment, cfg.particle);
    const auto& in_model = cfg.in_loop.model;
    const feedback::FeedbackConfig fb = config::resolve_feedback(cfg);

    auto& md = out.metadata;
    md.config_hash = config::config_hash(cfg);
    md.seed = seed;
    md.version = code_version();
    md.master_clock_hz = lcm(in_model.fps, cfg.out_of_loop.model.fps).str();
    md.mass = mass;
    md.gamma = gamma;
    md.steady_state_temperature = t_ss;
    md.feedback = fb;
    md.prediction = feedback::predicted_effective_damping(fb, omega0, mass, in_model.frame_period());

    Rng thermal(seed, "thermal"), excess(seed, "excess"), init(seed, "init");
    const dynamics::NoiseSource sources[] = {
        {dynamics::thermal_force_psd(gamma, mass, cfg.environment.bath_temperature), &thermal},
        {cfg.environment.excess_force_psd, &excess},
    };
    dynamics::ParticleState state = dynamics::thermal_init(mass, omega0, t_ss, init);
    state.t = 0.0;

    CameraTrack tracks[] = {CameraTrack(cfg.in_loop, seed), CameraTrack(cfg.out_of_loop, seed)};
    CameraTrack& in_track = tracks[0];
    CameraTrack& out_track = tracks[1];
    CameraTrack& truth_track = cfg.out_of_loop.enabled ? out_track : in_track;

    // The controller runs whenever the in-loop camera does, so switching the
    // feedback off only zeroes the force and leaves the event sequence intact.
    std::optional<feedback::Controller> controller;
    if (cfg.in_loop.enabled) controller.emplace(fb, in_model.frame_period());
    std::deque<feedback::Actuation> pending;
    double force = 0.0;

    // Substep grid in integer ticks of the in-loop frame period.
    const auto substeps = static_cast<std::int64_t>(cfg.run.substeps_per_frame);
    const double sub_scale = static_cast<double>(in_model.fps.den) /
                             (static_cast<double>(in_model.fps.num) * static_cast<double>(substeps));
    std::int64_t next_sub = 1;

    const double duration = cfg.run.duration;
    const double coincide = 1e-12 * in_model.frame_period();
    const auto dump_limit = static_cast<std::size_t>(cfg.output.frame_dump_limit);
    double t = 0.0;

    try {
        while (t < duration) {
            const double t_sub = static_cast<double>(next_sub) * sub_scale;
            const double t_act = pending.empty() ? kInf : pending.front().t_actuate;
            double t_next = std::min({t_sub, t_act, in_track.next_time(), out_track.next_time(), duration});

            if (t_next - t > coincide) {
                const dynamics::Propagator prop(omega0, gamma, mass, t_next - t);
                state = dynamics::step(state, prop, force, sources);
            } else {
                t_next = std::max(t, t_next);
            }
            state.t = t_next;
            t = t_next;

            while (static_cast<double>(next_sub) * sub_scale <= t + coincide) ++next_sub;
            while (!pending.empty() && pending.front().t_actuate <= t + coincide) {
                force = pending.front().force;
                pending.pop_front();
            }

            for (CameraTrack* track : {&in_track, &out_track}) {
                if (!(track->next_time() <= t + coincide)) continue;
                const auto& cam = *track->section;
                const int n_sub = cam.model.blur_subsamples;
                if (track == &truth_track && track->sub == n_sub / 2) out.true_state.push_back(state);
                track->exposure_z.push_back(state.z);
                if (++track->sub < n_sub) continue;

                const auto policy = n_sub > 1 ? imaging::BlurPolicy::Average : imaging::BlurPolicy::Midpoint;
                const double z_render = imaging::motion_blur_position(policy, track->exposure_z);
                const double t_mid = cam.model.frame_mid_time(track->frame);
                imaging::Frame frame = imaging::render_frame(z_render, cam.model, track->shot, track->read, t_mid);
                auto& trace = track == &in_track ? out.in_loop : out.out_of_loop;
                const localization::PositionSample sample = localize(
                    frame, cam, track->calib, trace.empty() ? nullptr : &trace.back(), out.estimator_failures);
                trace.push_back(sample);
                if (track->dumped < dump_limit) {
                    out.dumped_frames.push_back(std::move(frame));
                    ++track->dumped;
                }

                if (track == &in_track && controller) {
                    feedback::Actuation act = controller->ingest_sample(sample);
                    if (act.t_actuate <= t + coincide) {
                        force = act.force;  // processing finished after the due time
                    } else {
                        pending.push_back(act);
                    }
                    out.telemetry.push_back(act);
                }
                track->exposure_z.clear();
                track->sub = 0;
                ++track->frame;
            }
        }
    } catch (const ParticleLost& e) {
        out.lost = true;
        out.loss_message = e.what();
    }
    if (controller) out.saturations = controller->saturation_count();
    return out;
}

RunAnalysis analyze_samples(const config::ExperimentConfig& cfg, const std::vector<localization::PositionSample>& samples,
                            double fs, double calib_coeff) {
    std::vector<double> z;
    z.reserve(samples.size());
    for (const auto& s : samples)
        if (s.t >= cfg.analysis.settle_time) z.push_back(s.z_est);
    RunAnalysis ra;
    ra.fs = fs;
    ra.psd = analysis::welch_psd(z, fs, cfg.analysis.welch);
    ra.estimate = analyze_psd(cfg, ra.psd, calib_coeff);
    return ra;
}

RunAnalysis analyze_run(const config::ExperimentConfig& cfg, const RunArtifacts& run, double calib_coeff) {
    if (cfg.out_of_loop.enabled) return analyze_samples(cfg, run.out_of_loop, cfg.out_of_loop.model.fps.value(), calib_coeff);
    return analyze_samples(cfg, run.in_loop, cfg.in_loop.model.fps.value(), calib_coeff);
}

analysis::TemperatureEstimate analyze_psd(const config::ExperimentConfig& cfg, const analysis::Psd& psd,
                                          double calib_coeff) {
    const double mass = cfg.particle.mass();
    // Uncalibrated: carry the area through with unit coefficient, then report
    // the mass-based temperature as t_eff.
    const double coeff = calib_coeff > 0.0 ? calib_coeff : 1.0;
    analysis::TemperatureEstimate est = analysis::analyze_peak(psd, coeff, cfg.analysis.peak, mass);
    if (!(calib_coeff > 0.0)) {
        est.calib_coeff = 0.0;
        est.t_eff = est.t_mass;
    }
    return est;
}

}  // namespace levicool::harness
