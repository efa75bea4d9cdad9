#include <fmt/format.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numbers>

#include "levicool/config.hpp"
#include "levicool/errors.hpp"
#include "levicool/harness.hpp"
#include "levicool/imaging.hpp"
#include "levicool/localization.hpp"
#include "levicool/rng.hpp"

namespace fs = std::filesystem;
using namespace levicool;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kParticleLost = 3;

config::ExperimentConfig load_or_default(const std::string& path) {
    return path.empty() ? config::ExperimentConfig::defaults() : config::load_file(path);
}

void print_estimate(const analysis::TemperatureEstimate& e, bool calibrated) {
    fmt::print("omega_cm/2pi = {:.4f} Hz, linewidth = {:.4g} Hz, band = [{:.3f}, {:.3f}] Hz\n",
               e.omega_cm / (2.0 * std::numbers::pi), e.linewidth_hz, e.band.lo, e.band.hi);
    fmt::print("area = {:.6g} m^2, T (mass-based) = {:.4g} K", e.area, e.t_mass);
    if (calibrated) fmt::print(", T_eff (calibrated) = {:.4g} K", e.t_eff);
    fmt::print("\n");
}

int cmd_validate(const std::string& path) {
    const auto cfg = config::load_file(path);
    const auto fb = config::resolve_feedback(cfg);
    const double mass = cfg.particle.mass();
    const auto pred = feedback::predicted_effective_damping(fb, cfg.trap.omega0, mass, cfg.in_loop.model.frame_period());
    const double gamma = dynamics::gas_damping_rate(cfg.environment, cfg.particle);
    fmt::print("config ok (hash {:016x})\n", config::config_hash(cfg));
    fmt::print("mass = {:.5g} kg, gamma = {:.5g} 1/s, steady-state T = {:.4g} K\n", mass, gamma,
               dynamics::steady_state_temperature(cfg.environment, cfg.particle));
    fmt::print("delay = {} frames + {:.4g} s fine + {:.4g} s latency; filter cutoff = {:.4g} Hz\n",
               fb.coarse_delay_frames, fb.fine_delay, fb.latency, fb.filter.cutoff_hz);
    fmt::print("predicted loop phase = {:.1f} deg, feedback damping = {:.4g} 1/s\n",
               pred.total_phase * 180.0 / std::numbers::pi, pred.damping_rate);
    if (cfg.trap.outside_typical_band())
        fmt::print(stderr, "warning: f0 = {} Hz is outside the typical 20-40 Hz range\n", cfg.trap.f0());
    return kOk;
}

int cmd_simulate(const std::string& path, std::string out_dir, std::optional<std::uint64_t> seed,
                 std::optional<double> duration, bool no_traces) {
    auto cfg = config::load_file(path);
    if (seed) cfg.run.seed = *seed;
    if (duration) cfg.run.duration = *duration;
    cfg.validate();
    if (out_dir.empty()) out_dir = cfg.output.dir;

    const auto run = harness::run_closed_loop(cfg);
    std::optional<harness::RunAnalysis> ra;
    if (!run.lost) {
        try {
            ra = harness::analyze_run(cfg, run);
        } catch (const Error& e) {
            fmt::print(stderr, "warning: no PSD analysis: {}\n", e.what());
        }
    }
    harness::write_run(out_dir, cfg, run, ra ? &*ra : nullptr, cfg.output.save_traces && !no_traces);
    fmt::print("wrote {}\n", out_dir);
    if (ra) print_estimate(ra->estimate, false);
    if (run.lost) {
        fmt::print(stderr, "{}\n", run.loss_message);
        return kParticleLost;
    }
    return kOk;
}

int cmd_sweep(const std::string& path, const std::string& axis_name, std::string out_dir, int workers, bool traces,
              int seeds) {
    auto cfg = config::load_file(path);
    if (seeds > 0) cfg.sweep.seeds_per_point = seeds;
    const auto axis = harness::parse_axis(axis_name);
    if (out_dir.empty()) out_dir = cfg.output.dir + "_" + axis_name;
    harness::SweepOptions opts;
    opts.workers = workers;
    opts.save_traces = traces;
    const auto res = harness::run_sweep(cfg, axis, out_dir, opts);
    fmt::print("wrote {} (calibration {:.6g} K/m^2 from {} references{})\n", out_dir, res.calibration.coeff,
               res.calibration.n_references, res.calibration.spread_warning ? ", spread > 10%" : "");
    auto show = [](const char* name, const analysis::SweepSummary& s) {
        if (s.rows.empty()) return;
        fmt::print("{}:\n", name);
        for (const auto& r : s.rows)
            fmt::print("  {:>12.6g}  T_eff = {:>10.4g} K  ({} ok, {} failed)\n", r.param, r.t_eff, r.n_ok, r.n_failed);
    };
    show("feedback on", res.feedback_on);
    show("feedback off", res.feedback_off);
    std::size_t failed = 0;
    for (const auto& r : res.records) failed += r.ok ? 0 : 1;
    if (failed) fmt::print(stderr, "{} run(s) failed; see runs.csv\n", failed);
    return kOk;
}

int cmd_analyze(const std::string& dir, double calib) {
    if (fs::exists(fs::path(dir) / "runs.csv")) {
        const auto res = harness::analyze_sweep_dir(dir);
        harness::write_sweep_tables(dir, res);
        fmt::print("re-analyzed sweep {} (calibration {:.6g} K/m^2)\n", dir, res.calibration.coeff);
        for (const auto& r : res.feedback_on.rows) fmt::print("  on  {:>12.6g}  {:>10.4g} K\n", r.param, r.t_eff);
        for (const auto& r : res.feedback_off.rows) fmt::print("  off {:>12.6g}  {:>10.4g} K\n", r.param, r.t_eff);
        return kOk;
    }
    const fs::path run_dir(dir);
    const auto cfg = config::load_file(run_dir / "config.ini");
    const bool out_loop = fs::exists(run_dir / "out_of_loop.csv") && cfg.out_of_loop.enabled;
    const auto samples = harness::read_samples_csv(run_dir / (out_loop ? "out_of_loop.csv" : "in_loop.csv"));
    const double fs_hz = (out_loop ? cfg.out_of_loop : cfg.in_loop).model.fps.value();
    const auto ra = harness::analyze_samples(cfg, samples, fs_hz, calib);
    harness::write_psd_csv(run_dir / "psd.csv", ra.psd);
    const auto& e = ra.estimate;
    nlohmann::ordered_json j = {{"source", out_loop ? "out_of_loop" : "in_loop"},
                                {"area_m2", e.area},
                                {"band_hz", {e.band.lo, e.band.hi}},
                                {"omega_cm_rad_s", e.omega_cm},
                                {"linewidth_hz", e.linewidth_hz},
                                {"t_mass_k", e.t_mass},
                                {"calib_coeff_k_per_m2", e.calib_coeff},
                                {"t_eff_k", e.t_eff}};
    std::ofstream(run_dir / "analysis.json") << j.dump(2) << "\n";
    print_estimate(e, calib > 0.0);
    return kOk;
}

int cmd_calibrate_pixels(const std::string& path, double shift_px, int n_frames, std::uint64_t seed) {
    const auto cfg = load_or_default(path);
    const auto& cam = cfg.out_of_loop.model;
    const auto nominal = localization::PixelCalibration::from_camera(cam);
    const double shift_m = shift_px * nominal.meters_per_pixel;
    Rng shot(seed, "calibrate/shot"), read(seed, "calibrate/read");
    std::vector<imaging::Frame> before, after;
    const double z0 = -0.5 * shift_m;
    for (int i = 0; i < n_frames; ++i) {
        before.push_back(imaging::render_frame(z0, cam, shot, read, i * cam.frame_period()));
        after.push_back(imaging::render_frame(z0 + shift_m, cam, shot, read, i * cam.frame_period()));
    }
    const auto cal = localization::calibrate_pixels(before, after, shift_m, nominal);
    fmt::print("meters_per_pixel = {:.6g} m (nominal {:.6g} m, error {:+.3f}%)\n", cal.meters_per_pixel,
               nominal.meters_per_pixel, 100.0 * (cal.meters_per_pixel / nominal.meters_per_pixel - 1.0));
    return kOk;
}

int cmd_bench(const std::string& path, int n_frames, const std::string& csv_out, std::uint64_t seed) {
    const auto cfg = load_or_default(path);
    const auto& cam = cfg.out_of_loop.model;
    const auto calib = localization::PixelCalibration::from_camera(cam);
    Rng pos(seed, "bench/position"), shot(seed, "bench/shot"), read(seed, "bench/read");
    std::vector<localization::BenchFrame> frames;
    frames.reserve(static_cast<std::size_t>(n_frames));
    const double span = 0.25 * cam.roi_height * calib.meters_per_pixel;
    for (int i = 0; i < n_frames; ++i) {
        const double z = (2.0 * pos.uniform() - 1.0) * span;
        frames.push_back({imaging::render_frame(z, cam, shot, read, i * cam.frame_period()), z});
    }
    const auto rows = localization::benchmark_estimators(frames, calib, cfg.out_of_loop.estimator);
    std::string table = "estimator,rms_error_m,mean_cost_s,cost_ratio_vs_peak\n";
    for (const auto& r : rows)
        table += fmt::format("{},{},{},{}\n", r.estimator, r.rms_error_m, r.mean_cost_s, r.cost_ratio_vs_peak);
    fmt::print("{}", table);
    if (!csv_out.empty()) {
        std::ofstream os(csv_out, std::ios::binary);
        if (!os) throw Error("cannot write '" + csv_out + "'");
        os << table;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Closed-loop simulator of camera-based feedback cooling of a trapped nanoparticle"};
    app.require_subcommand(1);

    std::string config_path, out_dir, axis, run_dir, csv_out;
    std::optional<std::uint64_t> seed;
    std::optional<double> duration;
    bool no_traces = false, save_traces = false;
    int workers = 0, seeds = 0, n_frames = 1000, calib_frames = 10;
    double calib = 0.0, shift_px = 3.0;
    std::uint64_t tool_seed = 1;

    auto* sim = app.add_subcommand("simulate", "run one closed-loop experiment");
    sim->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
    sim->add_option("-o,--out", out_dir, "run directory (default: [output] dir)");
    sim->add_option("--seed", seed, "override [run] seed");
    sim->add_option("--duration", duration, "override [run] duration_s");
    sim->add_flag("--no-traces", no_traces, "write only config, metadata and PSD");

    auto* sweep = app.add_subcommand("sweep", "sweep delay phase, gain or pressure");
    sweep->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--axis", axis, "phase | gain | pressure")
        ->required()
        ->check(CLI::IsMember({"phase", "gain", "pressure"}));
    sweep->add_option("-o,--out", out_dir, "sweep directory (default: [output] dir + _axis)");
    sweep->add_option("-j,--workers", workers, "parallel runs (default: LEVICOOL_WORKERS or [sweep] workers)");
    sweep->add_option("--seeds", seeds, "override [sweep] seeds_per_point");
    sweep->add_flag("--save-traces", save_traces, "keep full traces for every run");

    auto* analyze = app.add_subcommand("analyze", "PSD thermometry of a run or sweep directory");
    analyze->add_option("dir", run_dir, "run or sweep directory")->required()->check(CLI::ExistingDirectory);
    analyze->add_option("--calib", calib, "calibration coefficient in K/m^2 (run directories only)");

    auto* calpx = app.add_subcommand("calibrate-pixels", "recover the pixel scale from a known translation");
    calpx->add_option("-c,--config", config_path, "config file (default: built-in)")->check(CLI::ExistingFile);
    calpx->add_option("--shift-px", shift_px, "stage translation in nominal pixels");
    calpx->add_option("--frames", calib_frames, "frames averaged on each side")->check(CLI::PositiveNumber);
    calpx->add_option("--seed", tool_seed, "random seed");

    auto* bench = app.add_subcommand("bench-estimators", "cost and accuracy of the three estimators");
    bench->add_option("-c,--config", config_path, "config file (default: built-in)")->check(CLI::ExistingFile);
    bench->add_option("--frames", n_frames, "number of frames")->check(CLI::PositiveNumber);
    bench->add_option("--csv", csv_out, "also write the table here");
    bench->add_option("--seed", tool_seed, "random seed");

    auto* validate = app.add_subcommand("validate", "check a config file");
    validate->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*sim) return cmd_simulate(config_path, out_dir, seed, duration, no_traces);
        if (*sweep) return cmd_sweep(config_path, axis, out_dir, workers, save_traces, seeds);
        if (*analyze) return cmd_analyze(run_dir, calib);
        if (*calpx) return cmd_calibrate_pixels(config_path, shift_px, calib_frames, tool_seed);
        if (*bench) return cmd_bench(config_path, n_frames, csv_out, tool_seed);
        if (*validate) return cmd_validate(config_path);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kConfigError;
    } catch (const ParticleLost& e) {
        fmt::print(stderr, "{}\n", e.what());
        return kParticleLost;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kRuntimeError;
    }
    return kRuntimeError;
}
