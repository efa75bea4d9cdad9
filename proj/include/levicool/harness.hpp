#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "levicool/analysis.hpp"
#include "levicool/config.hpp"
#include "levicool/dynamics.hpp"
#include "levicool/feedback.hpp"
#include "levicool/localization.hpp"

namespace levicool::harness {

std::string code_version();

struct RunMetadata {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string version;
    std::string master_clock_hz;  // exact least common multiple of the camera rates
    double mass = 0.0;
    double gamma = 0.0;
    double steady_state_temperature = 0.0;
    feedback::FeedbackConfig feedback{};
    feedback::LoopPrediction prediction{};
};

struct RunArtifacts {
    /// True state at each out-of-loop exposure midpoint (in-loop if that
    /// camera is disabled).
    std::vector<dynamics::ParticleState> true_state;
    std::vector<localization::PositionSample> in_loop;
    std::vector<localization::PositionSample> out_of_loop;
    std::vector<feedback::Actuation> telemetry;
    std::vector<imaging::Frame> dumped_frames;
    RunMetadata metadata;
    bool lost = false;
    std::string loss_message;
    std::size_t estimator_failures = 0;
    std::size_t saturations = 0;
};

/// Deterministic closed-loop run. A ParticleLost ends the run early with
/// partial artifacts and `lost` set.
RunArtifacts run_closed_loop(const config::ExperimentConfig& cfg);

struct RunAnalysis {
    analysis::Psd psd;
    analysis::TemperatureEstimate estimate;  // t_eff is meaningful once calibrated
    double fs = 0.0;
};

/// PSD of the out-of-loop estimates (in-loop when absent) after the settle
/// time, peak fit, band and area. t_eff uses `calib_coeff` when positive and
/// the mass-based value otherwise.
RunAnalysis analyze_samples(const config::ExperimentConfig& cfg, const std::vector<localization::PositionSample>& samples,
                            double fs, double calib_coeff = 0.0);
RunAnalysis analyze_run(const config::ExperimentConfig& cfg, const RunArtifacts& run, double calib_coeff = 0.0);

/// Re-analysis of a stored PSD.
analysis::TemperatureEstimate analyze_psd(const config::ExperimentConfig& cfg, const analysis::Psd& psd,
                                          double calib_coeff = 0.0);

// ---- artifact I/O

void write_run(const std::filesystem::path& dir, const config::ExperimentConfig& cfg, const RunArtifacts& run,
               const RunAnalysis* analysis, bool traces = true);
void write_psd_csv(const std::filesystem::path& path, const analysis::Psd& psd);
analysis::Psd read_psd_csv(const std::filesystem::path& path);
std::vector<localization::PositionSample> read_samples_csv(const std::filesystem::path& path);

// ---- sweeps

enum class SweepAxis { Phase, Gain, Pressure };
SweepAxis parse_axis(const std::string& s);
std::string to_string(SweepAxis axis);

/// Config of one sweep point: the axis value applied to the base.
config::ExperimentConfig apply_axis(config::ExperimentConfig cfg, SweepAxis axis, double value);

/// Seed of the i-th member of a paired seed family.
std::uint64_t family_seed(std::uint64_t root, const std::string& family, int index);

struct SweepRecord {
    std::string group;  // "feedback_on", "feedback_off" or "reference"
    double param = 0.0;
    int seed_index = 0;
    std::uint64_t seed = 0;
    std::string path;  // relative to the sweep directory
    bool ok = true;
    bool lost = false;
    std::string error;
    double area = 0.0;
    double omega_cm = 0.0;
    double linewidth_hz = 0.0;
    double t_mass = 0.0;
    double t_eff = 0.0;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::Phase;
    std::vector<double> grid;
    std::vector<SweepRecord> records;
    analysis::Calibration calibration;
    analysis::SweepSummary feedback_on;
    analysis::SweepSummary feedback_off;
};

struct SweepOptions {
    int workers = 0;            // 0: LEVICOOL_WORKERS, then [sweep] workers, then hardware
    bool save_traces = false;   // full traces per run (large)
    std::optional<std::vector<double>> grid;  // overrides the config grid
};

int resolve_workers(const config::ExperimentConfig& cfg, int requested);

/// Runs every (point, seed) plus feedback-off and calibration references,
/// writes per-run PSDs and the summaries into `dir`.
SweepResult run_sweep(const config::ExperimentConfig& base, SweepAxis axis, const std::filesystem::path& dir,
                      const SweepOptions& opts = {});

/// Recomputes calibration and temperatures from the PSDs in a sweep directory.
SweepResult analyze_sweep_dir(const std::filesystem::path& dir);

void write_sweep_tables(const std::filesystem::path& dir, const SweepResult& result);

}  // namespace levicool::harness
