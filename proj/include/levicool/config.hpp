#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "levicool/analysis.hpp"
#include "levicool/dynamics.hpp"
#include "levicool/feedback.hpp"
#include "levicool/imaging.hpp"
#include "levicool/localization.hpp"

namespace levicool::config {

struct RunSection {
    double duration = 60.0;  // s
    std::uint64_t seed = 1;
    int substeps_per_frame = 16;  // physics steps per in-loop frame
};

struct CameraSection {
    bool enabled = true;
    imaging::CameraModel model{};
    localization::EstimatorSpec estimator{};
};

struct FeedbackSection {
    feedback::FeedbackConfig chain{};
    double geometry_factor = 0.25;
    /// Frame midpoint to actuation, as a phase at omega0 (latency included).
    /// NaN keeps the explicit coarse/fine delay.
    double delay_phase_deg = std::numeric_limits<double>::quiet_NaN();
    /// Filter lag at omega0; NaN keeps the explicit cutoff.
    double filter_phase_deg = std::numeric_limits<double>::quiet_NaN();
    /// Position mapped to full DAC swing; NaN uses the in-loop ROI half-height.
    double full_scale_m = std::numeric_limits<double>::quiet_NaN();
};

struct AnalysisSection {
    analysis::WelchParams welch{};
    analysis::PeakAnalysis peak{};
    double settle_time = 1.0;  // s dropped from the start of each trace
    double t_room = 300.0;
    double reference_pressure_mbar = 1e-2;
    int reference_seeds = 4;
};

/// Grid text: "a:b:step" (inclusive), "log:a:b:n", or a comma list.
std::vector<double> parse_grid(const std::string& text);

struct SweepSection {
    std::string phase_grid_deg = "0:345:15";
    std::string gain_grid = "log:0.01:1:9";
    std::string pressure_grid_mbar = "1e-5,1e-4,1e-3,1e-2,1e-1,1";
    int seeds_per_point = 4;
    int workers = 0;  // 0 = hardware concurrency
    bool feedback_off = true;  // run the feedback-off reference alongside
};

struct OutputSection {
    std::string dir = "runs/default";
    bool save_traces = true;
    int frame_dump_limit = 0;  // frames per camera written as CSV grids
};

struct ExperimentConfig {
    RunSection run{};
    dynamics::ParticleProps particle{};
    dynamics::TrapConfig trap{};
    dynamics::Environment environment{};
    CameraSection in_loop{};
    CameraSection out_of_loop{};
    FeedbackSection feedback{};
    AnalysisSection analysis{};
    SweepSection sweep{};
    OutputSection output{};

    /// The repository defaults.
    static ExperimentConfig defaults();
    void validate() const;
};

ExperimentConfig parse_ini(const std::string& text);
ExperimentConfig load_file(const std::filesystem::path& path);
/// Every key, in a fixed order; parse_ini(to_ini(c)) reproduces c.
std::string to_ini(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// Feedback chain with delay, cutoff, force coefficient and full scale
/// resolved against the trap and cameras.
feedback::FeedbackConfig resolve_feedback(const ExperimentConfig& cfg);

}  // namespace levicool::config
