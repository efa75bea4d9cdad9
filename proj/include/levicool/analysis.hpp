#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace levicool::analysis {

enum class WindowKind { Hann, Rectangular };

std::string to_string(WindowKind w);
WindowKind parse_window(const std::string& s);

struct WelchParams {
    std::size_t segment_len = 1024;
    double overlap = 0.5;  // fraction of segment_len
    WindowKind window = WindowKind::Hann;
    bool detrend = true;   // subtract each segment's mean
};

/// One-sided PSD in m^2/Hz on a Hz grid.
struct Psd {
    std::vector<double> freqs;
    std::vector<double> values;
    double df = 0.0;
    double fs = 0.0;
    WindowKind window = WindowKind::Hann;
    std::size_t segment_len = 0;
    double overlap = 0.0;
    std::size_t n_segments = 0;

    /// Sum of values * df.
    double total_power() const;
};

/// Averaged modified periodogram, normalized so the summed PSD equals the
/// mean square of the (detrended) input.
Psd welch_psd(std::span<const double> trace, double fs, const WelchParams& params = {});

struct Band {
    double lo = 0.0;
    double hi = 0.0;
};

struct LorentzianFit {
    double center_hz = 0.0;
    double fwhm_hz = 0.0;
    double amplitude = 0.0;  // peak height above the floor
    double floor = 0.0;
    bool converged = false;
};

/// Fits S(f) = a / ((f0^2 - f^2)^2 + f^2 w^2) + c, the damped oscillator
/// line, over [search.lo, search.hi]. w is the full width at half maximum.
LorentzianFit fit_lorentzian(const Psd& psd, Band search);

/// center +- max(fwhm_multiple * fwhm, min_half_width), clipped to [0, fs/2].
Band integration_band(const Psd& psd, const LorentzianFit& fit, double fwhm_multiple = 25.0,
                      double min_half_width_hz = 5.0);

/// Median of the values outside `band`, 0 when nothing lies outside.
double noise_floor(const Psd& psd, Band band);

/// Trapezoidal integral of (values - noise floor) over the band, clamped >= 0.
double peak_area(const Psd& psd, Band band);

struct Calibration {
    double coeff = 0.0;    // K/m^2
    double t_room = 0.0;
    std::size_t n_references = 0;
    double spread = 0.0;   // (max - min) / mean of the reference areas
    bool spread_warning = false;
    std::string provenance;
};

Calibration calibrate_temperature(std::span<const double> reference_areas, double t_room,
                                  const std::string& provenance = "");

struct TemperatureEstimate {
    double t_eff = 0.0;
    double area = 0.0;
    Band band{};
    double calib_coeff = 0.0;
    double omega_cm = 0.0;
    double linewidth_hz = 0.0;
    double t_mass = std::numeric_limits<double>::quiet_NaN();  // m omega_cm^2 area / k_B
};

TemperatureEstimate effective_temperature(const Psd& psd, Band band, double calib_coeff, double omega_cm,
                                          double mass = std::numeric_limits<double>::quiet_NaN());

struct PeakAnalysis {
    double search_lo_hz = 5.0;
    double search_hi_hz = 60.0;
    double fwhm_multiple = 25.0;
    double min_half_width_hz = 5.0;
};

/// Fit, band selection and area in one call.
TemperatureEstimate analyze_peak(const Psd& psd, double calib_coeff, const PeakAnalysis& opts = {},
                                 double mass = std::numeric_limits<double>::quiet_NaN());

struct SweepRun {
    double param = 0.0;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    double area = 0.0;
    double t_eff = 0.0;
    double omega_cm = 0.0;
};

struct SweepRow {
    double param = 0.0;
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
    double area = 0.0;  // mean over successful seeds
    double t_eff = 0.0;
    double omega_cm = 0.0;
    double t_eff_sem = 0.0;
};

struct SweepSummary {
    std::vector<SweepRow> rows;  // sorted by param
    double argmin_param = std::numeric_limits<double>::quiet_NaN();
    double min_t_eff = std::numeric_limits<double>::quiet_NaN();
    double argmax_param = std::numeric_limits<double>::quiet_NaN();
    double max_t_eff = std::numeric_limits<double>::quiet_NaN();
    /// Indices of strict local minima of t_eff; wraps around when circular.
    std::vector<std::size_t> local_minima;
};

/// Groups runs by param and averages over seeds.
SweepSummary sweep_summary(std::span<const SweepRun> runs, bool circular = false);

}  // namespace levicool::analysis
