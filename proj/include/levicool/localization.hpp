#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "levicool/errors.hpp"
#include "levicool/grid.hpp"
#include "levicool/imaging.hpp"

namespace levicool::localization {

using imaging::Frame;

/// Object-plane pixel scale and the pixel coordinate mapped to zero.
struct PixelCalibration {
    double meters_per_pixel = 5.35e-6;
    double origin_row = 0.0;
    double origin_col = 0.0;

    static PixelCalibration from_camera(const imaging::CameraModel& camera);
    void validate() const;
    double z_m(double row) const { return (row - origin_row) * meters_per_pixel; }
    double x_m(double col) const { return (col - origin_col) * meters_per_pixel; }
};

enum class EstimatorKind { Peak, Centroid, GaussianFit };

struct BackgroundPolicy {
    enum class Kind { None, SubtractConstant, Threshold };
    Kind kind = Kind::None;
    /// Threshold in counts; NaN selects border median + 5 robust sigma.
    double threshold = std::numeric_limits<double>::quiet_NaN();

    std::string str() const;
    static BackgroundPolicy parse(const std::string& text);
};

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::Centroid;
    int power = 1;  // centroid exponent
    BackgroundPolicy background{};

    /// Tag written into traces: "peak", "centroid_p3", "gaussian_fit".
    std::string tag() const;
};

struct PositionSample {
    double z_est = 0.0;  // m
    double x_est = 0.0;  // m
    double t = 0.0;      // s, frame midpoint
    std::string estimator;
    /// Total signal counts that entered the estimate.
    double quality = 0.0;
};

/// Median of the outermost ring of pixels.
double border_median(const Grid<std::uint32_t>& counts);

/// Applies the background policy; the result is non-negative.
Grid<double> apply_background(const Frame& frame, const BackgroundPolicy& policy);

/// Brightest pixel; ties go to the first one in row-major order.
PositionSample peak_detect(const Frame& frame, const PixelCalibration& calib);

/// Intensity-weighted mean pixel coordinate with weights I^p.
PositionSample centroid(const Frame& frame, int power, const PixelCalibration& calib,
                        const BackgroundPolicy& policy = {});

struct GaussianFit {
    PositionSample sample;
    double center_row = 0.0;
    double center_col = 0.0;
    double sigma_px = 0.0;
    double amplitude = 0.0;
    double offset = 0.0;
    int iterations = 0;
};

class FitFailed : public Error {
public:
    FitFailed(const std::string& what, GaussianFit best) : Error(what), best_(std::move(best)) {}
    const GaussianFit& best_iterate() const { return best_; }

private:
    GaussianFit best_;
};

class DegenerateFit : public Error {
public:
    using Error::Error;
};

/// Least-squares fit of A exp(-r^2 / 2 sigma^2) + B, started from the p = 1
/// background-subtracted centroid.
GaussianFit gaussian_fit(const Frame& frame, const PixelCalibration& calib);

/// Runs one configured estimator.
PositionSample estimate(const Frame& frame, const EstimatorSpec& spec, const PixelCalibration& calib);

/// meters_per_pixel = known_shift / mean fitted displacement between two
/// stacks of frames of the same static scene.
PixelCalibration calibrate_pixels(std::span<const Frame> before, std::span<const Frame> after, double known_shift,
                                  const PixelCalibration& nominal);

struct BenchRow {
    std::string estimator;
    double rms_error_m = 0.0;
    double mean_cost_s = 0.0;
    double cost_ratio_vs_peak = 0.0;
};

struct BenchFrame {
    Frame frame;
    double z_true = 0.0;
};

/// Wall time per frame and RMS error against ground truth for peak detection,
/// the given centroid and the Gaussian fit.
std::vector<BenchRow> benchmark_estimators(std::span<const BenchFrame> frames, const PixelCalibration& calib,
                                           const EstimatorSpec& centroid_spec);

}  // namespace levicool::localization
