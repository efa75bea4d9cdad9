#include "levicool/localization.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>

#include "levicool/levmar.hpp"

namespace levicool::localization {

PixelCalibration PixelCalibration::from_camera(const imaging::CameraModel& camera) {
    return {camera.meters_per_pixel(), camera.origin_row(), camera.origin_col()};
}

void PixelCalibration::validate() const {
    if (!(meters_per_pixel > 0.0) || !std::isfinite(meters_per_pixel))
        throw ConfigError("meters_per_pixel must be > 0");
}

std::string BackgroundPolicy::str() const {
    switch (kind) {
        case Kind::None: return "none";
        case Kind::SubtractConstant: return "subtract";
        case Kind::Threshold:
            return std::isnan(threshold) ? "threshold" : "threshold:" + std::to_string(threshold);
    }
    return "none";
}

BackgroundPolicy BackgroundPolicy::parse(const std::string& text) {
    if (text == "none") return {Kind::None};
    if (text == "subtract") return {Kind::SubtractConstant};
    if (text == "threshold" || text == "threshold:auto") return {Kind::Threshold};
    if (text.rfind("threshold:", 0) == 0) {
        char* end = nullptr;
        const std::string num = text.substr(10);
        const double v = std::strtod(num.c_str(), &end);
        if (end == num.c_str() || *end != '\0' || !(v >= 0.0)) throw ConfigError("bad threshold in '" + text + "'");
        return {Kind::Threshold, v};
    }
    throw ConfigError("unknown background policy '" + text + "' (none|subtract|threshold[:counts])");
}

std::string EstimatorSpec::tag() const {
    switch (kind) {
        case EstimatorKind::Peak: return "peak";
        case EstimatorKind::Centroid: return "centroid_p" + std::to_string(power);
        case EstimatorKind::GaussianFit: return "gaussian_fit";
    }
    return "unknown";
}

namespace {

std::vector<double> border_values(const Grid<std::uint32_t>& counts) {
    std::vector<double> ring;
    const int w = counts.width(), h = counts.height();
    ring.reserve(static_cast<std::size_t>(2 * (w + h)));
    for (int c = 0; c < w; ++c) {
        ring.push_back(counts(0, c));
        ring.push_back(counts(h - 1, c));
    }
    for (int r = 1; r + 1 < h; ++r) {
        ring.push_back(counts(r, 0));
        ring.push_back(counts(r, w - 1));
    }
    return ring;
}

double median_inplace(std::vector<double>& v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
    return m;
}

void require_nonempty(const Frame& frame) {
    if (frame.counts.empty()) throw LowSignal("empty frame");
}

}  // namespace

double border_median(const Grid<std::uint32_t>& counts) {
    auto ring = border_values(counts);
    return median_inplace(ring);
}

Grid<double> apply_background(const Frame& frame, const BackgroundPolicy& policy) {
    const auto& counts = frame.counts;
    Grid<double> out(counts.width(), counts.height());
    auto dst = out.values();
    const auto src = counts.values();
    if (policy.kind == BackgroundPolicy::Kind::None) {
        std::copy(src.begin(), src.end(), dst.begin());
        return out;
    }
    auto ring = border_values(counts);
    const double level = median_inplace(ring);
    if (policy.kind == BackgroundPolicy::Kind::SubtractConstant) {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::max(src[i] - level, 0.0);
        return out;
    }
    double tau = policy.threshold;
    if (std::isnan(tau)) {
        for (double& x : ring) x = std::abs(x - level);
        const double mad = median_inplace(ring);
        const double sigma = std::max(1.4826 * mad, std::sqrt(std::max(level, 1.0)));
        tau = level + 5.0 * sigma;
    }
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > tau ? src[i] - level : 0.0;
    return out;
}

PositionSample peak_detect(const Frame& frame, const PixelCalibration& calib) {
    require_nonempty(frame);
    const auto& counts = frame.counts;
    const auto vals = counts.values();
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    if (*lo == *hi) throw LowSignal("peak detection on a flat frame");
    // max_element returns the first maximum, i.e. lowest row then lowest column.
    const auto idx = static_cast<int>(std::max_element(vals.begin(), vals.end()) - vals.begin());
    const int row = idx / counts.width();
    const int col = idx % counts.width();
    return {calib.z_m(row), calib.x_m(col), frame.t_mid, "peak", static_cast<double>(*hi)};
}

PositionSample centroid(const Frame& frame, int power, const PixelCalibration& calib, const BackgroundPolicy& policy) {
    require_nonempty(frame);
    if (power < 1) throw ConfigError("centroid power must be a positive integer");
    const Grid<double> img = apply_background(frame, policy);
    double sw = 0.0, swr = 0.0, swc = 0.0, signal = 0.0;
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            const double i = img(r, c);
            double w = i;
            for (int k = 1; k < power; ++k) w *= i;
            sw += w;
            swr += w * r;
            swc += w * c;
            signal += i;
        }
    }
    if (!(sw > 0.0)) throw LowSignal("centroid denominator is zero");
    return {calib.z_m(swr / sw), calib.x_m(swc / sw), frame.t_mid, "centroid_p" + std::to_string(power), signal};
}

GaussianFit gaussian_fit(const Frame& frame, const PixelCalibration& calib) {
    require_nonempty(frame);
    const auto& counts = frame.counts;
    const int w = counts.width(), h = counts.height();

    const PositionSample init = centroid(frame, 1, calib, {BackgroundPolicy::Kind::SubtractConstant});
    const double offset0 = border_median(counts);
    const auto vals = counts.values();
    const double peak = *std::max_element(vals.begin(), vals.end());

    Eigen::VectorXd p(5);
    // amplitude, row, col, sigma, offset
    p << std::max(peak - offset0, 1.0), init.z_est / calib.meters_per_pixel + calib.origin_row,
        init.x_est / calib.meters_per_pixel + calib.origin_col, 1.5, offset0;

    auto model = [&](const Eigen::VectorXd& q, Eigen::VectorXd& res, Eigen::MatrixXd* jac) {
        const double amp = q[0], r0 = q[1], c0 = q[2], s = q[3], off = q[4];
        const double inv_s2 = 1.0 / (s * s);
        res.resize(w * h);
        if (jac) jac->resize(w * h, 5);
        Eigen::Index k = 0;
        for (int r = 0; r < h; ++r) {
            const double dr = r - r0;
            for (int c = 0; c < w; ++c, ++k) {
                const double dc = c - c0;
                const double d2 = dr * dr + dc * dc;
                const double g = std::exp(-0.5 * d2 * inv_s2);
                res[k] = amp * g + off - counts(r, c);
                if (jac) {
                    (*jac)(k, 0) = g;
                    (*jac)(k, 1) = amp * g * dr * inv_s2;
                    (*jac)(k, 2) = amp * g * dc * inv_s2;
                    (*jac)(k, 3) = amp * g * d2 * inv_s2 / s;
                    (*jac)(k, 4) = 1.0;
                }
            }
        }
    };

    const LmResult lm = levenberg_marquardt(model, p);
    GaussianFit fit;
    fit.center_row = lm.params[1];
    fit.center_col = lm.params[2];
    fit.sigma_px = std::abs(lm.params[3]);
    fit.amplitude = lm.params[0];
    fit.offset = lm.params[4];
    fit.iterations = lm.iterations;
    fit.sample = {calib.z_m(fit.center_row), calib.x_m(fit.center_col), frame.t_mid, "gaussian_fit",
                  fit.amplitude * 2.0 * 3.14159265358979323846 * fit.sigma_px * fit.sigma_px};
    if (fit.sigma_px < 0.3) throw DegenerateFit("fitted PSF width collapsed below 0.3 px");
    if (!lm.converged || !std::isfinite(lm.cost)) throw FitFailed("gaussian fit did not converge", fit);
    return fit;
}

PositionSample estimate(const Frame& frame, const EstimatorSpec& spec, const PixelCalibration& calib) {
    switch (spec.kind) {
        case EstimatorKind::Peak: return peak_detect(frame, calib);
        case EstimatorKind::Centroid: return centroid(frame, spec.power, calib, spec.background);
        case EstimatorKind::GaussianFit: return gaussian_fit(frame, calib).sample;
    }
    throw ConfigError("unknown estimator");
}

PixelCalibration calibrate_pixels(std::span<const Frame> before, std::span<const Frame> after, double known_shift,
                                  const PixelCalibration& nominal) {
    if (before.empty() || after.empty()) throw InsufficientData("pixel calibration needs frames on both sides");
    if (!(known_shift > 0.0)) throw ConfigError("known shift must be > 0");
    const PixelCalibration unit{1.0, 0.0, 0.0};
    auto mean_center = [&](std::span<const Frame> frames) {
        double r = 0.0, c = 0.0;
        for (const Frame& f : frames) {
            const GaussianFit fit = gaussian_fit(f, unit);
            r += fit.center_row;
            c += fit.center_col;
        }
        const auto n = static_cast<double>(frames.size());
        return std::pair{r / n, c / n};
    };
    const auto [r0, c0] = mean_center(before);
    const auto [r1, c1] = mean_center(after);
    const double shift_px = std::hypot(r1 - r0, c1 - c0);
    if (shift_px < 0.5) throw InsufficientShift("calibration shift below 0.5 px");
    PixelCalibration out = nominal;
    out.meters_per_pixel = known_shift / shift_px;
    return out;
}

std::vector<BenchRow> benchmark_estimators(std::span<const BenchFrame> frames, const PixelCalibration& calib,
                                           const EstimatorSpec& centroid_spec) {
    if (frames.empty()) throw InsufficientData("benchmark needs frames");
    const std::vector<EstimatorSpec> specs = {
        {EstimatorKind::Peak, 1, {}}, centroid_spec, {EstimatorKind::GaussianFit, 1, {}}};
    std::vector<BenchRow> rows;
    std::vector<PositionSample> out(frames.size());
    for (const EstimatorSpec& spec : specs) {
        std::vector<char> ok(frames.size(), 1);
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < frames.size(); ++i) {
            try {
                out[i] = estimate(frames[i].frame, spec, calib);
            } catch (const FitFailed& e) {
                out[i] = e.best_iterate().sample;
            } catch (const Error&) {
                ok[i] = 0;
            }
        }
        const auto t1 = std::chrono::steady_clock::now();
        double se = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (!ok[i]) continue;
            const double e = out[i].z_est - frames[i].z_true;
            se += e * e;
            ++n;
        }
        BenchRow row;
        row.estimator = spec.tag();
        row.rms_error_m = n ? std::sqrt(se / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN();
        row.mean_cost_s = std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(frames.size());
        rows.push_back(row);
    }
    for (auto& row : rows) row.cost_ratio_vs_peak = row.mean_cost_s / rows.front().mean_cost_s;
    return rows;
}

}  // namespace levicool::localization
