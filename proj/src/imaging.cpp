#include "levicool/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>
#include <vector>

#include <boost/random/poisson_distribution.hpp>

#include "levicool/errors.hpp"

namespace levicool::imaging {

std::string to_string(CameraRole role) { return role == CameraRole::InLoop ? "in_loop" : "out_of_loop"; }

void CameraModel::validate() const {
    if (!(pixel_pitch > 0.0)) throw ConfigError(label() + ": pixel_pitch must be > 0");
    if (!(magnification > 0.0)) throw ConfigError(label() + ": magnification must be > 0");
    if (roi_width < 3 || roi_height < 3) throw ConfigError(label() + ": ROI dimensions must be >= 3");
    if (!(psf_sigma_px >= 0.5)) throw ConfigError(label() + ": psf_sigma_px must be >= 0.5");
    if (!(photons_per_frame > 0.0)) throw ConfigError(label() + ": photons_per_frame must be > 0");
    if (background_per_px < 0.0 || read_noise_rms < 0.0) throw ConfigError(label() + ": noise levels must be >= 0");
    if (!(exposure > 0.0 && exposure <= 1.0)) throw ConfigError(label() + ": exposure fraction must be in (0, 1]");
    if (blur_subsamples < 1) throw ConfigError(label() + ": blur_subsamples must be >= 1");
}

double CameraModel::frame_mid_time(std::int64_t k) const {
    return (static_cast<double>(k) + 0.5 * exposure) * static_cast<double>(fps.den) / static_cast<double>(fps.num);
}

double CameraModel::subsample_time(std::int64_t k, int i) const {
    const double offset = exposure * (i + 0.5) / blur_subsamples;
    return (static_cast<double>(k) + offset) * static_cast<double>(fps.den) / static_cast<double>(fps.num);
}

namespace {

// Fraction of a unit 1-D Gaussian of width sigma centered at c falling in pixel j.
std::vector<double> pixel_mass(int n, double center, double sigma) {
    std::vector<double> out(static_cast<std::size_t>(n));
    const double scale = 1.0 / (std::sqrt(2.0) * sigma);
    for (int j = 0; j < n; ++j) {
        out[static_cast<std::size_t>(j)] =
            0.5 * (std::erf((j + 0.5 - center) * scale) - std::erf((j - 0.5 - center) * scale));
    }
    return out;
}

}  // namespace

ExpectedImage expected_image(double z_true, const CameraModel& camera) {
    ExpectedImage img;
    img.center_row = camera.center_row(z_true);
    img.center_col = camera.origin_col();
    const double reach = 3.0 * camera.psf_sigma_px;
    if (!std::isfinite(img.center_row) || img.center_row < -0.5 - reach ||
        img.center_row > camera.roi_height - 0.5 + reach)
        throw ParticleLost(camera.label(), img.center_row);
    img.clipped = img.center_row - reach < -0.5 || img.center_row + reach > camera.roi_height - 0.5;

    const auto rows = pixel_mass(camera.roi_height, img.center_row, camera.psf_sigma_px);
    const auto cols = pixel_mass(camera.roi_width, img.center_col, camera.psf_sigma_px);
    img.counts = Grid<double>(camera.roi_width, camera.roi_height);
    for (int r = 0; r < camera.roi_height; ++r)
        for (int c = 0; c < camera.roi_width; ++c)
            img.counts(r, c) = camera.background_per_px + camera.photons_per_frame * rows[r] * cols[c];
    return img;
}

namespace {

// Inverse-CDF table for a fixed Poisson mean, truncated where the remaining
// tail drops below double resolution.
class PoissonTable {
public:
    explicit PoissonTable(double mean) {
        double p = std::exp(-mean), c = p;
        cdf_.push_back(c);
        for (int k = 1; 1.0 - c > 1e-17 && k < 100000; ++k) {
            p *= mean / k;
            c += p;
            cdf_.push_back(c);
            if (p == 0.0 && k > mean) break;
        }
        const std::size_t n_guide = cdf_.size();
        guide_.resize(n_guide);
        std::size_t k = 0;
        for (std::size_t i = 0; i < n_guide; ++i) {
            const double u = static_cast<double>(i) / static_cast<double>(n_guide);
            while (k + 1 < cdf_.size() && cdf_[k] <= u) ++k;
            guide_[i] = static_cast<std::uint32_t>(k);
        }
    }

    std::int64_t sample(double u) const {
        auto k = guide_[std::min(guide_.size() - 1, static_cast<std::size_t>(u * static_cast<double>(guide_.size())))];
        while (k + 1 < cdf_.size() && cdf_[k] <= u) ++k;
        return k;
    }

private:
    std::vector<double> cdf_;
    std::vector<std::uint32_t> guide_;
};

const PoissonTable& background_table(double mean) {
    thread_local std::unordered_map<double, PoissonTable> cache;
    auto it = cache.find(mean);
    if (it == cache.end()) it = cache.emplace(mean, PoissonTable(mean)).first;
    return it->second;
}

std::int64_t poisson(double mean, Rng& rng) {
    if (mean <= 0.0) return 0;
    if (mean < 12.0) {
        // Sequential inversion.
        const double u = rng.uniform();
        double p = std::exp(-mean), c = p;
        std::int64_t k = 0;
        while (u > c && p > 0.0) {
            ++k;
            p *= mean / static_cast<double>(k);
            c += p;
        }
        return k;
    }
    boost::random::poisson_distribution<std::int64_t, double> dist(mean);
    return dist(rng.engine());
}

}  // namespace

Frame render_frame(double z_true, const CameraModel& camera, Rng& shot_rng, Rng& read_rng, double t_mid) {
    const ExpectedImage img = expected_image(z_true, camera);
    Frame frame;
    frame.t_mid = t_mid;
    frame.camera = camera.role;
    frame.counts = Grid<std::uint32_t>(camera.roi_width, camera.roi_height);
    auto out = frame.counts.values();
    const auto mean = img.counts.values();
    // Shot noise of background plus signal is the sum of two independent
    // Poisson draws; the background one comes from a cached table.
    const double bg = camera.background_per_px;
    const PoissonTable* table = bg > 0.0 ? &background_table(bg) : nullptr;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        double v = 0.0;
        if (table) v += static_cast<double>(table->sample(shot_rng.uniform()));
        v += static_cast<double>(poisson(mean[i] - bg, shot_rng));
        if (camera.read_noise_rms > 0.0) v += std::round(camera.read_noise_rms * read_rng.normal());
        out[i] = v > 0.0 ? static_cast<std::uint32_t>(std::min(v, 4.0e9)) : 0U;
    }
    return frame;
}

double motion_blur_position(BlurPolicy policy, std::span<const double> exposure_samples) {
    if (exposure_samples.empty()) throw RangeError("motion blur needs at least one sample");
    if (policy == BlurPolicy::Midpoint) return exposure_samples[exposure_samples.size() / 2];
    return std::accumulate(exposure_samples.begin(), exposure_samples.end(), 0.0) /
           static_cast<double>(exposure_samples.size());
}

double max_blur_displacement(double omega0, double exposure_s, double amplitude) {
    return omega0 * exposure_s * std::abs(amplitude);
}

void write_frame_u16(std::ostream& os, const Frame& frame) {
    for (std::uint32_t v : frame.counts.values()) {
        const auto u = static_cast<std::uint16_t>(std::min<std::uint32_t>(v, 65535U));
        const char bytes[2] = {static_cast<char>(u & 0xFF), static_cast<char>(u >> 8)};
        os.write(bytes, 2);
    }
}

void write_frame_csv(std::ostream& os, const Frame& frame) {
    for (int r = 0; r < frame.counts.height(); ++r) {
        for (int c = 0; c < frame.counts.width(); ++c) {
            if (c) os << ',';
            os << frame.counts(r, c);
        }
        os << '\n';
    }
}

}  // namespace levicool::imaging
