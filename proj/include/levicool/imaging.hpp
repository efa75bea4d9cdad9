#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>

#include "levicool/grid.hpp"
#include "levicool/rational.hpp"
#include "levicool/rng.hpp"

namespace levicool::imaging {

enum class CameraRole { InLoop, OutOfLoop };

std::string to_string(CameraRole role);

struct CameraModel {
    double pixel_pitch = 5.35e-6;  // m, image plane
    double magnification = 1.0;    // object -> image
    Rational fps = Rational::make(221, 1);
    int roi_width = 20;
    int roi_height = 30;
    double psf_sigma_px = 1.5;
    double photons_per_frame = 2e4;
    double background_per_px = 20.0;
    double read_noise_rms = 0.0;
    double exposure = 0.5;  // fraction of the frame period
    int blur_subsamples = 1;
    CameraRole role = CameraRole::InLoop;

    void validate() const;
    std::string label() const { return to_string(role); }
    /// Object-plane size of one pixel.
    double meters_per_pixel() const { return pixel_pitch / magnification; }
    double frame_period() const { return 1.0 / fps.value(); }
    /// Row coordinate (pixel centers at integers) of the trap center.
    double origin_row() const { return 0.5 * (roi_height - 1); }
    double origin_col() const { return 0.5 * (roi_width - 1); }
    /// Image center row for a particle at axial position z.
    double center_row(double z) const { return origin_row() + z / meters_per_pixel(); }
    /// Exposure midpoint of frame k, computed from integers so it never drifts.
    double frame_mid_time(std::int64_t k) const;
    /// Time of blur subsample i within frame k.
    double subsample_time(std::int64_t k, int i) const;
};

struct ExpectedImage {
    Grid<double> counts;
    double center_row = 0.0;
    double center_col = 0.0;
    /// The PSF overlaps the ROI border (centroids become biased).
    bool clipped = false;
};

/// Background plus photons times the pixel-integrated isotropic Gaussian PSF.
/// Throws ParticleLost when the center is more than 3 sigma outside the ROI.
ExpectedImage expected_image(double z_true, const CameraModel& camera);

struct Frame {
    Grid<std::uint32_t> counts;
    double t_mid = 0.0;
    CameraRole camera = CameraRole::InLoop;
};

/// Poisson shot noise plus rounded Gaussian read noise, clamped at zero.
Frame render_frame(double z_true, const CameraModel& camera, Rng& shot_rng, Rng& read_rng, double t_mid);

enum class BlurPolicy { Midpoint, Average };

/// Position used to render a frame from the true positions sampled across the
/// exposure (one sample at the midpoint for Midpoint).
double motion_blur_position(BlurPolicy policy, std::span<const double> exposure_samples);

/// Upper bound omega0 * exposure * amplitude on the excursion during one exposure.
double max_blur_displacement(double omega0, double exposure_s, double amplitude);

/// Headerless dump: row-major width x height little-endian uint16, saturated.
void write_frame_u16(std::ostream& os, const Frame& frame);
void write_frame_csv(std::ostream& os, const Frame& frame);

}  // namespace levicool::imaging
