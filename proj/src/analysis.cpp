#include "levicool/analysis.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "levicool/constants.hpp"
#include "levicool/errors.hpp"
#include "levicool/levmar.hpp"

namespace levicool::analysis {

namespace {

// The FFTW planner is not reentrant; execution on distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan_);
        }
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() { return in_; }
    void execute() { fftw_execute(plan_); }
    double power(std::size_t k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }

private:
    std::size_t n_;
    double* in_;
    fftw_complex* out_;
    fftw_plan plan_;
};

std::vector<double> make_window(WindowKind kind, std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (kind == WindowKind::Hann) {
        // Periodic Hann, the usual choice for spectral averaging.
        for (std::size_t i = 0; i < n; ++i)
            w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
    return m;
}

void check_band(const Psd& psd, Band band) {
    if (psd.freqs.empty()) throw RangeError("empty PSD");
    const double tol = 1e-9 * psd.fs;
    if (!(band.lo < band.hi) || band.lo < -tol || band.hi > psd.freqs.back() + tol)
        throw RangeError("band [" + std::to_string(band.lo) + ", " + std::to_string(band.hi) +
                         "] Hz lies outside the PSD range [0, " + std::to_string(psd.freqs.back()) + "] Hz");
}

}  // namespace

std::string to_string(WindowKind w) { return w == WindowKind::Hann ? "hann" : "rectangular"; }

WindowKind parse_window(const std::string& s) {
    if (s == "hann") return WindowKind::Hann;
    if (s == "rectangular" || s == "boxcar") return WindowKind::Rectangular;
    throw ConfigError("unknown window '" + s + "'");
}

double Psd::total_power() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * df;
}

Psd welch_psd(std::span<const double> trace, double fs, const WelchParams& params) {
    const std::size_t len = params.segment_len;
    if (len < 2) throw ConfigError("segment length must be >= 2");
    if (!(fs > 0.0)) throw ConfigError("sample rate must be > 0");
    if (!(params.overlap >= 0.0 && params.overlap < 1.0)) throw ConfigError("overlap must lie in [0, 1)");
    if (trace.size() < 2 * len)
        throw InsufficientData("trace of " + std::to_string(trace.size()) + " samples is shorter than two segments of " +
                               std::to_string(len));

    const auto hop = std::max<std::size_t>(1, len - static_cast<std::size_t>(std::llround(params.overlap * len)));
    const std::size_t n_seg = (trace.size() - len) / hop + 1;
    const std::vector<double> w = make_window(params.window, len);
    double w2 = 0.0;
    for (double x : w) w2 += x * x;

    const std::size_t n_bins = len / 2 + 1;
    Psd psd;
    psd.fs = fs;
    psd.df = fs / static_cast<double>(len);
    psd.window = params.window;
    psd.segment_len = len;
    psd.overlap = params.overlap;
    psd.n_segments = n_seg;
    psd.freqs.resize(n_bins);
    psd.values.assign(n_bins, 0.0);
    for (std::size_t k = 0; k < n_bins; ++k) psd.freqs[k] = static_cast<double>(k) * psd.df;

    RealFft fft(len);
    for (std::size_t s = 0; s < n_seg; ++s) {
        const double* seg = trace.data() + s * hop;
        double mean = 0.0;
        if (params.detrend) {
            for (std::size_t i = 0; i < len; ++i) mean += seg[i];
            mean /= static_cast<double>(len);
        }
        double* in = fft.input();
        for (std::size_t i = 0; i < len; ++i) in[i] = (seg[i] - mean) * w[i];
        fft.execute();
        for (std::size_t k = 0; k < n_bins; ++k) psd.values[k] += fft.power(k);
    }
    const double scale = 1.0 / (fs * w2 * static_cast<double>(n_seg));
    for (std::size_t k = 0; k < n_bins; ++k) {
        const bool unpaired = k == 0 || (len % 2 == 0 && k == n_bins - 1);
        psd.values[k] *= scale * (unpaired ? 1.0 : 2.0);
    }
    return psd;
}

LorentzianFit fit_lorentzian(const Psd& psd, Band search) {
    check_band(psd, search);
    std::vector<double> f, s;
    for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
        if (psd.freqs[k] >= search.lo && psd.freqs[k] <= search.hi && psd.freqs[k] > 0.0 && psd.values[k] > 0.0) {
            f.push_back(psd.freqs[k]);
            s.push_back(psd.values[k]);
        }
    }
    if (f.size() < 5) throw InsufficientData("fewer than 5 positive PSD bins in the peak search band");

    const auto ipk = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    const double c0 = std::max(*std::min_element(s.begin(), s.end()), 1e-300);
    const double h = std::max(s[ipk] - c0, s[ipk] * 1e-3);
    std::size_t left = ipk, right = ipk;
    while (left > 0 && s[left] - c0 > 0.5 * h) --left;
    while (right + 1 < s.size() && s[right] - c0 > 0.5 * h) ++right;
    const double w0 = std::max(f[right] - f[left], 0.5 * psd.df);
    const double f0 = f[ipk];

    LorentzianFit guess;
    guess.center_hz = f0;
    guess.fwhm_hz = w0;
    guess.amplitude = h;
    guess.floor = c0;

    // Log residuals: the periodogram scatter is multiplicative.
    auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        const double a = std::exp(p[0]), fc = p[1], w = std::exp(p[2]), c = std::exp(p[3]);
        r.resize(static_cast<Eigen::Index>(f.size()));
        if (jac) jac->resize(r.size(), 4);
        for (std::size_t i = 0; i < f.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double u = fc * fc - f[i] * f[i];
            const double d = u * u + f[i] * f[i] * w * w;
            const double m = a / d + c;
            r[ii] = std::log(m) - std::log(s[i]);
            if (jac) {
                (*jac)(ii, 0) = a / d / m;
                (*jac)(ii, 1) = -a / (d * d) * 4.0 * u * fc / m;
                (*jac)(ii, 2) = -a / (d * d) * 2.0 * f[i] * f[i] * w * w / m;
                (*jac)(ii, 3) = c / m;
            }
        }
    };
    Eigen::VectorXd p0(4);
    p0 << std::log(h * f0 * f0 * w0 * w0), f0, std::log(w0), std::log(c0);
    LmOptions opts;
    opts.max_iterations = 200;
    const LmResult res = levenberg_marquardt(model, p0, opts);

    LorentzianFit fit;
    fit.center_hz = res.params[1];
    fit.fwhm_hz = std::exp(res.params[2]);
    fit.floor = std::exp(res.params[3]);
    fit.amplitude = std::exp(res.params[0]) / (fit.center_hz * fit.center_hz * fit.fwhm_hz * fit.fwhm_hz);
    fit.converged = res.converged;
    // An overdamped line is wider than the search band; its width is still
    // meaningful and sets the integration band.
    const bool sane = std::isfinite(fit.center_hz) && std::isfinite(fit.fwhm_hz) && fit.fwhm_hz > 0.0 &&
                      fit.center_hz >= search.lo && fit.center_hz <= search.hi;
    if (sane) return fit;
    // Overdamped: the center is not identifiable but the width still is.
    if (std::isfinite(fit.center_hz) && std::isfinite(fit.fwhm_hz) && fit.fwhm_hz > search.hi - search.lo) {
        fit.center_hz = std::clamp(fit.center_hz, search.lo, search.hi);
        return fit;
    }
    return guess;
}

Band integration_band(const Psd& psd, const LorentzianFit& fit, double fwhm_multiple, double min_half_width_hz) {
    const double half = std::max(fwhm_multiple * fit.fwhm_hz, min_half_width_hz);
    const double nyquist = psd.freqs.empty() ? 0.5 * psd.fs : psd.freqs.back();
    return {std::max(0.0, fit.center_hz - half), std::min(nyquist, fit.center_hz + half)};
}

double noise_floor(const Psd& psd, Band band) {
    check_band(psd, band);
    std::vector<double> outside;
    for (std::size_t k = 0; k < psd.freqs.size(); ++k)
        if (psd.freqs[k] < band.lo || psd.freqs[k] > band.hi) outside.push_back(psd.values[k]);
    return median(std::move(outside));
}

double peak_area(const Psd& psd, Band band) {
    const double floor = noise_floor(psd, band);
    double area = 0.0;
    bool have_prev = false;
    double f_prev = 0.0, v_prev = 0.0;
    for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
        if (psd.freqs[k] < band.lo || psd.freqs[k] > band.hi) continue;
        const double v = psd.values[k] - floor;
        if (have_prev) area += 0.5 * (v + v_prev) * (psd.freqs[k] - f_prev);
        f_prev = psd.freqs[k];
        v_prev = v;
        have_prev = true;
    }
    return std::max(area, 0.0);
}

Calibration calibrate_temperature(std::span<const double> reference_areas, double t_room,
                                  const std::string& provenance) {
    if (reference_areas.empty()) throw CalibrationError("no thermal reference runs to calibrate against");
    if (!(t_room > 0.0)) throw CalibrationError("reference temperature must be > 0");
    double sum = 0.0;
    for (double a : reference_areas) {
        if (!(a > 0.0) || !std::isfinite(a)) throw CalibrationError("reference PSD area must be positive");
        sum += a;
    }
    const double mean = sum / static_cast<double>(reference_areas.size());
    const auto [lo, hi] = std::minmax_element(reference_areas.begin(), reference_areas.end());
    Calibration cal;
    cal.coeff = t_room / mean;
    cal.t_room = t_room;
    cal.n_references = reference_areas.size();
    cal.spread = (*hi - *lo) / mean;
    cal.spread_warning = cal.spread > 0.10;
    cal.provenance = provenance;
    return cal;
}

TemperatureEstimate effective_temperature(const Psd& psd, Band band, double calib_coeff, double omega_cm,
                                          double mass) {
    if (!(calib_coeff > 0.0)) throw CalibrationError("temperature calibration coefficient must be > 0");
    const double f_cm = omega_cm / (2.0 * std::numbers::pi);
    if (f_cm < band.lo || f_cm > band.hi) throw RangeError("integration band does not contain the motional peak");
    TemperatureEstimate est;
    est.area = peak_area(psd, band);
    est.band = band;
    est.calib_coeff = calib_coeff;
    est.omega_cm = omega_cm;
    est.t_eff = calib_coeff * est.area;
    if (std::isfinite(mass)) est.t_mass = mass * omega_cm * omega_cm * est.area / constants::kBoltzmann;
    return est;
}

TemperatureEstimate analyze_peak(const Psd& psd, double calib_coeff, const PeakAnalysis& opts, double mass) {
    const double nyquist = psd.freqs.empty() ? 0.0 : psd.freqs.back();
    const Band search{opts.search_lo_hz, std::min(opts.search_hi_hz, nyquist)};
    const LorentzianFit fit = fit_lorentzian(psd, search);
    const Band band = integration_band(psd, fit, opts.fwhm_multiple, opts.min_half_width_hz);
    TemperatureEstimate est =
        effective_temperature(psd, band, calib_coeff, 2.0 * std::numbers::pi * fit.center_hz, mass);
    est.linewidth_hz = fit.fwhm_hz;
    return est;
}

SweepSummary sweep_summary(std::span<const SweepRun> runs, bool circular) {
    std::map<double, std::vector<const SweepRun*>> groups;
    for (const auto& r : runs) groups[r.param].push_back(&r);

    SweepSummary out;
    for (const auto& [param, members] : groups) {
        SweepRow row;
        row.param = param;
        double t2 = 0.0;
        for (const SweepRun* r : members) {
            if (!r->ok) {
                ++row.n_failed;
                continue;
            }
            ++row.n_ok;
            row.area += r->area;
            row.t_eff += r->t_eff;
            row.omega_cm += r->omega_cm;
            t2 += r->t_eff * r->t_eff;
        }
        if (row.n_ok > 0) {
            const auto n = static_cast<double>(row.n_ok);
            row.area /= n;
            row.t_eff /= n;
            row.omega_cm /= n;
            if (row.n_ok > 1) {
                const double var = std::max(0.0, (t2 - n * row.t_eff * row.t_eff) / (n - 1.0));
                row.t_eff_sem = std::sqrt(var / n);
            }
        } else {
            row.area = row.t_eff = row.omega_cm = std::numeric_limits<double>::quiet_NaN();
        }
        out.rows.push_back(row);
    }

    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < out.rows.size(); ++i)
        if (out.rows[i].n_ok > 0) valid.push_back(i);
    for (std::size_t i : valid) {
        const double t = out.rows[i].t_eff;
        if (!(t >= out.min_t_eff)) {
            out.min_t_eff = t;
            out.argmin_param = out.rows[i].param;
        }
        if (!(t <= out.max_t_eff)) {
            out.max_t_eff = t;
            out.argmax_param = out.rows[i].param;
        }
    }
    const std::size_t n = valid.size();
    for (std::size_t j = 0; j < n && n > 1; ++j) {
        const double t = out.rows[valid[j]].t_eff;
        bool lower_left = true, lower_right = true;
        if (j > 0 || circular) lower_left = t < out.rows[valid[(j + n - 1) % n]].t_eff;
        if (j + 1 < n || circular) lower_right = t < out.rows[valid[(j + 1) % n]].t_eff;
        if (lower_left && lower_right) out.local_minima.push_back(valid[j]);
    }
    return out;
}

}  // namespace levicool::analysis
