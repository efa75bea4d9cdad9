#include "levicool/config.hpp"

#include <fmt/format.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "levicool/errors.hpp"
#include "levicool/rng.hpp"

namespace levicool::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& text, const std::string& where) {
    const std::string t = trim(text);
    if (t == "auto") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
        throw ConfigError(where + ": '" + text + "' is not a number");
    return v;
}

std::int64_t to_int(const std::string& text, const std::string& where) {
    const std::string t = trim(text);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
        throw ConfigError(where + ": '" + text + "' is not an integer");
    return v;
}

bool to_bool(const std::string& text, const std::string& where) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(where + ": '" + text + "' is not a boolean");
}

std::string num(double v) {
    if (std::isnan(v)) return "auto";
    return fmt::format("{}", v);
}

localization::EstimatorKind parse_estimator(const std::string& text, const std::string& where) {
    const std::string t = trim(text);
    if (t == "peak") return localization::EstimatorKind::Peak;
    if (t == "centroid") return localization::EstimatorKind::Centroid;
    if (t == "gaussian_fit") return localization::EstimatorKind::GaussianFit;
    throw ConfigError(where + ": unknown estimator '" + text + "' (peak | centroid | gaussian_fit)");
}

std::string estimator_name(localization::EstimatorKind k) {
    switch (k) {
        case localization::EstimatorKind::Peak: return "peak";
        case localization::EstimatorKind::Centroid: return "centroid";
        case localization::EstimatorKind::GaussianFit: return "gaussian_fit";
    }
    return "centroid";
}

// Section -> key -> value, with consumption tracking so leftovers are reported.
class Table {
public:
    explicit Table(const boost::property_tree::ptree& tree) {
        for (const auto& [section, child] : tree) {
            if (child.empty() && !child.data().empty())
                throw ConfigError("key '" + section + "' appears outside any section");
            for (const auto& [key, value] : child) values_[section][key] = value.data();
        }
    }

    template <typename F>
    void take(const std::string& section, const std::string& key, F&& apply) {
        auto s = values_.find(section);
        if (s == values_.end()) return;
        auto k = s->second.find(key);
        if (k == s->second.end()) return;
        apply(k->second, "[" + section + "] " + key);
        s->second.erase(k);
    }

    void real(const std::string& s, const std::string& k, double& out) {
        take(s, k, [&](const std::string& v, const std::string& w) { out = to_double(v, w); });
    }
    void integer(const std::string& s, const std::string& k, int& out) {
        take(s, k, [&](const std::string& v, const std::string& w) { out = static_cast<int>(to_int(v, w)); });
    }
    void flag(const std::string& s, const std::string& k, bool& out) {
        take(s, k, [&](const std::string& v, const std::string& w) { out = to_bool(v, w); });
    }
    void text(const std::string& s, const std::string& k, std::string& out) {
        take(s, k, [&](const std::string& v, const std::string&) { out = trim(v); });
    }

    void check_consumed() const {
        static const std::set<std::string> known = {"run",         "particle",         "trap",     "environment",
                                                    "camera.in_loop", "camera.out_of_loop", "feedback", "analysis",
                                                    "sweep",       "output"};
        for (const auto& [section, keys] : values_) {
            if (!known.contains(section)) throw ConfigError("unknown section [" + section + "]");
            if (!keys.empty()) throw ConfigError("unknown key '" + keys.begin()->first + "' in [" + section + "]");
        }
    }

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
};

void read_camera(Table& t, const std::string& s, CameraSection& cam) {
    auto& m = cam.model;
    t.flag(s, "enabled", cam.enabled);
    t.real(s, "pixel_pitch_m", m.pixel_pitch);
    t.real(s, "magnification", m.magnification);
    t.take(s, "fps", [&](const std::string& v, const std::string& w) {
        try {
            m.fps = Rational::parse(trim(v));
        } catch (const Error& e) {
            throw ConfigError(w + ": " + e.what());
        }
    });
    t.integer(s, "roi_width", m.roi_width);
    t.integer(s, "roi_height", m.roi_height);
    t.real(s, "psf_sigma_px", m.psf_sigma_px);
    t.real(s, "photons_per_frame", m.photons_per_frame);
    t.real(s, "background_per_px", m.background_per_px);
    t.real(s, "read_noise_rms", m.read_noise_rms);
    t.real(s, "exposure", m.exposure);
    t.integer(s, "blur_subsamples", m.blur_subsamples);
    t.take(s, "estimator", [&](const std::string& v, const std::string& w) { cam.estimator.kind = parse_estimator(v, w); });
    t.integer(s, "centroid_power", cam.estimator.power);
    t.take(s, "background", [&](const std::string& v, const std::string& w) {
        try {
            cam.estimator.background = localization::BackgroundPolicy::parse(trim(v));
        } catch (const Error& e) {
            throw ConfigError(w + ": " + e.what());
        }
    });
}

void write_camera(std::ostringstream& os, const std::string& s, const CameraSection& cam) {
    const auto& m = cam.model;
    os << "[" << s << "]\n";
    os << "enabled = " << (cam.enabled ? "true" : "false") << "\n";
    os << "pixel_pitch_m = " << num(m.pixel_pitch) << "\n";
    os << "magnification = " << num(m.magnification) << "\n";
    os << "fps = " << m.fps.str() << "\n";
    os << "roi_width = " << m.roi_width << "\n";
    os << "roi_height = " << m.roi_height << "\n";
    os << "psf_sigma_px = " << num(m.psf_sigma_px) << "\n";
    os << "photons_per_frame = " << num(m.photons_per_frame) << "\n";
    os << "background_per_px = " << num(m.background_per_px) << "\n";
    os << "read_noise_rms = " << num(m.read_noise_rms) << "\n";
    os << "exposure = " << num(m.exposure) << "\n";
    os << "blur_subsamples = " << m.blur_subsamples << "\n";
    os << "estimator = " << estimator_name(cam.estimator.kind) << "\n";
    os << "centroid_power = " << cam.estimator.power << "\n";
    os << "background = " << cam.estimator.background.str() << "\n\n";
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
    const std::string t = trim(text);
    std::vector<std::string> parts;
    auto split = [](const std::string& s, char sep) {
        std::vector<std::string> out;
        std::string cur;
        std::istringstream is(s);
        while (std::getline(is, cur, sep)) out.push_back(trim(cur));
        return out;
    };
    std::vector<double> grid;
    if (t.rfind("log:", 0) == 0) {
        parts = split(t.substr(4), ':');
        if (parts.size() != 3) throw ConfigError("log grid must be log:start:stop:count");
        const double a = to_double(parts[0], "grid"), b = to_double(parts[1], "grid");
        const auto n = to_int(parts[2], "grid");
        if (!(a > 0.0 && b > 0.0) || n < 1) throw ConfigError("log grid needs positive bounds and count >= 1");
        for (std::int64_t i = 0; i < n; ++i) {
            const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
            grid.push_back(std::exp(std::log(a) + f * (std::log(b) - std::log(a))));
        }
        grid.front() = a;
        if (n > 1) grid.back() = b;
    } else if (t.find(':') != std::string::npos) {
        parts = split(t, ':');
        if (parts.size() != 3) throw ConfigError("range grid must be start:stop:step");
        const double a = to_double(parts[0], "grid"), b = to_double(parts[1], "grid"), step = to_double(parts[2], "grid");
        if (!(step > 0.0) || b < a) throw ConfigError("range grid needs step > 0 and stop >= start");
        const auto n = static_cast<std::int64_t>(std::floor((b - a) / step + 1e-9));
        for (std::int64_t i = 0; i <= n; ++i) grid.push_back(a + static_cast<double>(i) * step);
    } else {
        for (const auto& p : split(t, ',')) grid.push_back(to_double(p, "grid"));
    }
    if (grid.empty()) throw ConfigError("empty sweep grid '" + text + "'");
    for (double g : grid)
        if (!std::isfinite(g)) throw ConfigError("non-finite value in sweep grid '" + text + "'");
    return grid;
}

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.environment.excess_force_psd = 2.7e-37;

    auto& in = c.in_loop;
    in.model.role = imaging::CameraRole::InLoop;
    in.model.magnification = 0.05;
    in.model.fps = Rational::make(221, 1);
    in.model.roi_width = 20;
    in.model.roi_height = 30;
    in.model.read_noise_rms = 2.0;
    in.estimator.kind = localization::EstimatorKind::Centroid;
    in.estimator.power = 3;

    auto& out = c.out_of_loop;
    out.model.role = imaging::CameraRole::OutOfLoop;
    out.model.magnification = 0.1;
    out.model.fps = Rational::make(87526, 100);
    out.model.roi_width = 16;
    out.model.roi_height = 64;
    out.model.photons_per_frame = 2e4;
    out.model.background_per_px = 20.0;
    out.model.read_noise_rms = 2.0;
    out.estimator.kind = localization::EstimatorKind::Centroid;
    out.estimator.power = 1;
    out.estimator.background.kind = localization::BackgroundPolicy::Kind::Threshold;

    c.analysis.welch.segment_len = 4096;

    c.feedback.chain.gain = 1.0;
    c.feedback.delay_phase_deg = 100.0;
    c.feedback.filter_phase_deg = 150.0;
    return c;
}

void ExperimentConfig::validate() const {
    if (!(run.duration > 0.0)) throw ConfigError("[run] duration_s must be > 0");
    if (run.substeps_per_frame < 1) throw ConfigError("[run] substeps_per_frame must be >= 1");
    particle.validate();
    trap.validate();
    environment.validate();
    if (in_loop.model.role != imaging::CameraRole::InLoop || out_of_loop.model.role != imaging::CameraRole::OutOfLoop)
        throw ConfigError("camera roles are fixed by section");
    in_loop.model.validate();
    out_of_loop.model.validate();
    for (const auto* cam : {&in_loop, &out_of_loop})
        if (cam->estimator.power < 1) throw ConfigError(cam->model.label() + ": centroid_power must be >= 1");
    if (!in_loop.enabled && feedback.chain.enabled)
        throw ConfigError("feedback needs the in-loop camera; enable [camera.in_loop] or disable feedback");
    if (!in_loop.enabled && !out_of_loop.enabled) throw ConfigError("at least one camera must be enabled");
    resolve_feedback(*this).validate(in_loop.model.frame_period());
    if (!(feedback.geometry_factor > 0.0)) throw ConfigError("[feedback] geometry_factor must be > 0");
    const auto& a = analysis;
    if (a.welch.segment_len < 8) throw ConfigError("[analysis] segment_len must be >= 8");
    if (!(a.welch.overlap >= 0.0 && a.welch.overlap < 1.0)) throw ConfigError("[analysis] overlap must be in [0, 1)");
    if (!(a.settle_time >= 0.0 && a.settle_time < run.duration))
        throw ConfigError("[analysis] settle_time_s must be in [0, duration)");
    if (!(a.t_room > 0.0)) throw ConfigError("[analysis] t_room_k must be > 0");
    if (!(a.reference_pressure_mbar > 0.0)) throw ConfigError("[analysis] reference_pressure_mbar must be > 0");
    if (a.reference_seeds < 1) throw ConfigError("[analysis] reference_seeds must be >= 1");
    if (!(a.peak.search_lo_hz >= 0.0 && a.peak.search_hi_hz > a.peak.search_lo_hz))
        throw ConfigError("[analysis] peak search band is empty");
    if (!(a.peak.fwhm_multiple > 0.0 && a.peak.min_half_width_hz >= 0.0))
        throw ConfigError("[analysis] band parameters must be positive");
    if (sweep.seeds_per_point < 1) throw ConfigError("[sweep] seeds_per_point must be >= 1");
    if (sweep.workers < 0) throw ConfigError("[sweep] workers must be >= 0");
    parse_grid(sweep.phase_grid_deg);
    parse_grid(sweep.gain_grid);
    for (double p : parse_grid(sweep.pressure_grid_mbar))
        if (!(p >= 0.0)) throw ConfigError("[sweep] pressures must be >= 0");
    if (output.dir.empty()) throw ConfigError("[output] dir must not be empty");
    if (output.frame_dump_limit < 0) throw ConfigError("[output] frame_dump_limit must be >= 0");
}

ExperimentConfig parse_ini(const std::string& text) {
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    Table t(tree);
    ExperimentConfig c = ExperimentConfig::defaults();

    t.real("run", "duration_s", c.run.duration);
    t.take("run", "seed", [&](const std::string& v, const std::string& w) {
        const std::string s = trim(v);
        std::uint64_t seed = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
        if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
            throw ConfigError(w + ": '" + v + "' is not an unsigned 64-bit integer");
        c.run.seed = seed;
    });
    t.integer("run", "substeps_per_frame", c.run.substeps_per_frame);

    t.real("particle", "diameter_m", c.particle.diameter);
    t.real("particle", "density_kg_m3", c.particle.density);
    t.integer("particle", "charge_number", c.particle.charge_number);

    t.take("trap", "omega0_hz", [&](const std::string& v, const std::string& w) {
        c.trap.omega0 = 2.0 * std::numbers::pi * to_double(v, w);
    });
    t.real("trap", "z0_m", c.trap.z0);
    t.real("trap", "r0_m", c.trap.r0);
    t.real("trap", "drive_freq_hz", c.trap.drive_freq);
    t.real("trap", "v_endcap_v", c.trap.v_endcap);
    t.real("trap", "v_ac_pp_v", c.trap.v_ac_pp);
    t.real("trap", "min_freq_hz", c.trap.min_freq_hz);
    t.real("trap", "max_freq_hz", c.trap.max_freq_hz);

    t.real("environment", "pressure_mbar", c.environment.pressure_mbar);
    t.real("environment", "bath_temperature_k", c.environment.bath_temperature);
    t.real("environment", "gas_molecular_mass_kg", c.environment.gas_molecular_mass);
    t.real("environment", "excess_force_psd_n2_hz", c.environment.excess_force_psd);

    read_camera(t, "camera.in_loop", c.in_loop);
    read_camera(t, "camera.out_of_loop", c.out_of_loop);

    auto& fb = c.feedback;
    t.flag("feedback", "enabled", fb.chain.enabled);
    t.real("feedback", "gain", fb.chain.gain);
    t.real("feedback", "delay_phase_deg", fb.delay_phase_deg);
    t.integer("feedback", "coarse_delay_frames", fb.chain.coarse_delay_frames);
    t.real("feedback", "fine_delay_s", fb.chain.fine_delay);
    t.real("feedback", "latency_s", fb.chain.latency);
    t.real("feedback", "filter_phase_deg", fb.filter_phase_deg);
    t.real("feedback", "filter_cutoff_hz", fb.chain.filter.cutoff_hz);
    t.real("feedback", "filter_q", fb.chain.filter.q);
    t.integer("feedback", "dac_bits", fb.chain.dac.bits);
    t.real("feedback", "dac_vref_v", fb.chain.dac.vref);
    t.integer("feedback", "sign", fb.chain.sign);
    t.real("feedback", "geometry_factor", fb.geometry_factor);
    t.real("feedback", "full_scale_m", fb.full_scale_m);

    auto& a = c.analysis;
    t.take("analysis", "segment_len", [&](const std::string& v, const std::string& w) {
        const auto n = to_int(v, w);
        if (n < 0) throw ConfigError(w + " must be positive");
        a.welch.segment_len = static_cast<std::size_t>(n);
    });
    t.real("analysis", "overlap", a.welch.overlap);
    t.take("analysis", "window", [&](const std::string& v, const std::string& w) {
        try {
            a.welch.window = analysis::parse_window(trim(v));
        } catch (const Error& e) {
            throw ConfigError(w + ": " + e.what());
        }
    });
    t.flag("analysis", "detrend", a.welch.detrend);
    t.real("analysis", "settle_time_s", a.settle_time);
    t.real("analysis", "search_lo_hz", a.peak.search_lo_hz);
    t.real("analysis", "search_hi_hz", a.peak.search_hi_hz);
    t.real("analysis", "fwhm_multiple", a.peak.fwhm_multiple);
    t.real("analysis", "min_half_width_hz", a.peak.min_half_width_hz);
    t.real("analysis", "t_room_k", a.t_room);
    t.real("analysis", "reference_pressure_mbar", a.reference_pressure_mbar);
    t.integer("analysis", "reference_seeds", a.reference_seeds);

    t.text("sweep", "phase_grid_deg", c.sweep.phase_grid_deg);
    t.text("sweep", "gain_grid", c.sweep.gain_grid);
    t.text("sweep", "pressure_grid_mbar", c.sweep.pressure_grid_mbar);
    t.integer("sweep", "seeds_per_point", c.sweep.seeds_per_point);
    t.integer("sweep", "workers", c.sweep.workers);
    t.flag("sweep", "feedback_off", c.sweep.feedback_off);

    t.text("output", "dir", c.output.dir);
    t.flag("output", "save_traces", c.output.save_traces);
    t.integer("output", "frame_dump_limit", c.output.frame_dump_limit);

    t.check_consumed();
    c.validate();
    return c;
}

ExperimentConfig load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_ini(ss.str());
}

std::string to_ini(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "[run]\n";
    os << "duration_s = " << num(c.run.duration) << "\n";
    os << "seed = " << c.run.seed << "\n";
    os << "substeps_per_frame = " << c.run.substeps_per_frame << "\n\n";

    os << "[particle]\n";
    os << "diameter_m = " << num(c.particle.diameter) << "\n";
    os << "density_kg_m3 = " << num(c.particle.density) << "\n";
    os << "charge_number = " << c.particle.charge_number << "\n\n";

    os << "[trap]\n";
    os << "omega0_hz = " << num(c.trap.f0()) << "\n";
    os << "z0_m = " << num(c.trap.z0) << "\n";
    os << "r0_m = " << num(c.trap.r0) << "\n";
    os << "drive_freq_hz = " << num(c.trap.drive_freq) << "\n";
    os << "v_endcap_v = " << num(c.trap.v_endcap) << "\n";
    os << "v_ac_pp_v = " << num(c.trap.v_ac_pp) << "\n";
    os << "min_freq_hz = " << num(c.trap.min_freq_hz) << "\n";
    os << "max_freq_hz = " << num(c.trap.max_freq_hz) << "\n\n";

    os << "[environment]\n";
    os << "pressure_mbar = " << num(c.environment.pressure_mbar) << "\n";
    os << "bath_temperature_k = " << num(c.environment.bath_temperature) << "\n";
    os << "gas_molecular_mass_kg = " << num(c.environment.gas_molecular_mass) << "\n";
    os << "excess_force_psd_n2_hz = " << num(c.environment.excess_force_psd) << "\n\n";

    write_camera(os, "camera.in_loop", c.in_loop);
    write_camera(os, "camera.out_of_loop", c.out_of_loop);

    const auto& fb = c.feedback;
    os << "[feedback]\n";
    os << "enabled = " << (fb.chain.enabled ? "true" : "false") << "\n";
    os << "gain = " << num(fb.chain.gain) << "\n";
    os << "delay_phase_deg = " << num(fb.delay_phase_deg) << "\n";
    os << "coarse_delay_frames = " << fb.chain.coarse_delay_frames << "\n";
    os << "fine_delay_s = " << num(fb.chain.fine_delay) << "\n";
    os << "latency_s = " << num(fb.chain.latency) << "\n";
    os << "filter_phase_deg = " << num(fb.filter_phase_deg) << "\n";
    os << "filter_cutoff_hz = " << num(fb.chain.filter.cutoff_hz) << "\n";
    os << "filter_q = " << num(fb.chain.filter.q) << "\n";
    os << "dac_bits = " << fb.chain.dac.bits << "\n";
    os << "dac_vref_v = " << num(fb.chain.dac.vref) << "\n";
    os << "sign = " << fb.chain.sign << "\n";
    os << "geometry_factor = " << num(fb.geometry_factor) << "\n";
    os << "full_scale_m = " << num(fb.full_scale_m) << "\n\n";

    const auto& a = c.analysis;
    os << "[analysis]\n";
    os << "segment_len = " << a.welch.segment_len << "\n";
    os << "overlap = " << num(a.welch.overlap) << "\n";
    os << "window = " << analysis::to_string(a.welch.window) << "\n";
    os << "detrend = " << (a.welch.detrend ? "true" : "false") << "\n";
    os << "settle_time_s = " << num(a.settle_time) << "\n";
    os << "search_lo_hz = " << num(a.peak.search_lo_hz) << "\n";
    os << "search_hi_hz = " << num(a.peak.search_hi_hz) << "\n";
    os << "fwhm_multiple = " << num(a.peak.fwhm_multiple) << "\n";
    os << "min_half_width_hz = " << num(a.peak.min_half_width_hz) << "\n";
    os << "t_room_k = " << num(a.t_room) << "\n";
    os << "reference_pressure_mbar = " << num(a.reference_pressure_mbar) << "\n";
    os << "reference_seeds = " << a.reference_seeds << "\n\n";

    os << "[sweep]\n";
    os << "phase_grid_deg = " << c.sweep.phase_grid_deg << "\n";
    os << "gain_grid = " << c.sweep.gain_grid << "\n";
    os << "pressure_grid_mbar = " << c.sweep.pressure_grid_mbar << "\n";
    os << "seeds_per_point = " << c.sweep.seeds_per_point << "\n";
    os << "workers = " << c.sweep.workers << "\n";
    os << "feedback_off = " << (c.sweep.feedback_off ? "true" : "false") << "\n\n";

    os << "[output]\n";
    os << "dir = " << c.output.dir << "\n";
    os << "save_traces = " << (c.output.save_traces ? "true" : "false") << "\n";
    os << "frame_dump_limit = " << c.output.frame_dump_limit << "\n";
    return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a(to_ini(cfg)); }

feedback::FeedbackConfig resolve_feedback(const ExperimentConfig& cfg) {
    const auto& fb = cfg.feedback;
    feedback::FeedbackConfig out = fb.chain;
    const auto& cam = cfg.in_loop.model;
    const double fps = cam.fps.value();
    const double f0 = cfg.trap.f0();

    out.force_coeff = feedback::force_coefficient(cfg.particle.charge_number, fb.geometry_factor, cfg.trap.z0);
    out.full_scale = std::isnan(fb.full_scale_m) ? 0.5 * cam.roi_height * cam.meters_per_pixel() : fb.full_scale_m;

    if (!std::isnan(fb.delay_phase_deg)) {
        double phase = std::fmod(fb.delay_phase_deg, 360.0);
        if (phase < 0.0) phase += 360.0;
        double total = phase / 360.0 / f0;
        // The same phase one period later when the latency alone overshoots it.
        if (total < out.latency) total += 1.0 / f0;
        const feedback::DelaySplit split = feedback::delay_for_total(total, fps, out.latency);
        out.coarse_delay_frames = split.coarse_frames;
        out.fine_delay = split.fine;
    }
    if (!std::isnan(fb.filter_phase_deg))
        out.filter.cutoff_hz = feedback::calibrate_cutoff(fb.filter_phase_deg, f0, fps, out.filter.q);
    return out;
}

}  // namespace levicool::config
