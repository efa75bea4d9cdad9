#include <fmt/format.h>

#include <fstream>
#include <numbers>
#include <json.hpp>
#include <sstream>

#include "levicool/errors.hpp"
#include "levicool/harness.hpp"

namespace levicool::harness {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write '" + path.string() + "'");
    return os;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

void write_samples(const fs::path& path, const std::vector<localization::PositionSample>& samples) {
    auto os = open_out(path);
    os << "t_s,z_est_m,x_est_m,estimator,quality\n";
    for (const auto& s : samples) os << fmt::format("{},{},{},{},{}\n", s.t, s.z_est, s.x_est, s.estimator, s.quality);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const fs::path& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("bad number '" + s + "' in " + path.string());
    }
}

nlohmann::json estimate_json(const analysis::TemperatureEstimate& e) {
    return {{"area_m2", e.area},          {"band_hz", {e.band.lo, e.band.hi}}, {"omega_cm_rad_s", e.omega_cm},
            {"linewidth_hz", e.linewidth_hz}, {"t_mass_k", e.t_mass},         {"calib_coeff_k_per_m2", e.calib_coeff},
            {"t_eff_k", e.t_eff}};
}

}  // namespace

void write_psd_csv(const fs::path& path, const analysis::Psd& psd) {
    auto os = open_out(path);
    os << "freq_hz,psd_m2_per_hz\n";
    for (std::size_t k = 0; k < psd.freqs.size(); ++k) os << fmt::format("{},{}\n", psd.freqs[k], psd.values[k]);
}

analysis::Psd read_psd_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "freq_hz,psd_m2_per_hz") throw Error("unexpected PSD header in " + path.string());
    analysis::Psd psd;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 2) throw Error("malformed PSD row in " + path.string());
        psd.freqs.push_back(parse_double(cells[0], path));
        psd.values.push_back(parse_double(cells[1], path));
    }
    if (psd.freqs.size() < 3) throw InsufficientData("PSD file " + path.string() + " has too few bins");
    psd.df = psd.freqs[1] - psd.freqs[0];
    psd.segment_len = 2 * (psd.freqs.size() - 1);
    psd.fs = psd.df * static_cast<double>(psd.segment_len);
    return psd;
}

std::vector<localization::PositionSample> read_samples_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "t_s,z_est_m,x_est_m,estimator,quality") throw Error("unexpected trace header in " + path.string());
    std::vector<localization::PositionSample> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != 5) throw Error("malformed trace row in " + path.string());
        localization::PositionSample s;
        s.t = parse_double(c[0], path);
        s.z_est = parse_double(c[1], path);
        s.x_est = parse_double(c[2], path);
        s.estimator = c[3];
        s.quality = parse_double(c[4], path);
        out.push_back(std::move(s));
    }
    return out;
}

void write_run(const fs::path& dir, const config::ExperimentConfig& cfg, const RunArtifacts& run,
               const RunAnalysis* analysis, bool traces) {
    fs::create_directories(dir);
    {
        auto os = open_out(dir / "config.ini");
        os << config::to_ini(cfg);
    }

    const auto& md = run.metadata;
    const auto& p = md.prediction;
    nlohmann::ordered_json meta;
    meta["version"] = md.version;
    meta["config_hash"] = hex64(md.config_hash);
    meta["seed"] = md.seed;
    meta["master_clock_hz"] = md.master_clock_hz;
    meta["lost"] = run.lost;
    meta["loss_message"] = run.loss_message;
    meta["mass_kg"] = md.mass;
    meta["gamma_gas_per_s"] = md.gamma;
    meta["steady_state_temperature_k"] = md.steady_state_temperature;
    meta["feedback"] = {{"enabled", md.feedback.enabled},
                        {"gain", md.feedback.gain},
                        {"coarse_delay_frames", md.feedback.coarse_delay_frames},
                        {"fine_delay_s", md.feedback.fine_delay},
                        {"latency_s", md.feedback.latency},
                        {"filter_cutoff_hz", md.feedback.filter.cutoff_hz},
                        {"filter_q", md.feedback.filter.q},
                        {"force_coeff_n_per_v", md.feedback.force_coeff},
                        {"full_scale_m", md.feedback.full_scale},
                        {"sign", md.feedback.sign}};
    meta["prediction"] = {{"delay_s", p.delay},
                          {"delay_phase_deg", p.delay_phase * 180.0 / std::numbers::pi},
                          {"filter_lag_deg", p.filter_lag * 180.0 / std::numbers::pi},
                          {"hold_phase_deg", p.hold_phase * 180.0 / std::numbers::pi},
                          {"total_phase_deg", p.total_phase * 180.0 / std::numbers::pi},
                          {"damping_rate_per_s", p.damping_rate},
                          {"omega_sq_shift", p.omega_sq_shift}};
    meta["counts"] = {{"in_loop_samples", run.in_loop.size()},
                      {"out_of_loop_samples", run.out_of_loop.size()},
                      {"actuations", run.telemetry.size()},
                      {"saturations", run.saturations},
                      {"estimator_failures", run.estimator_failures}};
    if (analysis) meta["analysis"] = estimate_json(analysis->estimate);
    {
        auto os = open_out(dir / "metadata.json");
        os << meta.dump(2) << "\n";
    }

    if (analysis) write_psd_csv(dir / "psd.csv", analysis->psd);
    if (!traces) return;

    {
        auto os = open_out(dir / "true_state.csv");
        os << "t_s,z_true_m,v_true_m_s\n";
        for (const auto& s : run.true_state) os << fmt::format("{},{},{}\n", s.t, s.z, s.v);
    }
    write_samples(dir / "in_loop.csv", run.in_loop);
    write_samples(dir / "out_of_loop.csv", run.out_of_loop);
    {
        auto os = open_out(dir / "telemetry.csv");
        os << "tick,t_sample_s,t_actuate_s,raw_m,delayed_m,filtered_m,dac_v,output_v,force_n,saturated\n";
        for (const auto& a : run.telemetry)
            os << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", a.tick, a.t_sample, a.t_actuate, a.raw, a.delayed,
                              a.filtered, a.pin_volts, a.fb_volts, a.force, a.saturated ? 1 : 0);
    }
    if (!run.dumped_frames.empty()) {
        fs::create_directories(dir / "frames");
        std::size_t idx[2] = {0, 0};
        for (const auto& f : run.dumped_frames) {
            const int c = f.camera == imaging::CameraRole::InLoop ? 0 : 1;
            auto os = open_out(dir / "frames" / fmt::format("{}_{:06d}.csv", imaging::to_string(f.camera), idx[c]++));
            imaging::write_frame_csv(os, f);
        }
    }
}

}  // namespace levicool::harness
