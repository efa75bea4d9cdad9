#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "levicool/errors.hpp"
#include "levicool/harness.hpp"
#include "levicool/rng.hpp"

namespace levicool::harness {

namespace fs = std::filesystem;

namespace {

constexpr const char* kOn = "feedback_on";
constexpr const char* kOff = "feedback_off";
constexpr const char* kReference = "reference";

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

std::vector<std::string> split_csv(const std::string& line, std::size_t max_fields) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (out.size() + 1 < max_fields) {
        const auto comma = line.find(',', pos);
        if (comma == std::string::npos) break;
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    out.push_back(line.substr(pos));
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write '" + path.string() + "'");
    os << text;
}

std::vector<double> axis_grid(const config::ExperimentConfig& cfg, SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Phase: return config::parse_grid(cfg.sweep.phase_grid_deg);
        case SweepAxis::Gain: return config::parse_grid(cfg.sweep.gain_grid);
        case SweepAxis::Pressure: return config::parse_grid(cfg.sweep.pressure_grid_mbar);
    }
    return {};
}

config::ExperimentConfig record_config(const config::ExperimentConfig& base, SweepAxis axis, const SweepRecord& r) {
    config::ExperimentConfig cfg = base;
    if (r.group == kReference) {
        cfg.environment.pressure_mbar = base.analysis.reference_pressure_mbar;
        cfg.feedback.chain.enabled = false;
    } else {
        if (!std::isnan(r.param)) cfg = apply_axis(cfg, axis, r.param);
        if (r.group == kOff) cfg.feedback.chain.enabled = false;
    }
    cfg.run.seed = r.seed;
    return cfg;
}

std::vector<analysis::SweepRun> group_runs(const std::vector<SweepRecord>& records, const std::string& group) {
    std::vector<analysis::SweepRun> runs;
    for (const auto& r : records) {
        if (r.group != group) continue;
        runs.push_back({r.param, r.seed, r.ok, r.error, r.area, r.t_eff, r.omega_cm});
    }
    return runs;
}

void finish(SweepResult& result) {
    std::vector<double> areas;
    for (const auto& r : result.records)
        if (r.group == kReference && r.ok) areas.push_back(r.area);
    result.calibration = analysis::calibrate_temperature(
        areas, result.calibration.t_room,
        fmt::format("{} feedback-off reference runs", areas.size()));
    for (auto& r : result.records)
        if (r.ok) r.t_eff = result.calibration.coeff * r.area;
    const bool circular = result.axis == SweepAxis::Phase;
    const auto on = group_runs(result.records, kOn);
    const auto off = group_runs(result.records, kOff);
    result.feedback_on = analysis::sweep_summary(on, circular);
    result.feedback_off = analysis::sweep_summary(off, false);
}

void write_records(const fs::path& path, const std::vector<SweepRecord>& records) {
    std::ostringstream os;
    os << "group,param,seed_index,seed,path,ok,lost,area_m2,omega_cm_rad_s,linewidth_hz,t_mass_k,t_eff_k,error\n";
    for (const auto& r : records)
        os << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.group, r.param, r.seed_index, r.seed, r.path,
                          r.ok ? 1 : 0, r.lost ? 1 : 0, r.area, r.omega_cm, r.linewidth_hz, r.t_mass, r.t_eff,
                          sanitize(r.error));
    write_text(path, os.str());
}

std::vector<SweepRecord> read_records(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    std::vector<SweepRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line, 13);
        if (c.size() != 13) throw Error("malformed row in " + path.string());
        SweepRecord r;
        r.group = c[0];
        r.param = std::stod(c[1]);
        r.seed_index = std::stoi(c[2]);
        r.seed = std::stoull(c[3]);
        r.path = c[4];
        r.ok = c[5] == "1";
        r.lost = c[6] == "1";
        r.error = c[12];
        out.push_back(std::move(r));
    }
    return out;
}

void write_summary(const fs::path& path, const analysis::SweepSummary& s) {
    std::ostringstream os;
    os << "param,area_m2,t_eff_k,omega_cm_rad_s\n";
    for (const auto& row : s.rows) os << fmt::format("{},{},{},{}\n", row.param, row.area, row.t_eff, row.omega_cm);
    write_text(path, os.str());
}

nlohmann::ordered_json summary_json(const analysis::SweepSummary& s) {
    nlohmann::ordered_json j;
    j["argmin_param"] = s.argmin_param;
    j["min_t_eff_k"] = s.min_t_eff;
    j["argmax_param"] = s.argmax_param;
    j["max_t_eff_k"] = s.max_t_eff;
    std::vector<double> minima;
    for (auto i : s.local_minima) minima.push_back(s.rows[i].param);
    j["local_minima"] = minima;
    std::vector<nlohmann::ordered_json> rows;
    for (const auto& r : s.rows)
        rows.push_back({{"param", r.param}, {"n_ok", r.n_ok}, {"n_failed", r.n_failed}, {"t_eff_k", r.t_eff},
                        {"t_eff_sem_k", r.t_eff_sem}});
    j["rows"] = rows;
    return j;
}

}  // namespace

SweepAxis parse_axis(const std::string& s) {
    if (s == "phase") return SweepAxis::Phase;
    if (s == "gain") return SweepAxis::Gain;
    if (s == "pressure") return SweepAxis::Pressure;
    throw ConfigError("unknown sweep axis '" + s + "' (phase | gain | pressure)");
}

std::string to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Phase: return "phase";
        case SweepAxis::Gain: return "gain";
        case SweepAxis::Pressure: return "pressure";
    }
    return "phase";
}

config::ExperimentConfig apply_axis(config::ExperimentConfig cfg, SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::Phase: cfg.feedback.delay_phase_deg = value; break;
        case SweepAxis::Gain: cfg.feedback.chain.gain = value; break;
        case SweepAxis::Pressure: cfg.environment.pressure_mbar = value; break;
    }
    return cfg;
}

std::uint64_t family_seed(std::uint64_t root, const std::string& family, int index) {
    return stream_seed(root, family + "/" + std::to_string(index));
}

int resolve_workers(const config::ExperimentConfig& cfg, int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("LEVICOOL_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    if (cfg.sweep.workers > 0) return cfg.sweep.workers;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

SweepResult run_sweep(const config::ExperimentConfig& base, SweepAxis axis, const fs::path& dir,
                      const SweepOptions& opts) {
    base.validate();
    SweepResult result;
    result.axis = axis;
    result.grid = opts.grid ? *opts.grid : axis_grid(base, axis);
    if (result.grid.empty()) throw ConfigError("sweep grid is empty");
    result.calibration.t_room = base.analysis.t_room;

    const std::uint64_t root = base.run.seed;
    const int n_seeds = base.sweep.seeds_per_point;
    auto add = [&](const std::string& group, double param, const std::string& path, int j, const std::string& family) {
        SweepRecord r;
        r.group = group;
        r.param = param;
        r.seed_index = j;
        r.seed = family_seed(root, family, j);
        r.path = path;
        result.records.push_back(r);
    };
    for (std::size_t i = 0; i < result.grid.size(); ++i)
        for (int j = 0; j < n_seeds; ++j) add(kOn, result.grid[i], fmt::format("on/p{:03d}/s{}", i, j), j, "pair");
    if (base.sweep.feedback_off) {
        if (axis == SweepAxis::Pressure) {
            for (std::size_t i = 0; i < result.grid.size(); ++i)
                for (int j = 0; j < n_seeds; ++j)
                    add(kOff, result.grid[i], fmt::format("off/p{:03d}/s{}", i, j), j, "pair");
        } else {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            for (int j = 0; j < n_seeds; ++j) add(kOff, nan, fmt::format("off/s{}", j), j, "pair");
        }
    }
    for (int j = 0; j < base.analysis.reference_seeds; ++j)
        add(kReference, base.analysis.reference_pressure_mbar, fmt::format("reference/s{}", j), j, "reference");

    fs::create_directories(dir);
    write_text(dir / "config.ini", config::to_ini(base));
    {
        nlohmann::ordered_json meta;
        meta["version"] = code_version();
        meta["config_hash"] = fmt::format("{:016x}", config::config_hash(base));
        meta["seed"] = root;
        meta["axis"] = to_string(axis);
        meta["grid"] = result.grid;
        write_text(dir / "metadata.json", meta.dump(2) + "\n");
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < result.records.size(); i = next++) {
            SweepRecord& r = result.records[i];
            try {
                const config::ExperimentConfig cfg = record_config(base, axis, r);
                const RunArtifacts run = run_closed_loop(cfg);
                if (run.lost) {
                    r.ok = false;
                    r.lost = true;
                    r.error = run.loss_message;
                    write_run(dir / r.path, cfg, run, nullptr, opts.save_traces);
                    continue;
                }
                const RunAnalysis ra = analyze_run(cfg, run);
                write_run(dir / r.path, cfg, run, &ra, opts.save_traces);
                r.area = ra.estimate.area;
                r.omega_cm = ra.estimate.omega_cm;
                r.linewidth_hz = ra.estimate.linewidth_hz;
                r.t_mass = ra.estimate.t_mass;
            } catch (const std::exception& e) {
                r.ok = false;
                r.error = e.what();
            }
        }
    };
    const int n_workers = std::min<int>(resolve_workers(base, opts.workers), static_cast<int>(result.records.size()));
    std::vector<std::thread> pool;
    for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    // Keep the per-run table even if calibration fails below.
    write_records(dir / "runs.csv", result.records);
    finish(result);
    write_sweep_tables(dir, result);
    return result;
}

SweepResult analyze_sweep_dir(const fs::path& dir) {
    const config::ExperimentConfig base = config::load_file(dir / "config.ini");
    std::ifstream meta_in(dir / "metadata.json");
    if (!meta_in) throw Error("no metadata.json in " + dir.string());
    const auto meta = nlohmann::json::parse(meta_in);

    SweepResult result;
    result.axis = parse_axis(meta.at("axis").get<std::string>());
    result.grid = meta.at("grid").get<std::vector<double>>();
    result.calibration.t_room = base.analysis.t_room;
    result.records = read_records(dir / "runs.csv");
    for (auto& r : result.records) {
        if (r.lost) continue;
        const fs::path psd_path = dir / r.path / "psd.csv";
        try {
            const config::ExperimentConfig cfg = record_config(base, result.axis, r);
            const auto est = analyze_psd(cfg, read_psd_csv(psd_path));
            r.ok = true;
            r.error.clear();
            r.area = est.area;
            r.omega_cm = est.omega_cm;
            r.linewidth_hz = est.linewidth_hz;
            r.t_mass = est.t_mass;
        } catch (const std::exception& e) {
            r.ok = false;
            r.error = e.what();
        }
    }
    finish(result);
    return result;
}

void write_sweep_tables(const fs::path& dir, const SweepResult& result) {
    write_records(dir / "runs.csv", result.records);
    write_summary(dir / "sweep.csv", result.feedback_on);
    write_summary(dir / "sweep_feedback_off.csv", result.feedback_off);

    std::ostringstream ref;
    ref << "seed_index,seed,area_m2,t_eff_k\n";
    for (const auto& r : result.records)
        if (r.group == kReference) ref << fmt::format("{},{},{},{}\n", r.seed_index, r.seed, r.area, r.t_eff);
    write_text(dir / "reference.csv", ref.str());

    nlohmann::ordered_json j;
    j["axis"] = to_string(result.axis);
    j["calibration"] = {{"coeff_k_per_m2", result.calibration.coeff},
                        {"t_room_k", result.calibration.t_room},
                        {"n_references", result.calibration.n_references},
                        {"spread", result.calibration.spread},
                        {"spread_warning", result.calibration.spread_warning},
                        {"provenance", result.calibration.provenance}};
    j["feedback_on"] = summary_json(result.feedback_on);
    j["feedback_off"] = summary_json(result.feedback_off);
    write_text(dir / "summary.json", j.dump(2) + "\n");
}

}  // namespace levicool::harness
