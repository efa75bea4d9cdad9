#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "levicool/config.hpp"
#include "levicool/errors.hpp"
#include "levicool/feedback.hpp"
#include "levicool/harness.hpp"

using namespace levicool;
using namespace levicool::harness;
namespace fs = std::filesystem;

namespace {

config::ExperimentConfig short_config(double duration = 4.0) {
    config::ExperimentConfig c = config::ExperimentConfig::defaults();
    c.run.duration = duration;
    c.analysis.settle_time = 0.5;
    c.analysis.welch.segment_len = 1024;
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("levicool_test_" + name);
    fs::remove_all(p);
    return p;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n, mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("two cameras sample at their own rates") {
    const auto run = run_closed_loop(short_config());
    REQUIRE_FALSE(run.lost);
    const double ratio = static_cast<double>(run.out_of_loop.size()) / static_cast<double>(run.in_loop.size());
    CHECK(ratio == doctest::Approx(875.26 / 221.0).epsilon(0.005));
    CHECK(run.in_loop.size() == static_cast<std::size_t>(std::floor(4.0 * 221.0)));
    CHECK(run.true_state.size() == run.out_of_loop.size());
    CHECK(run.telemetry.size() == run.in_loop.size());
    for (std::size_t i = 1; i < run.out_of_loop.size(); ++i)
        CHECK(run.out_of_loop[i].t - run.out_of_loop[i - 1].t == doctest::Approx(1.0 / 875.26).epsilon(1e-9));
    for (const auto& a : run.telemetry) CHECK(a.t_actuate > a.t_sample);
    CHECK(run.metadata.master_clock_hz == "9671623");
}

TEST_CASE("runs are deterministic in the seed") {
    auto c = short_config(3.5);
    const auto a = run_closed_loop(c);
    const auto b = run_closed_loop(c);
    REQUIRE(a.true_state.size() == b.true_state.size());
    bool same = true;
    for (std::size_t i = 0; i < a.true_state.size(); ++i)
        same = same && a.true_state[i].z == b.true_state[i].z && a.out_of_loop[i].z_est == b.out_of_loop[i].z_est;
    CHECK(same);
    c.run.seed = 2;
    const auto d = run_closed_loop(c);
    CHECK(d.true_state[100].z != a.true_state[100].z);
}

TEST_CASE("disabled feedback and zero gain give the same motion") {
    auto off = short_config(3.5);
    off.feedback.chain.enabled = false;
    auto zero = short_config(3.5);
    zero.feedback.chain.gain = 0.0;
    const auto a = run_closed_loop(off);
    const auto b = run_closed_loop(zero);
    REQUIRE(a.true_state.size() == b.true_state.size());
    bool same = true;
    for (std::size_t i = 0; i < a.true_state.size(); ++i) same = same && a.true_state[i].z == b.true_state[i].z;
    CHECK(same);
    for (const auto& t : b.telemetry) CHECK(t.force == 0.0);
}

TEST_CASE("both cameras track the same motion") {
    auto c = short_config(4.0);
    c.environment.pressure_mbar = 1e-2;
    c.feedback.chain.enabled = false;
    const auto run = run_closed_loop(c);
    std::vector<double> truth, oop;
    for (std::size_t i = 0; i < run.out_of_loop.size(); ++i) {
        truth.push_back(run.true_state[i].z);
        oop.push_back(run.out_of_loop[i].z_est);
    }
    CHECK(correlation(truth, oop) > 0.99);

    // Nearest out-of-loop sample for each in-loop sample.
    std::vector<double> il, near;
    std::size_t j = 0;
    for (const auto& s : run.in_loop) {
        while (j + 1 < run.out_of_loop.size() &&
               std::abs(run.out_of_loop[j + 1].t - s.t) < std::abs(run.out_of_loop[j].t - s.t))
            ++j;
        il.push_back(s.z_est);
        near.push_back(run.out_of_loop[j].z_est);
    }
    // Same low-pass on both keeps the comparison phase-neutral while removing
    // most of the in-loop shot noise.
    feedback::Biquad fa({40.0, 0.7071}, 221.0), fb({40.0, 0.7071}, 221.0);
    for (std::size_t i = 0; i < il.size(); ++i) il[i] = fa.step(il[i]), near[i] = fb.step(near[i]);
    il.erase(il.begin(), il.begin() + 50);
    near.erase(near.begin(), near.begin() + 50);
    CHECK(correlation(il, near) > 0.95);
}

TEST_CASE("a lost particle returns partial artifacts") {
    auto c = short_config(4.0);
    // Anti-damping feedback drives the motion out of the field of view.
    c.feedback.delay_phase_deg = 290.0;
    c.feedback.chain.gain = 1.0;
    const auto run = run_closed_loop(c);
    CHECK(run.lost);
    CHECK_FALSE(run.loss_message.empty());
    REQUIRE_FALSE(run.out_of_loop.empty());
    CHECK(run.out_of_loop.back().t < 4.0);
}

TEST_CASE("analysis picks the motional peak") {
    auto c = short_config(8.0);
    c.environment.pressure_mbar = 1e-2;
    c.feedback.chain.enabled = false;
    const auto run = run_closed_loop(c);
    const auto res = analyze_run(c, run);
    CHECK(res.fs == doctest::Approx(875.26));
    CHECK(res.estimate.omega_cm / (2.0 * 3.141592653589793) == doctest::Approx(23.5).epsilon(0.02));
    CHECK(res.estimate.t_eff == res.estimate.t_mass);
    CHECK(res.estimate.t_mass > 150.0);
    CHECK(res.estimate.t_mass < 600.0);
    const auto calibrated = analyze_run(c, run, 2.0);
    CHECK(calibrated.estimate.t_eff == doctest::Approx(2.0 * calibrated.estimate.area));
}

TEST_CASE("run artifacts round trip") {
    auto c = short_config(4.0);
    const auto run = run_closed_loop(c);
    const auto res = analyze_run(c, run);
    const fs::path dir = scratch("run");
    write_run(dir, c, run, &res);
    for (const char* f : {"config.ini", "metadata.json", "psd.csv", "true_state.csv", "in_loop.csv", "out_of_loop.csv",
                          "telemetry.csv"})
        CHECK(fs::exists(dir / f));
    CHECK(config::to_ini(config::load_file(dir / "config.ini")) == config::to_ini(c));
    const auto psd = read_psd_csv(dir / "psd.csv");
    REQUIRE(psd.values.size() == res.psd.values.size());
    CHECK(psd.df == doctest::Approx(res.psd.df).epsilon(1e-12));
    CHECK(analyze_psd(c, psd).area == doctest::Approx(res.estimate.area).epsilon(1e-9));
    const auto samples = read_samples_csv(dir / "out_of_loop.csv");
    REQUIRE(samples.size() == run.out_of_loop.size());
    CHECK(samples[17].z_est == doctest::Approx(run.out_of_loop[17].z_est).epsilon(1e-12));
    fs::remove_all(dir);
}

TEST_CASE("sweep axes and seed families") {
    CHECK(parse_axis("phase") == SweepAxis::Phase);
    CHECK(to_string(SweepAxis::Pressure) == "pressure");
    CHECK_THROWS_AS(parse_axis("charge"), ConfigError);
    const auto base = config::ExperimentConfig::defaults();
    CHECK(apply_axis(base, SweepAxis::Phase, 45.0).feedback.delay_phase_deg == 45.0);
    CHECK(apply_axis(base, SweepAxis::Gain, 0.3).feedback.chain.gain == 0.3);
    CHECK(apply_axis(base, SweepAxis::Pressure, 1e-3).environment.pressure_mbar == 1e-3);
    CHECK(family_seed(1, "pair", 0) == family_seed(1, "pair", 0));
    CHECK(family_seed(1, "pair", 0) != family_seed(1, "pair", 1));
    CHECK(family_seed(1, "pair", 0) != family_seed(1, "reference", 0));
    CHECK(resolve_workers(base, 3) == 3);
}

TEST_CASE("small sweep writes tables that re-analysis reproduces") {
    auto c = short_config(4.0);
    c.sweep.seeds_per_point = 1;
    c.analysis.reference_seeds = 1;
    const fs::path dir = scratch("sweep");
    SweepOptions opts;
    opts.workers = 1;
    opts.grid = std::vector<double>{0.0, 180.0};
    const SweepResult r = run_sweep(c, SweepAxis::Phase, dir, opts);
    CHECK(r.records.size() == 4);  // 2 on, 1 off baseline, 1 reference
    for (const char* f : {"runs.csv", "sweep.csv", "sweep_feedback_off.csv", "reference.csv", "summary.json"})
        CHECK(fs::exists(dir / f));
    CHECK(r.calibration.n_references == 1);
    CHECK(r.feedback_on.rows.size() == 2);

    const std::string before = slurp(dir / "sweep.csv");
    const SweepResult again = analyze_sweep_dir(dir);
    REQUIRE(again.records.size() == r.records.size());
    for (std::size_t i = 0; i < r.records.size(); ++i)
        CHECK(again.records[i].t_eff == doctest::Approx(r.records[i].t_eff).epsilon(1e-9));
    write_sweep_tables(dir, again);
    CHECK(slurp(dir / "sweep.csv") == before);
    fs::remove_all(dir);
}
