#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "levicool/dynamics.hpp"
#include "levicool/errors.hpp"

using namespace levicool;
using namespace levicool::dynamics;
using std::numbers::pi;

namespace {

constexpr double kB = 1.380649e-23;
const double kMass = 2200.0 * pi * std::pow(450e-9, 3) / 6.0;
const double kOmega = 2.0 * pi * 23.5;

struct Stats {
    double mean = 0.0, var = 0.0;
};

Stats stats(const std::vector<double>& x) {
    Stats s;
    for (double v : x) s.mean += v;
    s.mean /= static_cast<double>(x.size());
    for (double v : x) s.var += (v - s.mean) * (v - s.mean);
    s.var /= static_cast<double>(x.size() - 1);
    return s;
}

}  // namespace

TEST_CASE("sphere mass from diameter and density") {
    ParticleProps p;
    CHECK(particle_mass(p) == doctest::Approx(1.0497e-16).epsilon(1e-4));
    CHECK(p.mass() == doctest::Approx(2200.0 * pi * 450e-9 * 450e-9 * 450e-9 / 6.0).epsilon(1e-15));
    p.diameter = 1e-12;
    CHECK(particle_mass(p) < 1e-30);
    p.diameter = -1.0;
    CHECK_THROWS_AS(particle_mass(p), ConfigError);
}

TEST_CASE("Epstein damping rate") {
    Environment env;
    ParticleProps p;
    env.pressure_mbar = 0.0;
    CHECK(gas_damping_rate(env, p) == 0.0);

    env.pressure_mbar = 1e-4;
    // Independent single-line evaluation of c_E p / (rho r v_gas) for air.
    const double m_air = 28.97 * 1.66053906660e-27;
    const double expected =
        (1.0 + 8.0 / pi) * 1e-2 / (2200.0 * 225e-9 * std::sqrt(8.0 * kB * 300.0 / (pi * m_air)));
    env.gas_molecular_mass = m_air;
    CHECK(gas_damping_rate(env, p) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(gas_damping_rate(env, p) == doctest::Approx(0.1530).epsilon(2e-3));

    const double g1 = gas_damping_rate(env, p);
    env.pressure_mbar = 2e-4;
    CHECK(gas_damping_rate(env, p) == doctest::Approx(2.0 * g1).epsilon(1e-14));

    env.pressure_mbar = -1.0;
    CHECK_THROWS_AS(gas_damping_rate(env, p), ConfigError);
}

TEST_CASE("thermal force PSD") {
    CHECK(thermal_force_psd(0.0, kMass, 300.0) == 0.0);
    CHECK(thermal_force_psd(0.2, kMass, 600.0) == doctest::Approx(2.0 * thermal_force_psd(0.2, kMass, 300.0)));
    CHECK(thermal_force_psd(0.2, kMass, 300.0) == doctest::Approx(4.0 * kB * 300.0 * kMass * 0.2));
}

TEST_CASE("steady-state temperature adds excess heating") {
    Environment env;
    ParticleProps p;
    env.pressure_mbar = 1e-4;
    env.excess_force_psd = 0.0;
    CHECK(steady_state_temperature(env, p) == doctest::Approx(300.0));
    env.excess_force_psd = 2.7e-37;
    const double g = gas_damping_rate(env, p);
    CHECK(steady_state_temperature(env, p) == doctest::Approx(300.0 + 2.7e-37 / (4.0 * kB * p.mass() * g)));
}

TEST_CASE("undamped noiseless step is a rotation") {
    const double a = 3e-6;
    Rng rng(1);
    for (double dt : {1e-5, 1e-3, 4.5e-3, 0.02}) {
        const ParticleState s = step({a, 0.0, 0.0}, dt, 0.0, 0.0, {kOmega, 0.0, kMass}, rng);
        CHECK(s.z == doctest::Approx(a * std::cos(kOmega * dt)).epsilon(1e-12));
        CHECK(s.v == doctest::Approx(-a * kOmega * std::sin(kOmega * dt)).epsilon(1e-12));
        CHECK(s.t == doctest::Approx(dt));
    }
}

TEST_CASE("constant force settles at the static deflection") {
    Rng rng(2);
    const double f = 1e-15;
    ParticleState s{1e-6, 0.0, 0.0};
    for (int i = 0; i < 2000; ++i) s = step(s, 0.01, f, 0.0, {kOmega, 5.0, kMass}, rng);
    CHECK(s.z == doctest::Approx(f / (kMass * kOmega * kOmega)).epsilon(1e-9));

    ParticleState s2{1e-6, 0.0, 0.0};
    for (int i = 0; i < 2000; ++i) s2 = step(s2, 0.01, 2.0 * f, 0.0, {kOmega, 5.0, kMass}, rng);
    CHECK(s2.z == doctest::Approx(2.0 * s.z).epsilon(1e-9));
}

TEST_CASE("propagator composes exactly over half steps") {
    // phi(h)^2 = phi(2h) and P(2h) = phi P phi^T + P.
    for (double gamma : {0.0, 0.15, 15.0, 2.0 * kOmega, 900.0}) {
        for (double dt : {1e-4, 4.5e-3 / 16.0, 4.5e-3}) {
            const Propagator full(kOmega, gamma, kMass, dt);
            const Propagator half(kOmega, gamma, kMass, 0.5 * dt);
            const auto& f = full.phi();
            const auto& h = half.phi();
            const auto& ph = half.unit_covariance();
            const auto& pf = full.unit_covariance();
            for (int i = 0; i < 2; ++i) {
                for (int j = 0; j < 2; ++j) {
                    const double composed = h[i][0] * h[0][j] + h[i][1] * h[1][j];
                    CHECK(f[i][j] == doctest::Approx(composed).epsilon(1e-9).scale(std::abs(f[0][0]) + 1e-30));
                    double c = ph[i][j];
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) c += h[i][a] * ph[a][b] * h[j][b];
                    CHECK(pf[i][j] == doctest::Approx(c).epsilon(1e-8));
                }
            }
        }
    }
}

TEST_CASE("closed form and quadrature covariance agree across the critical-damping switch") {
    // q dt^2 slightly above and below the switch point.
    const double dt = 4.5e-3 / 16.0;
    const double q_switch = 1e-4 / (dt * dt);
    auto cov_at = [&](double q) {
        const double gamma = 2.0 * std::sqrt(kOmega * kOmega - q);
        return Propagator(kOmega, gamma, kMass, dt).unit_covariance()[1][1];
    };
    CHECK(cov_at(q_switch * (1.0 + 1e-7)) == doctest::Approx(cov_at(q_switch * (1.0 - 1e-7))).epsilon(1e-8));
}

TEST_CASE("exact step matches a fine Euler-Maruyama reference") {
    const double gamma = 20.0;
    const double temp = 300.0;
    const double psd = thermal_force_psd(gamma, kMass, temp);
    const double dt = 4.5e-3;
    const int n_steps = 10;
    const int n_paths = 3000;
    const double z0 = 2e-5;

    std::vector<double> exact, em;
    Rng r1(11), r2(12);
    const Propagator prop(kOmega, gamma, kMass, dt);
    for (int p = 0; p < n_paths; ++p) {
        ParticleState s{z0, 0.0, 0.0};
        const NoiseSource src[] = {{psd, &r1}};
        for (int i = 0; i < n_steps; ++i) s = step(s, prop, 0.0, src);
        exact.push_back(s.z);

        // Euler-Maruyama with dt/100: dv = (-w^2 z - g v) dt + sqrt(S/2)/m dW.
        double z = z0, v = 0.0;
        const double h = dt / 100.0;
        const double kick = std::sqrt(0.5 * psd * h) / kMass;
        for (int i = 0; i < n_steps * 100; ++i) {
            const double a = -kOmega * kOmega * z - gamma * v;
            z += v * h;
            v += a * h + kick * r2.normal();
        }
        em.push_back(z);
    }
    const Stats a = stats(exact), b = stats(em);
    const double se_mean = std::sqrt(a.var / n_paths + b.var / n_paths);
    CHECK(std::abs(a.mean - b.mean) < 3.0 * se_mean);
    const double se_var = std::sqrt(2.0 / (n_paths - 1)) * std::sqrt(a.var * a.var + b.var * b.var);
    CHECK(std::abs(a.var - b.var) < 3.0 * se_var);
}

TEST_CASE("free oscillator equilibrates to k T / (m w0^2)") {
    const double gamma = 15.0;
    const double temp = 300.0;
    Rng init(3), noise(4);
    ParticleState s = thermal_init(kMass, kOmega, temp, init);
    const double psd = thermal_force_psd(gamma, kMass, temp);
    const Propagator prop(kOmega, gamma, kMass, 4.5e-3);
    const NoiseSource src[] = {{psd, &noise}};
    double acc = 0.0;
    const int n = 400000;  // 1800 s, about 27000 damping times
    for (int i = 0; i < n; ++i) {
        s = step(s, prop, 0.0, src);
        acc += s.z * s.z;
    }
    CHECK(acc / n == doctest::Approx(kB * temp / (kMass * kOmega * kOmega)).epsilon(0.03));
}

TEST_CASE("thermal_init draws") {
    Rng rng(5);
    std::vector<double> z, v;
    double zv = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const ParticleState s = thermal_init(kMass, kOmega, 300.0, rng);
        z.push_back(s.z);
        v.push_back(s.v);
        zv += s.z * s.v;
    }
    const double var_z = kB * 300.0 / (kMass * kOmega * kOmega);
    const double var_v = kB * 300.0 / kMass;
    CHECK(stats(z).var == doctest::Approx(var_z).epsilon(0.03));
    CHECK(stats(v).var == doctest::Approx(var_v).epsilon(0.03));
    CHECK(std::abs(zv / 100000.0) < 4.0 * std::sqrt(var_z * var_v / 100000.0));

    Rng rng0(6);
    const ParticleState cold = thermal_init(kMass, kOmega, 0.0, rng0);
    CHECK(cold.z == 0.0);
    CHECK(cold.v == 0.0);
}

TEST_CASE("same seed gives an identical trajectory") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        ParticleState s{1e-6, 0.0, 0.0};
        for (int i = 0; i < 1000; ++i) s = step(s, 1e-3, 0.0, 1e-35, {kOmega, 1.0, kMass}, rng);
        return s;
    };
    const ParticleState a = run(9), b = run(9), c = run(10);
    CHECK(a.z == b.z);
    CHECK(a.v == b.v);
    CHECK(a.z != c.z);
}

TEST_CASE("invalid inputs") {
    Rng rng(1);
    CHECK_THROWS_AS(step({0.0, 0.0, 0.0}, 0.0, 0.0, 0.0, {kOmega, 0.0, kMass}, rng), IntegrationFault);
    CHECK_THROWS_AS(step({NAN, 0.0, 0.0}, 1e-3, 0.0, 0.0, {kOmega, 0.0, kMass}, rng), IntegrationFault);
    TrapConfig trap;
    trap.omega0 = 2.0 * pi * 600.0;
    CHECK_THROWS_AS(trap.validate(), ConfigError);
    trap.omega0 = 2.0 * pi * 50.0;
    CHECK_NOTHROW(trap.validate());
    CHECK(trap.outside_typical_band());
    Environment env;
    env.bath_temperature = 0.0;
    CHECK_THROWS_AS(env.validate(), ConfigError);
}
