#include "levicool/dynamics.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "levicool/constants.hpp"
#include "levicool/errors.hpp"

namespace levicool::dynamics {

using constants::kBoltzmann;
using std::numbers::pi;

void ParticleProps::validate() const {
    if (!(diameter > 0.0)) throw ConfigError("particle diameter must be > 0");
    if (!(density > 0.0)) throw ConfigError("particle density must be > 0");
}

double ParticleProps::mass() const { return particle_mass(*this); }

void TrapConfig::validate() const {
    if (!(omega0 > 0.0) || !std::isfinite(omega0)) throw ConfigError("omega0 must be > 0");
    if (!(z0 > 0.0) || !(r0 > 0.0)) throw ConfigError("trap geometry lengths must be > 0");
    if (!(min_freq_hz > 0.0) || !(max_freq_hz > min_freq_hz)) throw ConfigError("invalid trap frequency band");
    const double f = f0();
    if (f < min_freq_hz || f > max_freq_hz)
        throw ConfigError("trap frequency " + std::to_string(f) + " Hz outside validity band");
}

double TrapConfig::f0() const { return omega0 / (2.0 * pi); }

bool TrapConfig::outside_typical_band() const {
    const double f = f0();
    return f < 20.0 || f > 40.0;
}

void Environment::validate() const {
    if (!(pressure_mbar >= 0.0) || !std::isfinite(pressure_mbar)) throw ConfigError("pressure must be >= 0");
    if (!(bath_temperature > 0.0)) throw ConfigError("bath temperature must be > 0");
    if (!(gas_molecular_mass > 0.0)) throw ConfigError("gas molecular mass must be > 0");
    if (!(excess_force_psd >= 0.0)) throw ConfigError("excess force PSD must be >= 0");
}

double particle_mass(const ParticleProps& props) {
    props.validate();
    return props.density * pi * props.diameter * props.diameter * props.diameter / 6.0;
}

double gas_damping_rate(const Environment& env, const ParticleProps& props) {
    env.validate();
    props.validate();
    const double v_gas = std::sqrt(8.0 * kBoltzmann * env.bath_temperature / (pi * env.gas_molecular_mass));
    const double radius = 0.5 * props.diameter;
    const double pressure_pa = env.pressure_mbar * constants::kMbarToPa;
    return kEpsteinDiffuse * pressure_pa / (props.density * radius * v_gas);
}

double thermal_force_psd(double gamma, double mass, double temperature) {
    if (gamma < 0.0 || !(mass > 0.0) || !(temperature > 0.0))
        throw ConfigError("thermal_force_psd needs gamma >= 0, m > 0, T > 0");
    return 4.0 * kBoltzmann * temperature * mass * gamma;
}

double steady_state_temperature(const Environment& env, const ParticleProps& props) {
    const double gamma = gas_damping_rate(env, props);
    if (env.excess_force_psd == 0.0) return env.bath_temperature;
    if (gamma == 0.0) throw ConfigError("excess heating without gas damping has no steady state");
    return env.bath_temperature + env.excess_force_psd / (4.0 * kBoltzmann * props.mass() * gamma);
}

namespace {

// S(s) and C(s) of the damped oscillator with q = omega0^2 - gamma^2/4:
// sin/cos, sinh/cosh or their critical limit, without cancellation near q = 0.
struct Basis {
    double s;
    double c;
};

Basis basis(double q, double s) {
    const double x = q * s * s;
    if (std::abs(x) < 1e-3) {
        return {s * (1.0 - x / 6.0 + x * x / 120.0 - x * x * x / 5040.0),
                1.0 - x / 2.0 + x * x / 24.0 - x * x * x / 720.0};
    }
    if (q > 0.0) {
        const double w = std::sqrt(q);
        return {std::sin(w * s) / w, std::cos(w * s)};
    }
    const double k = std::sqrt(-q);
    return {std::sinh(k * s) / k, std::cosh(k * s)};
}

// Integral of e^{-a s} over [0, t].
double exp_integral(double a, double t) { return a == 0.0 ? t : -std::expm1(-a * t) / a; }

struct Integrals {
    double ss;  // int e^{-2 beta s} S^2
    double sc;  // int e^{-2 beta s} S C
    double cc;  // int e^{-2 beta s} C^2
};

Integrals closed_form(double beta, double q, double t) {
    const double a = 2.0 * beta;
    const double j0 = exp_integral(a, t);
    if (q > 0.0) {
        const double w = std::sqrt(q);
        const double b = 2.0 * w;
        const double e = std::exp(-a * t);
        const double cb = std::cos(b * t), sb = std::sin(b * t);
        const double den = a * a + b * b;
        const double jc = (a - e * (a * cb - b * sb)) / den;
        const double js = (b - e * (a * sb + b * cb)) / den;
        return {(j0 - jc) / (2.0 * q), js / (2.0 * w), 0.5 * (j0 + jc)};
    }
    const double k = std::sqrt(-q);
    const double kp = exp_integral(a - 2.0 * k, t);
    const double km = exp_integral(a + 2.0 * k, t);
    const double jch = 0.5 * (kp + km);
    const double jsh = 0.5 * (kp - km);
    return {(jch - j0) / (-2.0 * q), jsh / (2.0 * k), 0.5 * (jch + j0)};
}

constexpr std::array<double, 10> kGlNodes = {
    -0.9739065285171717, -0.8650633666889845, -0.6794095682990244, -0.4333953941292472, -0.1488743389816312,
    0.1488743389816312,  0.4333953941292472,  0.6794095682990244,  0.8650633666889845,  0.9739065285171717};
constexpr std::array<double, 10> kGlWeights = {
    0.0666713443086881, 0.1494513491505806, 0.2190863625159820, 0.2692667143361304, 0.2955242247147529,
    0.2955242247147529, 0.2692667143361304, 0.2190863625159820, 0.1494513491505806, 0.0666713443086881};

Integrals quadrature(double beta, double q, double t) {
    const int panels = std::max(1, static_cast<int>(std::ceil(2.0 * beta * t)));
    const double h = t / panels;
    Integrals acc{0.0, 0.0, 0.0};
    for (int p = 0; p < panels; ++p) {
        const double mid = (p + 0.5) * h;
        for (std::size_t i = 0; i < kGlNodes.size(); ++i) {
            const double s = mid + 0.5 * h * kGlNodes[i];
            const double w = 0.5 * h * kGlWeights[i] * std::exp(-2.0 * beta * s);
            const Basis b = basis(q, s);
            acc.ss += w * b.s * b.s;
            acc.sc += w * b.s * b.c;
            acc.cc += w * b.c * b.c;
        }
    }
    return acc;
}

}  // namespace

Propagator::Propagator(double omega0, double gamma, double mass, double dt)
    : omega0_(omega0), mass_(mass), dt_(dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw IntegrationFault("propagator needs dt > 0");
    if (!(omega0 > 0.0) || gamma < 0.0 || !(mass > 0.0)) throw ConfigError("invalid oscillator parameters");
    const double beta = 0.5 * gamma;
    const double q = omega0 * omega0 - beta * beta;
    const double decay = std::exp(-beta * dt);
    const Basis b = basis(q, dt);
    phi_[0][0] = decay * (b.c + beta * b.s);
    phi_[0][1] = decay * b.s;
    phi_[1][0] = -omega0 * omega0 * decay * b.s;
    phi_[1][1] = decay * (b.c - beta * b.s);

    const Integrals in = std::abs(q) * dt * dt < 1e-4 ? quadrature(beta, q, dt) : closed_form(beta, q, dt);
    // Acceleration noise intensity for a unit one-sided force PSD.
    const double diffusion = 0.5 / (mass * mass);
    cov_[0][0] = diffusion * in.ss;
    cov_[0][1] = cov_[1][0] = diffusion * (in.sc - beta * in.ss);
    cov_[1][1] = diffusion * (in.cc - 2.0 * beta * in.sc + beta * beta * in.ss);

    for (const auto& row : phi_)
        for (double x : row)
            if (!std::isfinite(x)) throw IntegrationFault("non-finite propagator");
}

void Propagator::mean(double z, double v, double force, double& z_out, double& v_out) const {
    const double z_eq = force / (mass_ * omega0_ * omega0_);
    const double dz = z - z_eq;
    z_out = z_eq + phi_[0][0] * dz + phi_[0][1] * v;
    v_out = phi_[1][0] * dz + phi_[1][1] * v;
}

ParticleState step(const ParticleState& state, const Propagator& prop, double external_force,
                   std::span<const NoiseSource> noise) {
    ParticleState out;
    prop.mean(state.z, state.v, external_force, out.z, out.v);
    const auto& cov = prop.unit_covariance();
    for (const NoiseSource& src : noise) {
        if (src.psd <= 0.0) continue;
        const double czz = src.psd * cov[0][0];
        const double czv = src.psd * cov[0][1];
        const double cvv = src.psd * cov[1][1];
        const double l11 = std::sqrt(std::max(czz, 0.0));
        const double l21 = l11 > 0.0 ? czv / l11 : 0.0;
        const double l22 = std::sqrt(std::max(cvv - l21 * l21, 0.0));
        const double n1 = src.rng->normal();
        const double n2 = src.rng->normal();
        out.z += l11 * n1;
        out.v += l21 * n1 + l22 * n2;
    }
    out.t = state.t + prop.dt();
    if (!std::isfinite(out.z) || !std::isfinite(out.v) || !std::isfinite(out.t))
        throw IntegrationFault("non-finite particle state at t = " + std::to_string(out.t));
    return out;
}

ParticleState step(const ParticleState& state, double dt, double external_force, double noise_psd_total,
                   const Oscillator& osc, Rng& rng) {
    const Propagator prop(osc.omega0, osc.gamma, osc.mass, dt);
    const NoiseSource src{noise_psd_total, &rng};
    return step(state, prop, external_force, std::span<const NoiseSource>(&src, 1));
}

ParticleState thermal_init(double mass, double omega0, double temperature, Rng& rng) {
    if (temperature < 0.0 || !(mass > 0.0) || !(omega0 > 0.0)) throw ConfigError("invalid thermal_init arguments");
    const double sigma_v = std::sqrt(kBoltzmann * temperature / mass);
    const double sigma_z = sigma_v / omega0;
    ParticleState s;
    s.z = sigma_z * rng.normal();
    s.v = sigma_v * rng.normal();
    return s;
}

}  // namespace levicool::dynamics
