#pragma once

#include <span>

#include "levicool/rng.hpp"

namespace levicool::dynamics {

struct ParticleProps {
    double diameter = 450e-9;  // m
    double density = 2200.0;   // kg/m^3
    int charge_number = 500;   // elementary charges, signed

    void validate() const;
    /// Recomputed from diameter and density on every call.
    double mass() const;
};

struct TrapConfig {
    double omega0 = 2.0 * 3.14159265358979323846 * 23.5;  // rad/s, axial secular
    double z0 = 7e-3;
    double r0 = 6e-3;
    double drive_freq = 600.0;  // Hz, metadata only
    double v_endcap = 10.0;
    double v_ac_pp = 600.0;     // metadata only
    double min_freq_hz = 5.0;
    double max_freq_hz = 500.0;

    void validate() const;
    double f0() const;
    /// True when f0 lies outside the 20-40 Hz range typical for this trap.
    bool outside_typical_band() const;
};

struct Environment {
    double pressure_mbar = 8e-5;
    double bath_temperature = 300.0;   // K
    double gas_molecular_mass = 4.8106e-26;  // kg (air)
    double excess_force_psd = 0.0;     // N^2/Hz, one-sided, white

    void validate() const;
};

struct ParticleState {
    double z = 0.0;
    double v = 0.0;
    double t = 0.0;
};

/// Epstein coefficient for diffuse reflection with full accommodation,
/// (8/pi)(1 + pi/8) = 1 + 8/pi.
inline constexpr double kEpsteinDiffuse = 1.0 + 8.0 / 3.14159265358979323846;

double particle_mass(const ParticleProps& props);

/// Free-molecular damping rate gamma = c_E p / (rho r v_gas), with
/// v_gas = sqrt(8 k T / (pi m_gas)) the mean thermal speed of the gas.
double gas_damping_rate(const Environment& env, const ParticleProps& props);

/// One-sided force PSD 4 k T m gamma (N^2/Hz). With this convention the
/// force autocorrelation is (S/2) delta(t) and a free oscillator settles to
/// <z^2> = k T / (m omega0^2).
double thermal_force_psd(double gamma, double mass, double temperature);

/// Temperature the undriven oscillator relaxes to when the excess force noise
/// adds to the gas bath: T_bath + S_excess / (4 k m gamma).
double steady_state_temperature(const Environment& env, const ParticleProps& props);

/// Linear oscillator z'' + gamma z' + omega0^2 z = F/m + noise, evaluated with
/// the exact Gaussian propagator over an interval of length dt.
class Propagator {
public:
    Propagator(double omega0, double gamma, double mass, double dt);

    double dt() const { return dt_; }
    /// Homogeneous transition matrix, row-major.
    const double (&phi() const)[2][2] { return phi_; }
    /// Noise covariance for unit one-sided force PSD (scale by S).
    const double (&unit_covariance() const)[2][2] { return cov_; }

    /// Deterministic part of the update under a constant force.
    void mean(double z, double v, double force, double& z_out, double& v_out) const;

private:
    double omega0_;
    double mass_;
    double dt_;
    double phi_[2][2];
    double cov_[2][2];
};

/// A white force-noise contribution with its own random stream.
struct NoiseSource {
    double psd = 0.0;  // N^2/Hz one-sided
    Rng* rng = nullptr;
};

struct Oscillator {
    double omega0 = 0.0;
    double gamma = 0.0;
    double mass = 0.0;
};

/// Advances the state by dt with the external force held constant.
ParticleState step(const ParticleState& state, double dt, double external_force, double noise_psd_total,
                   const Oscillator& osc, Rng& rng);

/// Same update with several independent noise sources, each drawing from
/// its own stream.
ParticleState step(const ParticleState& state, const Propagator& prop, double external_force,
                   std::span<const NoiseSource> noise);

/// Draws (z, v) from the thermal distribution of the free oscillator.
ParticleState thermal_init(double mass, double omega0, double temperature, Rng& rng);

}  // namespace levicool::dynamics
