#pragma once

namespace levicool::constants {

inline constexpr double kBoltzmann = 1.380649e-23;        // J/K
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kAtomicMassUnit = 1.66053906660e-27;  // kg
inline constexpr double kAirMolecularMass = 28.97 * kAtomicMassUnit;
inline constexpr double kMbarToPa = 100.0;

}  // namespace levicool::constants
