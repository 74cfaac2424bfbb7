#pragma once

#include <numbers>

namespace beantrap {

// Internal quantities are SI: metres, tesla, amperes, A/m for sheet current.
// Interfaces (config files, CSV) use µm, gauss and mA/µm; convert at the edge.

inline constexpr double kMu0 = 1.25663706212e-6;             // T·m/A
inline constexpr double kMu0Over2Pi = kMu0 / (2.0 * std::numbers::pi);
inline constexpr double kBohrMagneton = 9.2740100783e-24;    // J/T
inline constexpr double kBoltzmann = 1.380649e-23;           // J/K

inline constexpr double kMicron = 1e-6;
inline constexpr double kGauss = 1e-4;
inline constexpr double kMilliAmpPerMicron = 1e3;  // 1 mA/µm = 1000 A/m

constexpr double from_um(double v) { return v * kMicron; }
constexpr double to_um(double v) { return v / kMicron; }
constexpr double from_gauss(double v) { return v * kGauss; }
constexpr double to_gauss(double v) { return v / kGauss; }

/// Characteristic field of a Bean strip, B_char = µ0·K_C/π.
constexpr double characteristic_field(double k_c) {
    return kMu0 * k_c / std::numbers::pi;
}

}  // namespace beantrap
