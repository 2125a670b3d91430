#pragma once

namespace levsim {

inline constexpr double mu0 = 1.25663706212e-6;      // vacuum permeability [H/m]
inline constexpr double phi0 = 2.067833848e-15;      // flux quantum [Wb]
inline constexpr double g_earth = 9.81;              // [m/s^2]
inline constexpr double pi = 3.14159265358979323846;

} // namespace levsim
