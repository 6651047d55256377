#pragma once

namespace fsps::constants {

// CODATA 2018 exact values (SI redefinition).
inline constexpr double planck = 6.62607015e-34;       // J s
inline constexpr double speed_of_light = 299792458.0;  // m / s
inline constexpr double pi = 3.141592653589793238462643383279502884;

inline constexpr double ns_per_s = 1e9;

}  // namespace fsps::constants
