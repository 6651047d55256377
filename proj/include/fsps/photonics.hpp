#pragma once

// Closed-form physics of a single-ion fiber photon source: fluorescence
// decay, the two-level g2 function, pump/absorption algebra, geometric
// collection efficiencies and first-order uncertainty propagation.

#include <cmath>
#include <limits>

#include "fsps/constants.hpp"
#include "fsps/error.hpp"

namespace fsps {

/// Rates of the two-level emitter. Times in seconds.
struct EmitterParams {
    double tau_life = 0.0;  ///< optical (radiative) lifetime
    double tau_abs = 0.0;   ///< mean time to absorb a pump photon; +inf means never
    double i0 = 0.0;        ///< fluorescence amplitude, counts/s

    void validate() const {
        detail::require(tau_life > 0 && !std::isnan(tau_life), "EmitterParams.tau_life must be > 0");
        detail::require(tau_abs > 0 && !std::isnan(tau_abs), "EmitterParams.tau_abs must be > 0");
        detail::require(i0 >= 0 && std::isfinite(i0), "EmitterParams.i0 must be finite and >= 0");
    }
};

/// Pump beam. SI units throughout (W, m).
struct PumpParams {
    double power = 0.0;
    double beam_diameter = 0.0;
    double wavelength = 0.0;
    double linewidth = 0.0;

    void validate() const {
        detail::require(power > 0 && std::isfinite(power), "PumpParams.power must be > 0");
        detail::require(beam_diameter > 0 && std::isfinite(beam_diameter),
                        "PumpParams.beam_diameter must be > 0");
        detail::require(wavelength > 0 && std::isfinite(wavelength), "PumpParams.wavelength must be > 0");
        detail::require(linewidth > 0 && std::isfinite(linewidth), "PumpParams.linewidth must be > 0");
    }
};

enum class CollectionSides { one, both };

struct OpticsParams {
    double numerical_aperture = 0.0;
    double medium_index = 1.0;
    double fiber_index = 1.0;
    CollectionSides sides = CollectionSides::both;

    void validate() const {
        detail::require(medium_index >= 1 && std::isfinite(medium_index), "OpticsParams.medium_index must be >= 1");
        detail::require(fiber_index >= 1 && std::isfinite(fiber_index), "OpticsParams.fiber_index must be >= 1");
        detail::require(numerical_aperture >= 0 && numerical_aperture <= medium_index,
                        "OpticsParams.numerical_aperture must lie in [0, medium_index]");
    }
};

/// A value with its 1-sigma uncertainty.
struct Measured {
    double value = 0.0;
    double sigma = 0.0;

    friend bool operator==(const Measured&, const Measured&) = default;
};

inline Measured make_measured(double value, double sigma) {
    detail::require(sigma >= 0 && !std::isnan(sigma), "Measured.sigma must be >= 0");
    return {value, sigma};
}

/// I(t) = I0 exp(-t / tau_life), t in seconds.
inline double lifetime_intensity(double t, const EmitterParams& p) {
    detail::require(std::isfinite(t) && t >= 0, "lifetime_intensity: t must be finite and >= 0");
    p.validate();
    return p.i0 * std::exp(-t / p.tau_life);
}

/// Two-level autocorrelation at delay tau >= 0 (seconds).
inline double g2_model(double tau, double g2_zero, const EmitterParams& p) {
    detail::require(g2_zero >= 0 && g2_zero <= 1, "g2_model: g2_zero must lie in [0, 1]");
    detail::require(tau >= 0 && !std::isnan(tau), "g2_model: tau must be >= 0 (mirror negative delays)");
    p.validate();
    const double rate = 1.0 / p.tau_abs + 1.0 / p.tau_life;
    // Same as 1 - (1 - g0) exp(-rate tau), but exact at tau = 0.
    return g2_zero - (1.0 - g2_zero) * std::expm1(-rate * tau);
}

/// Pump intensity over a flat-top disc of diameter d: P / (pi (d/2)^2).
inline double pump_intensity(double power, double beam_diameter) {
    detail::require(power >= 0 && std::isfinite(power), "pump_intensity: power must be >= 0");
    detail::require(beam_diameter > 0 && std::isfinite(beam_diameter),
                    "pump_intensity: beam_diameter must be > 0");
    const double r = 0.5 * beam_diameter;
    return power / (constants::pi * r * r);
}

/// tau_abs = 8 pi h c^2 dlambda tau_life / (lambda^5 I). Uses pump.wavelength
/// and pump.linewidth; power and diameter are not read.
inline double absorption_time(const PumpParams& pump, double intensity, double tau_life) {
    detail::require(intensity > 0 && std::isfinite(intensity), "absorption_time: intensity must be > 0");
    detail::require(tau_life > 0 && std::isfinite(tau_life), "absorption_time: tau_life must be > 0");
    detail::require(pump.wavelength > 0 && pump.linewidth > 0,
                    "absorption_time: wavelength and linewidth must be > 0");
    using namespace constants;
    const double lam = pump.wavelength;
    const double lam5 = lam * lam * lam * lam * lam;
    return 8.0 * pi * planck * speed_of_light * speed_of_light * pump.linewidth * tau_life / lam5
           / intensity;
}

/// Intermediates of the Einstein-coefficient route to the absorption time.
namespace einstein {

/// A = 1 / tau_life.
inline double spontaneous_rate(double tau_life) { return 1.0 / tau_life; }

/// B from A / B = 8 pi h / lambda^3.
inline double stimulated_coefficient(double a, double wavelength) {
    return a * wavelength * wavelength * wavelength / (8.0 * constants::pi * constants::planck);
}

/// Spectral energy density U that yields intensity I = c^2 U dlambda / lambda^2.
inline double energy_density(double intensity, double wavelength, double linewidth) {
    const double c = constants::speed_of_light;
    return intensity * wavelength * wavelength / (c * c * linewidth);
}

/// tau_abs = 1 / (B U).
inline double absorption_time(double b, double u) { return 1.0 / (b * u); }

}  // namespace einstein

/// Fraction of isotropic emission inside an objective of the given N.A.
inline double objective_collection_efficiency(const OpticsParams& o) {
    detail::require(o.medium_index >= 1, "objective_collection_efficiency: medium_index must be >= 1");
    detail::require(o.numerical_aperture >= 0 && o.numerical_aperture <= o.medium_index,
                    "objective_collection_efficiency: N.A. must lie in [0, n]");
    const double s = o.numerical_aperture / o.medium_index;
    return 0.5 * (1.0 - std::sqrt(1.0 - s * s));
}

/// Fraction of isotropic emission guided by total internal reflection.
inline double channeling_efficiency(const OpticsParams& o) {
    detail::require(o.fiber_index >= 1 && std::isfinite(o.fiber_index),
                    "channeling_efficiency: fiber_index must be >= 1");
    const double one_side = 0.5 * (1.0 - 1.0 / o.fiber_index);
    return o.sides == CollectionSides::both ? 2.0 * one_side : one_side;
}

/// a / b with first-order quadrature propagation, independent errors.
inline Measured ratio_with_uncertainty(const Measured& a, const Measured& b) {
    detail::require(b.value != 0, "ratio_with_uncertainty: denominator is zero");
    detail::require(a.sigma >= 0 && b.sigma >= 0, "ratio_with_uncertainty: negative sigma");
    const double value = a.value / b.value;
    // Written without dividing by a.value so a zero numerator stays defined.
    const double da = a.sigma / b.value;
    const double db = value * b.sigma / b.value;
    return {value, std::hypot(da, db)};
}

/// eta_s / eta_f = (N_s / N_f) * (n_f / n_s).
inline Measured collection_efficiency_ratio(const Measured& n_s, const Measured& n_f,
                                            const Measured& rate_ratio_f_over_s) {
    detail::require(n_s.value > 0 && n_f.value > 0 && rate_ratio_f_over_s.value > 0,
                    "collection_efficiency_ratio: all values must be > 0");
    const double value = n_s.value / n_f.value * rate_ratio_f_over_s.value;
    const double rel_s = n_s.sigma / n_s.value;
    const double rel_f = n_f.sigma / n_f.value;
    const double rel_r = rate_ratio_f_over_s.sigma / rate_ratio_f_over_s.value;
    return {value, std::abs(value) * std::sqrt(rel_s * rel_s + rel_f * rel_f + rel_r * rel_r)};
}

}  // namespace fsps
