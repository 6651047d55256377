#pragma once

#include <cmath>
#include <cstdint>

#include "fsps/error.hpp"
#include "fsps/rng.hpp"

namespace fsps {

/// Acceptance geometry for the Monte Carlo solid-angle estimator.
struct SolidAngleSpec {
    enum class Mode { cone, total_internal_reflection, both_sides_tir };

    Mode mode = Mode::cone;
    double numerical_aperture = 0.0;  // cone only
    double medium_index = 1.0;        // cone only
    double fiber_index = 1.0;         // TIR modes only

    static SolidAngleSpec cone(double na, double n) { return {Mode::cone, na, n, 1.0}; }
    static SolidAngleSpec tir(double n_fiber) { return {Mode::total_internal_reflection, 0.0, 1.0, n_fiber}; }
    static SolidAngleSpec both_sides_tir(double n_fiber) { return {Mode::both_sides_tir, 0.0, 1.0, n_fiber}; }

    void validate() const {
        if (mode == Mode::cone) {
            detail::require(medium_index >= 1, "SolidAngleSpec: medium_index must be >= 1");
            detail::require(numerical_aperture >= 0 && numerical_aperture <= medium_index,
                            "SolidAngleSpec: N.A. must lie in [0, n]");
        } else {
            detail::require(fiber_index >= 1, "SolidAngleSpec: fiber_index must be >= 1");
        }
    }
};

struct SolidAngleEstimate {
    double estimate = 0.0;
    double std_error = 0.0;  ///< binomial standard error
    std::uint64_t accepted = 0;
    std::uint64_t samples = 0;
};

/// Fraction of isotropic directions accepted by `spec`. The objective (cone)
/// and fiber (TIR) axes are both +z.
inline SolidAngleEstimate solid_angle_mc(const SolidAngleSpec& spec, std::uint64_t n_samples, std::uint64_t seed) {
    spec.validate();
    detail::require(n_samples >= 1000, "solid_angle_mc: n_samples must be >= 1000");

    double threshold = 0.0;  // minimum cos(polar angle) accepted
    if (spec.mode == SolidAngleSpec::Mode::cone) {
        const double s = spec.numerical_aperture / spec.medium_index;
        threshold = std::sqrt(1.0 - s * s);
    } else {
        threshold = 1.0 / spec.fiber_index;
    }
    const bool both = spec.mode == SolidAngleSpec::Mode::both_sides_tir;

    Rng rng(seed);
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < n_samples; ++i) {
        // cos(polar angle) of an isotropic direction is uniform on [-1, 1);
        // the azimuth does not affect acceptance about the z axis.
        const double cos_axis = 2.0 * rng.uniform() - 1.0;
        const bool hit = both ? std::abs(cos_axis) >= threshold : cos_axis >= threshold;
        // A vanishing aperture (threshold 1) accepts nothing, including z = 1.
        if (hit && threshold < 1.0) ++hits;
    }
    const double n = static_cast<double>(n_samples);
    const double p = static_cast<double>(hits) / n;
    return {p, std::sqrt(p * (1.0 - p) / n), hits, n_samples};
}

}  // namespace fsps
