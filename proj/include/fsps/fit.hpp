#pragma once

// Histogram fitting: fluorescence lifetime and two-level g2, with curvature
// and bootstrap uncertainties, plus the single-photon verdict and Poisson
// count rates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsps/error.hpp"
#include "fsps/event_stream.hpp"
#include "fsps/histogram.hpp"
#include "fsps/least_squares.hpp"
#include "fsps/models.hpp"
#include "fsps/photonics.hpp"
#include "fsps/rng.hpp"

namespace fsps {

struct FitResult {
    std::map<std::string, double> params;
    std::map<std::string, double> sigmas;
    double reduced_chi2 = 0.0;
    std::size_t n_points = 0;
    bool converged = false;
    std::size_t n_bootstrap = 0;
    /// Curvature and bootstrap sigmas, bound hits, iteration counts.
    std::map<std::string, double> diagnostics;
    std::string message;

    double param(const std::string& name) const {
        auto it = params.find(name);
        detail::require(it != params.end(), "FitResult: no parameter '" + name + "'");
        return it->second;
    }

    double sigma(const std::string& name) const {
        auto it = sigmas.find(name);
        detail::require(it != sigmas.end(), "FitResult: no sigma for '" + name + "'");
        return it->second;
    }

    Measured measured(const std::string& name) const { return {param(name), sigma(name)}; }

    friend bool operator==(const FitResult&, const FitResult&) = default;
};

struct FitOptions {
    std::size_t n_bootstrap = 1000;
    std::uint64_t seed = 0x5eedf17ULL;
    BinSampling sampling = BinSampling::average;
    LsqOptions lsq{};
};

struct LifetimeFitOptions : FitOptions {
    /// Adds a constant per-bin offset (uncorrelated stops) to the model.
    bool fit_background = false;
};

struct G2FitOptions : FitOptions {
    /// Restrict g2(0) to [0, 1]; off only for data QA.
    bool constrain_g2_zero = true;
};

namespace detail {

inline double sample_stddev(const std::vector<double>& v) {
    if (v.size() < 2) return std::numeric_limits<double>::infinity();
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Each bin redrawn as Poisson(observed count), one derived stream per
/// resample so results do not depend on evaluation order.
inline std::vector<std::uint64_t> poisson_resample(const std::vector<std::uint64_t>& counts, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint64_t> out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0) {
            out[i] = 0;
            continue;
        }
        std::poisson_distribution<std::uint64_t> pd(static_cast<double>(counts[i]));
        out[i] = pd(rng.engine());
    }
    return out;
}

/// Shared driver: fit, curvature errors, bootstrap, bookkeeping.
template <class MakeModel>
FitResult run_fit(const CoincidenceHistogram& h, MakeModel make_model, const Eigen::VectorXd& x0,
                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                  const std::vector<std::string>& names, const FitOptions& opt) {
    const auto model = make_model(h);
    const LsqResult best = bounded_least_squares(model, x0, lower, upper, opt.lsq);

    FitResult fr;
    fr.n_points = h.size();
    fr.converged = best.converged;
    fr.message = best.message;
    const auto dof = static_cast<double>(h.size()) - static_cast<double>(names.size());
    fr.reduced_chi2 = dof > 0 ? best.cost / dof : best.cost;
    fr.diagnostics["iterations"] = best.iterations;
    for (std::size_t i = 0; i < names.size(); ++i) {
        fr.params[names[i]] = best.x[static_cast<Eigen::Index>(i)];
        fr.diagnostics["at_lower_bound_" + names[i]] = best.at_lower[i] ? 1.0 : 0.0;
        fr.diagnostics["at_upper_bound_" + names[i]] = best.at_upper[i] ? 1.0 : 0.0;
    }
    const auto curv = curvature_sigmas(best.jtj);
    for (std::size_t i = 0; i < names.size(); ++i) fr.diagnostics["sigma_curvature_" + names[i]] = curv[i];

    std::vector<std::vector<double>> draws(names.size());
    std::size_t failed = 0;
    if (best.converged) {
        for (std::size_t b = 0; b < opt.n_bootstrap; ++b) {
            const auto resampled = h.with_counts(poisson_resample(h.counts, derive_seed(opt.seed, b)));
            const LsqResult r = bounded_least_squares(make_model(resampled), best.x, lower, upper, opt.lsq);
            if (!r.converged) {
                ++failed;
                continue;
            }
            for (std::size_t i = 0; i < names.size(); ++i) draws[i].push_back(r.x[static_cast<Eigen::Index>(i)]);
        }
    }
    fr.n_bootstrap = draws.empty() ? 0 : draws.front().size();
    fr.diagnostics["bootstrap_failures"] = static_cast<double>(failed);
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double boot = fr.n_bootstrap >= 2 ? sample_stddev(draws[i]) : std::numeric_limits<double>::quiet_NaN();
        fr.diagnostics["sigma_bootstrap_" + names[i]] = boot;
        // Report the larger of the two estimates.
        fr.sigmas[names[i]] = std::isnan(boot) ? curv[i] : std::max(boot, curv[i]);
    }
    return fr;
}

/// Log-linear slope of the half of the nonempty bins with the largest
/// counts. Returns {i0, tau}.
inline std::pair<double, double> loglinear_start(const CoincidenceHistogram& h) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (h.counts[i] > 0) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return h.counts[a] > h.counts[b]; });
    idx.resize(std::max<std::size_t>(2, (idx.size() + 1) / 2));
    double sw = 0, st = 0, sy = 0, stt = 0, sty = 0;
    for (auto i : idx) {
        const double w = static_cast<double>(h.counts[i]);
        const double t = h.center(i);
        const double y = std::log(w);
        sw += w;
        st += w * t;
        sy += w * y;
        stt += w * t * t;
        sty += w * t * y;
    }
    const double denom = sw * stt - st * st;
    const double span = h.bin_edges.back() - h.bin_edges.front();
    double slope = denom != 0 ? (sw * sty - st * sy) / denom : 0.0;
    double tau = slope < 0 ? -1.0 / slope : span;
    tau = std::clamp(tau, 1e-3 * h.bin_width(), 1e3 * span);
    const double intercept = (sy - (-1.0 / tau) * st) / sw;
    return {std::exp(intercept), tau};
}

}  // namespace detail

/// Weighted least-squares fit of I0 exp(-t/tau) to a delay histogram in ns.
/// Parameters: "i0" (counts per bin at t = 0), "tau_life_ns", and
/// "background" (counts per bin) when enabled.
inline FitResult fit_lifetime(const CoincidenceHistogram& h, const LifetimeFitOptions& opt = {}) {
    h.validate();
    detail::require(h.nonempty_bins() >= 5, "fit_lifetime: need at least 5 nonempty bins");
    const auto [i0, tau] = detail::loglinear_start(h);
    const double span = h.bin_edges.back() - h.bin_edges.front();
    const double max_count = static_cast<double>(*std::max_element(h.counts.begin(), h.counts.end()));
    const double inf = std::numeric_limits<double>::infinity();

    const Eigen::Index n = opt.fit_background ? 3 : 2;
    Eigen::VectorXd x0(n), lo(n), hi(n);
    x0[0] = i0, lo[0] = 0.0, hi[0] = inf;
    x0[1] = tau, lo[1] = 1e-3 * h.bin_width(), hi[1] = 1e4 * span;
    if (opt.fit_background) x0[2] = 0.0, lo[2] = 0.0, hi[2] = max_count;
    std::vector<std::string> names{"i0", "tau_life_ns"};
    if (opt.fit_background) names.push_back("background");

    const bool bg = opt.fit_background;
    const BinSampling sampling = opt.sampling;
    return detail::run_fit(
        h, [bg, sampling](const CoincidenceHistogram& hh) { return LifetimeModel(hh, bg, sampling); }, x0, lo, hi,
        names, opt);
}

/// Bounded fit of the two-level g2 to a normalized two-sided histogram.
/// Parameters: "g2_zero", "tau_abs_ns" and derived "correlation_time_ns"
/// (= 2 tau_abs). tau_life_s is held fixed and may be +inf.
inline FitResult fit_g2(const CoincidenceHistogram& h, double tau_life_s, const G2FitOptions& opt = {}) {
    h.validate();
    detail::require(tau_life_s > 0, "fit_g2: tau_life must be > 0");
    detail::require(h.two_sided(), "fit_g2: histogram must be two-sided about zero delay");
    detail::require(h.nonempty_bins() >= 3, "fit_g2: need at least 3 nonempty bins");
    const double tau_life_ns = tau_life_s * 1e9;
    const double w = h.bin_width();
    const double max_delay = h.bin_edges.back();
    const double inf = std::numeric_limits<double>::infinity();

    // g2(0) from the lowest bin; tau_abs from the dip area, which equals
    // 2 (1 - g2(0)) tau for the model.
    double g0 = *std::min_element(h.normalized.begin(), h.normalized.end());
    if (opt.constrain_g2_zero) g0 = std::clamp(g0, 0.0, 1.0);
    double area = 0.0;
    for (double v : h.normalized) area += std::max(0.0, 1.0 - v) * w;
    const double tau_lo = 1e-3 * w;
    const double tau_hi = 1e3 * max_delay;
    double tau0 = g0 < 1.0 ? area / (2.0 * (1.0 - g0)) : w;
    tau0 = std::clamp(tau0, std::max(tau_lo, 0.5 * w), std::min(tau_hi, max_delay));

    Eigen::VectorXd x0(2), lo(2), hi(2);
    x0 << g0, tau0;
    lo << (opt.constrain_g2_zero ? 0.0 : -inf), tau_lo;
    hi << (opt.constrain_g2_zero ? 1.0 : inf), tau_hi;

    const BinSampling sampling = opt.sampling;
    FitResult fr = detail::run_fit(
        h, [tau_life_ns, sampling](const CoincidenceHistogram& hh) { return G2Model(hh, tau_life_ns, sampling); },
        x0, lo, hi, {"g2_zero", "tau_abs_ns"}, opt);
    fr.params["correlation_time_ns"] = 2.0 * fr.params["tau_abs_ns"];
    fr.sigmas["correlation_time_ns"] = 2.0 * fr.sigmas["tau_abs_ns"];
    fr.diagnostics["tau_life_ns"] = tau_life_ns;
    const bool bound = fr.diagnostics["at_lower_bound_g2_zero"] > 0 || fr.diagnostics["at_upper_bound_g2_zero"] > 0 ||
                       fr.diagnostics["at_lower_bound_tau_abs_ns"] > 0 ||
                       fr.diagnostics["at_upper_bound_tau_abs_ns"] > 0;
    fr.diagnostics["bound_hit"] = bound ? 1.0 : 0.0;
    return fr;
}

struct Verdict {
    bool single_photon = false;
    double g2_zero = 0.0;
    double sigma = 0.0;
    double significance = 0.0;  ///< (0.5 - g2(0)) / sigma, one-sided
};

inline Verdict single_photon_verdict(const Measured& g2_zero) {
    detail::require(g2_zero.sigma >= 0, "single_photon_verdict: negative sigma");
    Verdict v;
    v.g2_zero = g2_zero.value;
    v.sigma = g2_zero.sigma;
    v.single_photon = g2_zero.value < 0.5;
    const double margin = 0.5 - g2_zero.value;
    v.significance = g2_zero.sigma > 0 ? margin / g2_zero.sigma
                                       : (margin > 0 ? std::numeric_limits<double>::infinity()
                                                     : (margin < 0 ? -std::numeric_limits<double>::infinity() : 0.0));
    return v;
}

inline Verdict single_photon_verdict(const FitResult& f) {
    detail::require(f.params.count("g2_zero") && f.sigmas.count("g2_zero"),
                    "single_photon_verdict: fit has no g2_zero parameter");
    return single_photon_verdict(f.measured("g2_zero"));
}

/// Events per second with Poisson error sqrt(N) / T.
inline Measured count_rate(const PhotonEventStream& s) {
    detail::require(s.duration_ns > 0, "count_rate: duration must be > 0");
    const double n = static_cast<double>(s.size());
    const double t = s.duration_s();
    return {n / t, std::sqrt(n) / t};
}

}  // namespace fsps
