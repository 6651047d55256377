#pragma once

// End-to-end runs driven by an ExperimentConfig.
//
// HBT (CW):   emitter(s) + background -> splitter -> detectors a, b -> correlator
// Lifetime:   pulsed emitter(s) + background -> stop detector -> gate -> TAC
//
// Each stage draws from derive_seed(run.seed, stage::*), so a run is fixed
// by its config. The HBT run is streamed in chunks of run.chunk_s and gives
// the same result as composing the batch functions over the whole window.
// Same-nanosecond events are only merged where a single recorder channel
// would merge them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fsps/config.hpp"
#include "fsps/detection.hpp"
#include "fsps/emitter.hpp"
#include "fsps/event_stream.hpp"
#include "fsps/fit.hpp"
#include "fsps/histogram.hpp"

namespace fsps {

struct HbtRun {
    CoincidenceHistogram histogram;
    PhotonEventStream detector_a;  // empty unless streams were kept
    PhotonEventStream detector_b;
    std::uint64_t counts_a = 0;
    std::uint64_t counts_b = 0;
    TimeNs duration_ns = 0;
    Metadata metadata;
};

struct LifetimeRun {
    PhotonEventStream starts;
    PhotonEventStream stops;
    std::vector<TimeNs> delays;
    CoincidenceHistogram histogram;
    Metadata metadata;
};

namespace detail {

inline TimeNs duration_ns_of(const ExperimentConfig& c) {
    detail::require(c.run.duration_s.has_value(), "run.duration_s is required for a CW run");
    const double ns = *c.run.duration_s * 1e9;
    detail::require(ns >= 1 && ns < 9e18, "run.duration_s out of range");
    return static_cast<TimeNs>(std::llround(ns));
}

inline std::uint64_t ion_seed(const ExperimentConfig& c, std::uint32_t ion) {
    return derive_seed(derive_seed(c.run.seed, stage::emitter), ion);
}

inline std::uint64_t split_seed(const ExperimentConfig& c, std::uint32_t ion) {
    return derive_seed(derive_seed(c.run.seed, stage::splitter), ion);
}

inline std::uint64_t background_seed(const ExperimentConfig& c, std::uint64_t port) {
    return derive_seed(derive_seed(c.run.seed, stage::background), port);
}

inline Metadata run_metadata(const ExperimentConfig& c) {
    return {{"run", c.run.name},
            {"seed", std::to_string(c.run.seed)},
            {"rng", std::string(kGeneratorName)},
            {"ions", std::to_string(c.ions)},
            {"tau_life_s", format_double(c.tau_life_us * 1e-6)},
            {"tau_abs_s", format_double(c.tau_abs_s())}};
}

}  // namespace detail

/// CW coincidence measurement. With keep_streams the detected events are
/// returned as well; that is refused with a CapacityError when the expected
/// count exceeds run.max_events.
inline HbtRun run_hbt(const ExperimentConfig& c, bool keep_streams) {
    validate_config(c);
    const EmitterParams p = c.emitter();
    const TimeNs dur = detail::duration_ns_of(c);
    const TimeNs chunk = std::max<TimeNs>(1, static_cast<TimeNs>(std::llround(c.run.chunk_s * 1e9)));

    if (keep_streams) {
        const double rate = c.ions * cw_emission_rate(p) + c.background_rate_hz;
        const double expected = rate * c.transmission + c.detector_a.dark_rate_hz + c.detector_b.dark_rate_hz;
        const double n = expected * static_cast<double>(dur) * 1e-9;
        if (n > static_cast<double>(c.run.max_events)) {
            throw CapacityError("run_hbt: ~" + format_double(std::round(n)) + " detected events expected, cap is " +
                                std::to_string(c.run.max_events) +
                                "; set run.write_streams = false, shorten run.duration_s or raise run.max_events");
        }
    }

    // Sources are merged per detector channel, so photons from different
    // sources in the same nanosecond still reach different detectors. Each
    // ion has its own splitter; the split background is again Poisson, so it
    // is drawn independently on each port.
    std::vector<std::pair<CwEmitter, Splitter>> ions;
    for (std::uint32_t i = 0; i < c.ions; ++i) {
        ions.emplace_back(CwEmitter(p, detail::ion_seed(c, i)),
                          Splitter(c.split_a, c.transmission, detail::split_seed(c, i)));
    }
    const double bg = c.background_rate_hz * c.transmission;
    PoissonSource bg_a(bg * c.split_a, detail::background_seed(c, 0), channel::detector_a);
    PoissonSource bg_b(bg * (1.0 - c.split_a), detail::background_seed(c, 1), channel::detector_b);
    Detector det_a(c.detector_a, derive_seed(c.run.seed, stage::detector_a), channel::detector_a);
    Detector det_b(c.detector_b, derive_seed(c.run.seed, stage::detector_b), channel::detector_b);
    Correlator corr(c.bin_width_ns, c.max_delay_ns);

    HbtRun run;
    run.duration_ns = dur;
    std::size_t merged = 0;
    std::vector<PhotonEvent> emitted, part_a, part_b, in_a, in_b, out_a, out_b;
    for (TimeNs from = 0; from <= dur; from += chunk) {
        const TimeNs cut = std::min(from + chunk, dur + 1);
        in_a.clear();
        in_b.clear();
        for (auto& [ion, splitter] : ions) {
            emitted.clear();
            ion.advance(cut, emitted);
            part_a.clear();
            part_b.clear();
            splitter.process(emitted, part_a, part_b);
            in_a = in_a.empty() ? part_a : merge_events(in_a, part_a, &merged);
            in_b = in_b.empty() ? part_b : merge_events(in_b, part_b, &merged);
        }
        part_a.clear();
        part_b.clear();
        bg_a.advance(cut, part_a);
        bg_b.advance(cut, part_b);
        in_a = merge_events(in_a, part_a, &merged);
        in_b = merge_events(in_b, part_b, &merged);
        out_a.clear();
        out_b.clear();
        det_a.process(in_a, cut, out_a);
        det_b.process(in_b, cut, out_b);
        corr.add(out_a, out_b, cut);
        run.counts_a += out_a.size();
        run.counts_b += out_b.size();
        if (keep_streams) {
            run.detector_a.events.insert(run.detector_a.events.end(), out_a.begin(), out_a.end());
            run.detector_b.events.insert(run.detector_b.events.end(), out_b.begin(), out_b.end());
        }
        if (cut == dur + 1) break;
    }
    for (const auto& ion : ions) merged += ion.first.merged();

    run.histogram = corr.finish(dur);
    run.metadata = detail::run_metadata(c);
    run.metadata["duration_ns"] = std::to_string(dur);
    run.metadata["background_rate_hz"] = format_double(c.background_rate_hz);
    run.metadata["merged_events"] = std::to_string(merged);
    run.metadata["dead_time_losses_a"] = std::to_string(det_a.dead_time_losses());
    run.metadata["dead_time_losses_b"] = std::to_string(det_b.dead_time_losses());
    for (auto [s, ch] : {std::pair{&run.detector_a, channel::detector_a}, std::pair{&run.detector_b, channel::detector_b}}) {
        s->duration_ns = dur;
        s->seed = c.run.seed;
        s->channels = {ch};
        s->metadata = run.metadata;
    }
    return run;
}

/// Pulsed lifetime measurement through the gated single-stop TAC.
inline LifetimeRun run_lifetime(const ExperimentConfig& c) {
    validate_config(c);
    detail::require(c.run.n_pulses.has_value(), "run.n_pulses is required for a pulsed run");
    const EmitterParams p = c.emitter();
    const SimulationLimits limits{c.run.max_events};

    LifetimeRun run;
    PhotonEventStream emissions;
    std::size_t merged = 0;
    for (std::uint32_t i = 0; i < c.ions; ++i) {
        auto r = simulate_pulsed(p, c.pulse, *c.run.n_pulses, detail::ion_seed(c, i), limits);
        merged += std::stoull(r.emissions.metadata.at("merged_events"));
        if (i == 0) {
            run.starts = std::move(r.starts);
            emissions = std::move(r.emissions);
        } else {
            emissions.events = merge_events(emissions.events, r.emissions.events, &merged);
        }
    }
    emissions = add_poisson_background(emissions, c.background_rate_hz, detail::background_seed(c, 0));
    auto stops = apply_detector(emissions, c.detector_stop, derive_seed(c.run.seed, stage::detector_stop));
    if (c.gate) stops = apply_gate(stops, *c.gate);
    run.delays = tac_first_stop(run.starts, stops, c.tac.range_ns);
    run.histogram = delay_histogram(run.delays, c.tac.bin_width_ns, c.tac.n_bins(), c.tac.origin_ns);

    run.metadata = detail::run_metadata(c);
    run.metadata["n_pulses"] = std::to_string(*c.run.n_pulses);
    run.metadata["duration_ns"] = std::to_string(run.starts.duration_ns);
    run.metadata["merged_events"] = std::to_string(merged);
    run.metadata["stops"] = std::to_string(stops.size());
    run.metadata["delays"] = std::to_string(run.delays.size());
    run.starts.metadata = run.metadata;
    stops.metadata = run.metadata;
    run.stops = std::move(stops);
    return run;
}

inline FitResult fit_lifetime_run(const ExperimentConfig& c, const CoincidenceHistogram& h) {
    LifetimeFitOptions opt;
    opt.n_bootstrap = c.fit.n_bootstrap;
    opt.seed = c.fit_seed();
    opt.fit_background = c.fit.lifetime_background;
    return fit_lifetime(h, opt);
}

inline FitResult fit_hbt_run(const ExperimentConfig& c, const CoincidenceHistogram& h) {
    G2FitOptions opt;
    opt.n_bootstrap = c.fit.n_bootstrap;
    opt.seed = c.fit_seed();
    opt.sampling = c.fit.g2_sampling;
    return fit_g2(h, c.fit_tau_life_s(), opt);
}

/// Expected g2(0) of the HBT run: signal fractions rho_a, rho_b of the
/// detected counts give 1 - rho_a rho_b / ions. Dead time is ignored.
inline double predicted_g2_zero(const ExperimentConfig& c) {
    const double s = c.ions * cw_emission_rate(c.emitter());
    const double b = c.background_rate_hz;
    auto rho = [&](double share, const DetectorParams& d) {
        const double signal = s * share * d.quantum_efficiency;
        const double total = (s + b) * share * d.quantum_efficiency + d.dark_rate_hz;
        return total > 0 ? signal / total : 0.0;
    };
    const double ra = rho(c.transmission * c.split_a, c.detector_a);
    const double rb = rho(c.transmission * (1.0 - c.split_a), c.detector_b);
    return 1.0 - ra * rb / static_cast<double>(c.ions);
}

/// Background rate (Hz, entering before the splitter) for which
/// predicted_g2_zero equals `target`.
inline double calibrate_background(ExperimentConfig c, double target) {
    c.background_rate_hz = 0.0;
    const double floor = predicted_g2_zero(c);
    detail::require(target >= floor && target < 1.0,
                    "calibrate_background: target must lie in [" + format_double(floor) + ", 1)");
    if (target == floor) return 0.0;
    double lo = 0.0;
    double hi = c.ions * cw_emission_rate(c.emitter());
    for (c.background_rate_hz = hi; predicted_g2_zero(c) < target; c.background_rate_hz = hi) hi *= 2;
    for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
        c.background_rate_hz = 0.5 * (lo + hi);
        (predicted_g2_zero(c) < target ? lo : hi) = c.background_rate_hz;
    }
    return 0.5 * (lo + hi);
}

}  // namespace fsps
