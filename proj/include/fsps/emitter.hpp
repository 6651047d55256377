#pragma once

// Event-driven Monte Carlo of a two-level emitter. Waiting times are drawn
// from exponentials, which is exact for the Markov model; timestamps are
// floored to integer nanoseconds on output.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fsps/constants.hpp"
#include "fsps/error.hpp"
#include "fsps/event_stream.hpp"
#include "fsps/format.hpp"
#include "fsps/photonics.hpp"
#include "fsps/rng.hpp"

namespace fsps {

struct SimulationLimits {
    std::uint64_t max_events = 100'000'000;
};

/// Trigger train of the pulsed pump.
struct PulseSchedule {
    double repetition_rate_hz = 1e3;
    double pulse_width_ns = 129.0;
    double first_pulse_ns = 0.0;

    double period_ns() const { return constants::ns_per_s / repetition_rate_hz; }

    void validate() const {
        detail::require(repetition_rate_hz > 0 && std::isfinite(repetition_rate_hz),
                        "PulseSchedule.repetition_rate_hz must be > 0");
        detail::require(pulse_width_ns >= 0 && pulse_width_ns < period_ns(),
                        "PulseSchedule.pulse_width_ns must lie in [0, period)");
        detail::require(first_pulse_ns >= 0 && std::isfinite(first_pulse_ns),
                        "PulseSchedule.first_pulse_ns must be >= 0");
    }
};

namespace detail {

inline double to_ns(double seconds) { return seconds * constants::ns_per_s; }

inline TimeNs floor_ns(double t) { return static_cast<TimeNs>(std::floor(t)); }

inline Metadata emitter_metadata(const char* generator, const EmitterParams& p) {
    return {{"generator", generator},
            {"rng", std::string(kGeneratorName)},
            {"tau_life_s", format_double(p.tau_life)},
            {"tau_abs_s", format_double(p.tau_abs)}};
}

}  // namespace detail

/// Continuous-wave emitter as a resumable generator. Starts in the ground
/// state at t = 0; each cycle waits Exp(tau_abs) to absorb and Exp(tau_life)
/// to emit. Splitting a run into chunks does not change the output.
class CwEmitter {
  public:
    CwEmitter(const EmitterParams& p, std::uint64_t seed, std::uint16_t tag = channel::emission)
        : rng_(seed), tau_abs_ns_(detail::to_ns(p.tau_abs)), tau_life_ns_(detail::to_ns(p.tau_life)),
          tag_(tag) {
        p.validate();
        next_ns_ = cycle(0.0);
    }

    /// Appends every emission with floored timestamp < until_ns.
    void advance(TimeNs until_ns, std::vector<PhotonEvent>& out) {
        while (next_ns_ < static_cast<double>(until_ns)) {
            const TimeNs t = detail::floor_ns(next_ns_);
            if (t >= until_ns) break;
            if (t > last_) {
                out.push_back({t, tag_});
                last_ = t;
            } else {
                ++merged_;
            }
            next_ns_ = cycle(next_ns_);
        }
    }

    /// Emissions that fell into an already occupied nanosecond.
    std::size_t merged() const noexcept { return merged_; }

  private:
    double cycle(double from) {
        const double absorbed = from + rng_.exponential(tau_abs_ns_);
        return absorbed + rng_.exponential(tau_life_ns_);
    }

    Rng rng_;
    double tau_abs_ns_;
    double tau_life_ns_;
    std::uint16_t tag_;
    double next_ns_ = 0.0;
    TimeNs last_ = -1;
    std::size_t merged_ = 0;
};

/// Mean emission rate of the CW emitter, 1 / (tau_abs + tau_life), in Hz.
inline double cw_emission_rate(const EmitterParams& p) { return 1.0 / (p.tau_abs + p.tau_life); }

inline PhotonEventStream simulate_cw(const EmitterParams& p, TimeNs duration_ns, std::uint64_t seed,
                                     const SimulationLimits& limits = {}) {
    p.validate();
    detail::require(duration_ns > 0, "simulate_cw: duration must be > 0");
    const double expected = static_cast<double>(duration_ns) * 1e-9 * cw_emission_rate(p);
    if (expected > static_cast<double>(limits.max_events)) {
        throw CapacityError("simulate_cw: ~" + format_double(std::round(expected)) +
                            " events expected, cap is " + std::to_string(limits.max_events) +
                            "; shorten the duration, raise max_events, or stream with CwEmitter");
    }
    CwEmitter gen(p, seed);
    PhotonEventStream s;
    s.events.reserve(static_cast<std::size_t>(expected * 1.05) + 16);
    gen.advance(duration_ns + 1, s.events);
    s.duration_ns = duration_ns;
    s.seed = seed;
    s.channels = {channel::emission};
    s.metadata = detail::emitter_metadata("simulate_cw", p);
    s.metadata["merged_events"] = std::to_string(gen.merged());
    return s;
}

struct PulsedRun {
    PhotonEventStream starts;     ///< one event per trigger, channel::start
    PhotonEventStream emissions;  ///< channel::emission
};

/// Pulsed pump: absorption is only possible inside pulse windows, decay at
/// any time. Re-excitation within the same pulse after an emission is
/// allowed. An ion still excited when a pulse arrives cannot absorb until it
/// has emitted.
inline PulsedRun simulate_pulsed(const EmitterParams& p, const PulseSchedule& sched, std::uint64_t n_pulses,
                                 std::uint64_t seed, const SimulationLimits& limits = {}) {
    p.validate();
    sched.validate();
    detail::require(n_pulses >= 1, "simulate_pulsed: n_pulses must be >= 1");
    detail::require(n_pulses <= limits.max_events, "simulate_pulsed: n_pulses exceeds the event cap");

    const double period = sched.period_ns();
    const double tau_abs = detail::to_ns(p.tau_abs);
    const double tau_life = detail::to_ns(p.tau_life);
    const auto duration = static_cast<TimeNs>(
        std::ceil(sched.first_pulse_ns + static_cast<double>(n_pulses) * period));

    Rng rng(seed);
    PulsedRun run;
    run.starts.events.reserve(n_pulses);
    run.emissions.events.reserve(n_pulses);

    double ground_from = 0.0;  // time at which the ion is next in the ground state
    TimeNs last = -1;
    std::size_t merged = 0;
    for (std::uint64_t k = 0; k < n_pulses; ++k) {
        const double on = sched.first_pulse_ns + static_cast<double>(k) * period;
        const double off = on + sched.pulse_width_ns;
        run.starts.events.push_back({static_cast<TimeNs>(std::llround(on)), channel::start});

        double t = std::max(ground_from, on);
        while (t < off) {
            const double absorbed = t + rng.exponential(tau_abs);
            if (absorbed >= off) break;
            const double emitted = absorbed + rng.exponential(tau_life);
            ground_from = emitted;
            t = emitted;
            if (emitted > static_cast<double>(duration)) continue;
            const TimeNs ts = detail::floor_ns(emitted);
            if (ts > last) {
                run.emissions.events.push_back({ts, channel::emission});
                last = ts;
            } else {
                ++merged;
            }
        }
    }

    const Metadata meta = [&] {
        Metadata m = detail::emitter_metadata("simulate_pulsed", p);
        m["repetition_rate_hz"] = format_double(sched.repetition_rate_hz);
        m["pulse_width_ns"] = format_double(sched.pulse_width_ns);
        m["first_pulse_ns"] = format_double(sched.first_pulse_ns);
        m["n_pulses"] = std::to_string(n_pulses);
        return m;
    }();
    for (auto* s : {&run.starts, &run.emissions}) {
        s->duration_ns = duration;
        s->seed = seed;
        s->metadata = meta;
    }
    run.starts.channels = {channel::start};
    run.emissions.channels = {channel::emission};
    run.emissions.metadata["merged_events"] = std::to_string(merged);
    return run;
}

/// Homogeneous Poisson process as a resumable generator.
class PoissonSource {
  public:
    PoissonSource(double rate_hz, std::uint64_t seed, std::uint16_t tag)
        : rng_(seed), mean_gap_ns_(rate_hz > 0 ? constants::ns_per_s / rate_hz
                                              : std::numeric_limits<double>::infinity()),
          tag_(tag) {
        detail::require(rate_hz >= 0 && std::isfinite(rate_hz), "PoissonSource: rate must be >= 0");
        next_ns_ = rng_.exponential(mean_gap_ns_);
    }

    void advance(TimeNs until_ns, std::vector<PhotonEvent>& out) {
        while (next_ns_ < static_cast<double>(until_ns)) {
            const TimeNs t = detail::floor_ns(next_ns_);
            if (t >= until_ns) break;
            if (t > last_) {
                out.push_back({t, tag_});
                last_ = t;
            }
            next_ns_ += rng_.exponential(mean_gap_ns_);
        }
    }

  private:
    Rng rng_;
    double mean_gap_ns_;
    std::uint16_t tag_;
    double next_ns_ = 0.0;
    TimeNs last_ = -1;
};

/// Merges uncorrelated Poisson events into `s` on [0, duration]. Added events
/// carry the stream's own channel so later stages cannot tell them apart;
/// the count is recorded in metadata for diagnostics.
inline PhotonEventStream add_poisson_background(const PhotonEventStream& s, double rate_hz, std::uint64_t seed) {
    detail::require(rate_hz >= 0 && std::isfinite(rate_hz), "add_poisson_background: rate must be >= 0");
    detail::require(s.channels.size() <= 1, "add_poisson_background: stream must carry one channel");
    if (rate_hz == 0) return s;
    const std::uint16_t tag = s.channels.empty() ? channel::emission : s.channels.front();
    std::vector<PhotonEvent> bg;
    PoissonSource src(rate_hz, seed, tag);
    src.advance(s.duration_ns + 1, bg);

    PhotonEventStream out;
    std::size_t dropped = 0;
    out.events = merge_events(s.events, bg, &dropped);
    out.duration_ns = s.duration_ns;
    out.seed = s.seed;
    out.channels = {tag};
    out.metadata = s.metadata;
    out.metadata["background_rate_hz"] = format_double(rate_hz);
    out.metadata["background_seed"] = std::to_string(seed);
    out.metadata["background_events"] = std::to_string(bg.size() - dropped);
    return out;
}

}  // namespace fsps
