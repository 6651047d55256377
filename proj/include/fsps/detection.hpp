#pragma once

// Detection chain: SPCM model, spectral weighting, TAC gate and first-stop
// timing, and the HBT fiber coupler.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "fsps/constants.hpp"
#include "fsps/emitter.hpp"
#include "fsps/error.hpp"
#include "fsps/event_stream.hpp"
#include "fsps/format.hpp"
#include "fsps/rng.hpp"

namespace fsps {

struct DetectorParams {
    double quantum_efficiency = 1.0;
    double dark_rate_hz = 0.0;
    double dead_time_ns = 0.0;

    void validate() const {
        detail::require(quantum_efficiency >= 0 && quantum_efficiency <= 1,
                        "DetectorParams.quantum_efficiency must lie in [0, 1]");
        detail::require(dark_rate_hz >= 0 && std::isfinite(dark_rate_hz), "DetectorParams.dark_rate_hz must be >= 0");
        detail::require(dead_time_ns >= 0 && std::isfinite(dead_time_ns), "DetectorParams.dead_time_ns must be >= 0");
    }
};

/// Single-photon counting module as a resumable stage: Bernoulli survival
/// with the quantum efficiency, merged Poisson dark counts, then a
/// non-paralyzable dead time measured from the last accepted event.
class Detector {
  public:
    Detector(const DetectorParams& d, std::uint64_t seed, std::uint16_t tag)
        : params_(d), survival_(derive_seed(seed, 0)), dark_(d.dark_rate_hz, derive_seed(seed, 1), tag) {
        d.validate();
    }

    /// Consumes input events with time < until_ns (all of `in` must satisfy
    /// that) and appends detections to `out`.
    void process(std::span<const PhotonEvent> in, TimeNs until_ns, std::vector<PhotonEvent>& out) {
        survivors_.clear();
        for (const auto& e : in) {
            if (survival_.bernoulli(params_.quantum_efficiency)) survivors_.push_back(e);
        }
        dark_events_.clear();
        dark_.advance(until_ns, dark_events_);
        const auto merged = merge_events(survivors_, dark_events_, &merged_);
        for (const auto& e : merged) {
            if (last_accepted_ >= 0 &&
                static_cast<double>(e.time_ns - last_accepted_) < params_.dead_time_ns) {
                ++dead_;
                continue;
            }
            out.push_back(e);
            last_accepted_ = e.time_ns;
        }
    }

    std::size_t dead_time_losses() const noexcept { return dead_; }

  private:
    DetectorParams params_;
    Rng survival_;
    PoissonSource dark_;
    TimeNs last_accepted_ = -1;
    std::size_t dead_ = 0;
    std::size_t merged_ = 0;
    std::vector<PhotonEvent> survivors_;
    std::vector<PhotonEvent> dark_events_;
};

namespace detail {

inline std::uint16_t single_channel(const PhotonEventStream& s, const char* who) {
    require(s.channels.size() <= 1, std::string(who) + ": stream must carry one channel");
    return s.channels.empty() ? channel::emission : s.channels.front();
}

}  // namespace detail

inline PhotonEventStream apply_detector(const PhotonEventStream& s, const DetectorParams& d, std::uint64_t seed) {
    const std::uint16_t tag = detail::single_channel(s, "apply_detector");
    Detector det(d, seed, tag);
    PhotonEventStream out;
    det.process(s.events, s.duration_ns + 1, out.events);
    out.duration_ns = s.duration_ns;
    out.seed = s.seed;
    out.channels = {tag};
    out.metadata = s.metadata;
    out.metadata["detector_qe"] = format_double(d.quantum_efficiency);
    out.metadata["detector_dark_rate_hz"] = format_double(d.dark_rate_hz);
    out.metadata["detector_dead_time_ns"] = format_double(d.dead_time_ns);
    out.metadata["detector_seed"] = std::to_string(seed);
    return out;
}

/// Detected-photon ratio of two spectral lines: sum(QE * weight) over the
/// wavelengths of line A divided by the same sum over line B.
inline double spectral_detection_ratio(const std::map<double, double>& qe_by_line,
                                       const std::map<double, double>& weight_by_line,
                                       std::span<const double> line_a, std::span<const double> line_b) {
    detail::require(qe_by_line.size() == weight_by_line.size(), "spectral_detection_ratio: maps must share keys");
    bool any_weight = false;
    for (const auto& [wl, qe] : qe_by_line) {
        auto it = weight_by_line.find(wl);
        detail::require(it != weight_by_line.end(), "spectral_detection_ratio: maps must share keys");
        detail::require(it->second >= 0, "spectral_detection_ratio: weights must be >= 0");
        detail::require(qe >= 0 && qe <= 1, "spectral_detection_ratio: QE must lie in [0, 1]");
        any_weight = any_weight || it->second > 0;
    }
    detail::require(any_weight, "spectral_detection_ratio: all weights are zero");
    auto sum = [&](std::span<const double> line) {
        double acc = 0.0;
        for (double wl : line) {
            auto q = qe_by_line.find(wl);
            detail::require(q != qe_by_line.end(), "spectral_detection_ratio: unknown wavelength " + format_double(wl));
            acc += q->second * weight_by_line.at(wl);
        }
        return acc;
    };
    const double num = sum(line_a);
    const double den = sum(line_b);
    detail::require(den != 0, "spectral_detection_ratio: denominator line has zero detected weight");
    return num / den;
}

inline double spectral_detection_ratio(const std::map<double, double>& qe_by_line,
                                       const std::map<double, double>& weight_by_line, double line_a,
                                       double line_b) {
    return spectral_detection_ratio(qe_by_line, weight_by_line, std::span<const double>(&line_a, 1),
                                    std::span<const double>(&line_b, 1));
}

/// Periodic blocking windows [k / rate + phase, k / rate + phase + width).
struct GateSchedule {
    double repetition_rate_hz = 20e3;
    double gate_width_ns = 45e3;
    double phase_ns = 0.0;

    double period_ns() const { return constants::ns_per_s / repetition_rate_hz; }

    void validate() const {
        detail::require(repetition_rate_hz > 0 && std::isfinite(repetition_rate_hz),
                        "GateSchedule.repetition_rate_hz must be > 0");
        detail::require(gate_width_ns >= 0 && gate_width_ns <= period_ns(),
                        "GateSchedule.gate_width_ns must lie in [0, period]");
        detail::require(std::isfinite(phase_ns), "GateSchedule.phase_ns must be finite");
    }

    bool blocks(TimeNs t) const {
        const double period = period_ns();
        double m = std::fmod(static_cast<double>(t) - phase_ns, period);
        if (m < 0) m += period;
        return m < gate_width_ns;
    }
};

inline PhotonEventStream apply_gate(const PhotonEventStream& s, const GateSchedule& g) {
    g.validate();
    PhotonEventStream out;
    out.events.reserve(s.events.size());
    for (const auto& e : s.events) {
        if (!g.blocks(e.time_ns)) out.events.push_back(e);
    }
    out.duration_ns = s.duration_ns;
    out.seed = s.seed;
    out.channels = s.channels;
    out.metadata = s.metadata;
    out.metadata["gate_rate_hz"] = format_double(g.repetition_rate_hz);
    out.metadata["gate_width_ns"] = format_double(g.gate_width_ns);
    out.metadata["gate_phase_ns"] = format_double(g.phase_ns);
    return out;
}

/// Single-stop time-to-amplitude converter: each start records the delay to
/// the first stop in (start, start + range]; a stop serves at most one start.
inline std::vector<TimeNs> tac_first_stop(std::span<const PhotonEvent> starts, std::span<const PhotonEvent> stops,
                                          TimeNs range_ns) {
    detail::require(range_ns > 0, "tac_first_stop: range must be > 0");
    std::vector<TimeNs> delays;
    std::size_t j = 0;
    for (const auto& s : starts) {
        while (j < stops.size() && stops[j].time_ns <= s.time_ns) ++j;
        if (j == stops.size()) break;
        if (stops[j].time_ns - s.time_ns <= range_ns) {
            delays.push_back(stops[j].time_ns - s.time_ns);
            ++j;
        }
    }
    return delays;
}

inline std::vector<TimeNs> tac_first_stop(const PhotonEventStream& starts, const PhotonEventStream& stops,
                                          TimeNs range_ns) {
    return tac_first_stop(std::span<const PhotonEvent>(starts.events), std::span<const PhotonEvent>(stops.events),
                          range_ns);
}

/// Fiber coupler: each photon survives with `transmission`, then goes to
/// port A with probability `split_a`, otherwise to port B.
class Splitter {
  public:
    Splitter(double split_a, double transmission, std::uint64_t seed)
        : split_a_(split_a), transmission_(transmission), rng_(seed) {
        detail::require(split_a >= 0 && split_a <= 1, "hbt_split: split_a must lie in [0, 1]");
        detail::require(transmission >= 0 && transmission <= 1, "hbt_split: transmission must lie in [0, 1]");
    }

    void process(std::span<const PhotonEvent> in, std::vector<PhotonEvent>& a, std::vector<PhotonEvent>& b) {
        for (const auto& e : in) {
            if (!rng_.bernoulli(transmission_)) continue;
            if (rng_.bernoulli(split_a_)) {
                a.push_back({e.time_ns, channel::detector_a});
            } else {
                b.push_back({e.time_ns, channel::detector_b});
            }
        }
    }

  private:
    double split_a_;
    double transmission_;
    Rng rng_;
};

inline std::pair<PhotonEventStream, PhotonEventStream> hbt_split(const PhotonEventStream& s, double split_a,
                                                                 double transmission, std::uint64_t seed) {
    Splitter splitter(split_a, transmission, seed);
    PhotonEventStream a, b;
    splitter.process(s.events, a.events, b.events);
    for (auto* out : {&a, &b}) {
        out->duration_ns = s.duration_ns;
        out->seed = s.seed;
        out->metadata = s.metadata;
        out->metadata["split_a"] = format_double(split_a);
        out->metadata["transmission"] = format_double(transmission);
        out->metadata["split_seed"] = std::to_string(seed);
    }
    a.channels = {channel::detector_a};
    b.channels = {channel::detector_b};
    return {std::move(a), std::move(b)};
}

}  // namespace fsps
