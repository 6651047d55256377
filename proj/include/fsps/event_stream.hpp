#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fsps/error.hpp"

namespace fsps {

using TimeNs = std::int64_t;

/// Channel tags used by the generators and detection stages.
namespace channel {
inline constexpr std::uint16_t emission = 0;
inline constexpr std::uint16_t start = 1;  // trigger (function generator Ch1)
inline constexpr std::uint16_t detector_a = 2;
inline constexpr std::uint16_t detector_b = 3;
}  // namespace channel

struct PhotonEvent {
    TimeNs time_ns = 0;
    std::uint16_t channel = 0;

    friend bool operator==(const PhotonEvent&, const PhotonEvent&) = default;
};

inline bool event_less(const PhotonEvent& a, const PhotonEvent& b) noexcept {
    return a.time_ns != b.time_ns ? a.time_ns < b.time_ns : a.channel < b.channel;
}

using Metadata = std::map<std::string, std::string>;

/// Time-ordered tagged events on the window [0, duration_ns].
struct PhotonEventStream {
    std::vector<PhotonEvent> events;
    TimeNs duration_ns = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint16_t> channels;  // declared channel set, sorted
    Metadata metadata;

    std::size_t size() const noexcept { return events.size(); }
    bool empty() const noexcept { return events.empty(); }

    double duration_s() const noexcept { return static_cast<double>(duration_ns) * 1e-9; }

    friend bool operator==(const PhotonEventStream&, const PhotonEventStream&) = default;

    /// Throws DomainError if ordering, range or channel invariants fail.
    void validate() const {
        detail::require(duration_ns >= 0, "PhotonEventStream: negative duration");
        detail::require(std::is_sorted(channels.begin(), channels.end()),
                        "PhotonEventStream: channel set must be sorted");
        std::map<std::uint16_t, TimeNs> last;
        for (std::size_t i = 0; i < events.size(); ++i) {
            const auto& e = events[i];
            detail::require(e.time_ns >= 0 && e.time_ns <= duration_ns,
                            "PhotonEventStream: event " + std::to_string(i) + " outside [0, duration]");
            detail::require(std::binary_search(channels.begin(), channels.end(), e.channel),
                            "PhotonEventStream: event " + std::to_string(i) + " has undeclared channel");
            if (i > 0) {
                detail::require(!event_less(e, events[i - 1]),
                                "PhotonEventStream: events not time ordered at " + std::to_string(i));
            }
            auto it = last.find(e.channel);
            if (it != last.end()) {
                detail::require(e.time_ns > it->second,
                                "PhotonEventStream: duplicate timestamp in channel at " + std::to_string(i));
            }
            last[e.channel] = e.time_ns;
        }
    }
};

/// Merges two time-ordered event sequences. Events that repeat an existing
/// (time, channel) pair are dropped: a 1 ns recorder cannot separate them.
/// `dropped`, if given, is incremented by the number removed.
inline std::vector<PhotonEvent> merge_events(std::span<const PhotonEvent> a,
                                             std::span<const PhotonEvent> b,
                                             std::size_t* dropped = nullptr) {
    std::vector<PhotonEvent> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out), event_less);
    const auto end = std::unique(out.begin(), out.end());
    if (dropped) *dropped += static_cast<std::size_t>(out.end() - end);
    out.erase(end, out.end());
    return out;
}

inline std::vector<std::uint16_t> merge_channels(std::vector<std::uint16_t> a,
                                                 const std::vector<std::uint16_t>& b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

/// Copy of a single-channel stream with every event relabelled to `tag`.
inline PhotonEventStream relabel(PhotonEventStream s, std::uint16_t tag) {
    detail::require(s.channels.size() <= 1, "relabel: stream must carry one channel");
    for (auto& e : s.events) e.channel = tag;
    s.channels = {tag};
    return s;
}

}  // namespace fsps
