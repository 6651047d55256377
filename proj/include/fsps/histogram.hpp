#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "fsps/error.hpp"
#include "fsps/event_stream.hpp"

namespace fsps {

/// Binned start-stop delays. `normalized` holds counts / normalization
/// (g2 estimates for a correlation histogram, raw counts for a lifetime
/// histogram) and `errors` the Poisson error sqrt(counts) / normalization.
struct CoincidenceHistogram {
    std::vector<double> bin_edges;  // ns, uniform
    std::vector<std::uint64_t> counts;
    double normalization = 1.0;
    std::vector<double> normalized;
    std::vector<double> errors;
    std::uint64_t total_pairs = 0;

    static CoincidenceHistogram make(std::vector<double> edges, std::vector<std::uint64_t> counts,
                                     double normalization) {
        detail::require(edges.size() >= 2 && counts.size() + 1 == edges.size(),
                        "CoincidenceHistogram: need len(counts) = len(edges) - 1 >= 1");
        detail::require(normalization > 0 && std::isfinite(normalization),
                        "CoincidenceHistogram: normalization must be > 0");
        CoincidenceHistogram h;
        h.bin_edges = std::move(edges);
        h.counts = std::move(counts);
        h.normalization = normalization;
        h.normalized.resize(h.counts.size());
        h.errors.resize(h.counts.size());
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            const auto c = static_cast<double>(h.counts[i]);
            h.normalized[i] = c / normalization;
            h.errors[i] = std::sqrt(c) / normalization;
        }
        h.total_pairs = std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0});
        return h;
    }

    std::size_t size() const noexcept { return counts.size(); }
    double bin_width() const { return bin_edges[1] - bin_edges[0]; }
    double center(std::size_t i) const { return 0.5 * (bin_edges[i] + bin_edges[i + 1]); }

    std::size_t nonempty_bins() const {
        return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
    }

    /// True when the edges are mirror symmetric about zero delay.
    bool two_sided() const {
        const std::size_t n = bin_edges.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double tol = 1e-9 * std::max(1.0, std::abs(bin_edges[i]));
            if (std::abs(bin_edges[i] + bin_edges[n - 1 - i]) > tol) return false;
        }
        return true;
    }

    /// Same histogram with delay axis reversed (tau -> -tau).
    CoincidenceHistogram reflected() const {
        std::vector<double> edges(bin_edges.rbegin(), bin_edges.rend());
        for (auto& e : edges) e = -e;
        return make(std::move(edges), {counts.rbegin(), counts.rend()}, normalization);
    }

    /// Same binning and normalization with different counts.
    CoincidenceHistogram with_counts(std::vector<std::uint64_t> c) const {
        return make(bin_edges, std::move(c), normalization);
    }

    void validate() const {
        detail::require(counts.size() + 1 == bin_edges.size(), "CoincidenceHistogram: len(counts) != len(edges) - 1");
        detail::require(normalized.size() == counts.size() && errors.size() == counts.size(),
                        "CoincidenceHistogram: per-bin arrays differ in length");
        const double w = bin_width();
        detail::require(w > 0, "CoincidenceHistogram: bin width must be > 0");
        for (std::size_t i = 1; i < bin_edges.size(); ++i) {
            detail::require(std::abs(bin_edges[i] - bin_edges[i - 1] - w) <= 1e-9 * std::max(1.0, std::abs(w)),
                            "CoincidenceHistogram: bins are not uniform");
        }
        detail::require(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}) == total_pairs,
                        "CoincidenceHistogram: counts do not sum to total_pairs");
        for (double v : normalized) detail::require(v >= 0, "CoincidenceHistogram: negative normalized value");
    }

    friend bool operator==(const CoincidenceHistogram&, const CoincidenceHistogram&) = default;
};

/// All-pairs start-stop correlator producing a two-sided histogram of
/// t_b - t_a. Bins are centred on multiples of the bin width from -max_delay
/// to +max_delay, so the histogram is reflection symmetric. The width must
/// be odd: edges then sit on half nanoseconds and every bin, the outermost
/// included, covers the same number of integer delays. (An even width would
/// give the zero bin one delay value more than the others.)
///
/// Chunks may be fed in consecutive time windows; pairs that straddle a
/// chunk boundary are kept, so chunking does not change the result.
class Correlator {
  public:
    Correlator(TimeNs bin_width_ns, TimeNs max_delay_ns) : bin_width_(bin_width_ns), max_delay_(max_delay_ns) {
        detail::require(bin_width_ns > 0 && bin_width_ns % 2 == 1, "correlate: bin_width must be an odd number of ns");
        detail::require(max_delay_ns >= 0 && max_delay_ns % bin_width_ns == 0,
                        "correlate: max_delay must be a non-negative multiple of bin_width");
        half_bins_ = max_delay_ns / bin_width_ns;
        reach_ = max_delay_ns + bin_width_ns / 2;
        counts_.assign(static_cast<std::size_t>(2 * half_bins_ + 1), 0);
    }

    /// Adds events with time < until_ns. Every later chunk must only hold
    /// events at or after until_ns.
    void add(std::span<const PhotonEvent> a, std::span<const PhotonEvent> b, TimeNs until_ns) {
        n_a_ += a.size();
        n_b_ += b.size();

        std::vector<PhotonEvent> b_ext;
        b_ext.reserve(tail_b_.size() + b.size());
        b_ext.insert(b_ext.end(), tail_b_.begin(), tail_b_.end());
        b_ext.insert(b_ext.end(), b.begin(), b.end());
        accumulate(a, b_ext);
        accumulate(tail_a_, b);

        tail_a_ = keep_tail(tail_a_, a, until_ns);
        tail_b_ = keep_tail(tail_b_, b, until_ns);
    }

    std::uint64_t events_a() const noexcept { return n_a_; }
    std::uint64_t events_b() const noexcept { return n_b_; }

    /// Histogram normalised by rate_a * rate_b * bin_width * duration.
    CoincidenceHistogram finish(TimeNs duration_ns) const {
        detail::require(duration_ns > 0, "correlate: duration must be > 0");
        detail::require(n_a_ > 0 && n_b_ > 0, "correlate: empty input stream, rates undefined");
        const double w = static_cast<double>(bin_width_);
        std::vector<double> edges(counts_.size() + 1);
        for (std::size_t i = 0; i < edges.size(); ++i) {
            edges[i] = (static_cast<double>(static_cast<std::int64_t>(i) - half_bins_) - 0.5) * w;
        }
        const double norm =
            static_cast<double>(n_a_) * static_cast<double>(n_b_) * w / static_cast<double>(duration_ns);
        return CoincidenceHistogram::make(std::move(edges), counts_, norm);
    }

  private:
    std::int64_t bin_of(TimeNs d) const {
        const TimeNs ad = d < 0 ? -d : d;
        const std::int64_t k = (ad + bin_width_ / 2) / bin_width_;
        return d < 0 ? -k : k;
    }

    void accumulate(std::span<const PhotonEvent> a, std::span<const PhotonEvent> b) {
        std::size_t lo = 0;
        for (const auto& ea : a) {
            while (lo < b.size() && b[lo].time_ns < ea.time_ns - reach_) ++lo;
            for (std::size_t j = lo; j < b.size() && b[j].time_ns <= ea.time_ns + reach_; ++j) {
                ++counts_[static_cast<std::size_t>(bin_of(b[j].time_ns - ea.time_ns) + half_bins_)];
            }
        }
    }

    std::vector<PhotonEvent> keep_tail(const std::vector<PhotonEvent>& old, std::span<const PhotonEvent> fresh,
                                       TimeNs until_ns) const {
        const TimeNs cut = until_ns - reach_;
        std::vector<PhotonEvent> out;
        for (const auto& e : old) {
            if (e.time_ns >= cut) out.push_back(e);
        }
        auto it = std::lower_bound(fresh.begin(), fresh.end(), cut,
                                   [](const PhotonEvent& e, TimeNs t) { return e.time_ns < t; });
        out.insert(out.end(), it, fresh.end());
        return out;
    }

    TimeNs bin_width_;
    TimeNs max_delay_;
    TimeNs reach_ = 0;  // largest |delay| inside the outer bins
    std::int64_t half_bins_ = 0;
    std::vector<std::uint64_t> counts_;
    std::vector<PhotonEvent> tail_a_;
    std::vector<PhotonEvent> tail_b_;
    std::uint64_t n_a_ = 0;
    std::uint64_t n_b_ = 0;
};

inline CoincidenceHistogram correlate(const PhotonEventStream& a, const PhotonEventStream& b, TimeNs bin_width_ns,
                                      TimeNs max_delay_ns) {
    detail::require(a.duration_ns == b.duration_ns, "correlate: streams cover different durations");
    Correlator c(bin_width_ns, max_delay_ns);
    c.add(a.events, b.events, a.duration_ns + 1);
    return c.finish(a.duration_ns);
}

/// Histogram of TAC delays on [origin, origin + n_bins * bin_width); the
/// right edge of the last bin is inclusive. Normalization is 1.
inline CoincidenceHistogram delay_histogram(std::span<const TimeNs> delays, double bin_width_ns,
                                            std::size_t n_bins, double origin_ns = 0.0) {
    detail::require(bin_width_ns > 0 && std::isfinite(bin_width_ns), "delay_histogram: bin width must be > 0");
    detail::require(n_bins >= 1, "delay_histogram: need at least one bin");
    std::vector<double> edges(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i) edges[i] = origin_ns + static_cast<double>(i) * bin_width_ns;
    std::vector<std::uint64_t> counts(n_bins, 0);
    for (TimeNs d : delays) {
        const double x = (static_cast<double>(d) - origin_ns) / bin_width_ns;
        if (x < 0) continue;
        auto i = static_cast<std::size_t>(std::floor(x));
        if (i == n_bins && static_cast<double>(d) == edges.back()) i = n_bins - 1;
        if (i < n_bins) ++counts[i];
    }
    return CoincidenceHistogram::make(std::move(edges), std::move(counts), 1.0);
}

}  // namespace fsps
