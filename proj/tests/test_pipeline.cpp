#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fsps/pipeline.hpp"

using namespace fsps;

namespace {

ExperimentConfig fast_cw(double duration_s) {
    ExperimentConfig c;
    c.run.duration_s = duration_s;
    c.run.seed = 11;
    c.tau_life_us = 0.2;
    c.tau_abs_ns = 30;
    c.background_rate_hz = 4e5;
    c.detector_a = {0.6, 2e4, 20};
    c.detector_b = {0.7, 1e4, 0};
    c.bin_width_ns = 3;
    c.max_delay_ns = 198;
    return c;
}

// Same run composed from the batch functions.
CoincidenceHistogram batch_hbt(const ExperimentConfig& c) {
    const TimeNs dur = std::llround(*c.run.duration_s * 1e9);
    const auto s = simulate_cw(c.emitter(), dur, detail::ion_seed(c, 0));
    auto [sa, sb] = hbt_split(s, c.split_a, c.transmission, detail::split_seed(c, 0));
    auto port = [&](double rate, std::uint64_t k, std::uint16_t ch) {
        PhotonEventStream empty;
        empty.duration_ns = dur;
        empty.channels = {ch};
        return add_poisson_background(empty, rate, detail::background_seed(c, k));
    };
    const double bg = c.background_rate_hz * c.transmission;
    sa.events = merge_events(sa.events, port(bg * c.split_a, 0, channel::detector_a).events);
    sb.events = merge_events(sb.events, port(bg * (1 - c.split_a), 1, channel::detector_b).events);
    const auto a = apply_detector(sa, c.detector_a, derive_seed(c.run.seed, stage::detector_a));
    const auto b = apply_detector(sb, c.detector_b, derive_seed(c.run.seed, stage::detector_b));
    return correlate(a, b, c.bin_width_ns, c.max_delay_ns);
}

}  // namespace

TEST(Hbt, StreamedMatchesBatch) {
    auto c = fast_cw(0.05);
    c.run.chunk_s = 0.0013;
    const auto streamed = run_hbt(c, false);
    EXPECT_EQ(streamed.histogram, batch_hbt(c));
    c.run.chunk_s = 1.0;
    EXPECT_EQ(run_hbt(c, false).histogram, streamed.histogram);
}

TEST(Hbt, KeptStreamsReproduceHistogram) {
    const auto c = fast_cw(0.02);
    const auto r = run_hbt(c, true);
    r.detector_a.validate();
    r.detector_b.validate();
    EXPECT_EQ(r.detector_a.size(), r.counts_a);
    EXPECT_EQ(r.detector_b.size(), r.counts_b);
    EXPECT_EQ(correlate(r.detector_a, r.detector_b, c.bin_width_ns, c.max_delay_ns), r.histogram);
    EXPECT_EQ(r.detector_a.metadata.at("seed"), "11");
}

TEST(Hbt, StreamCapIsRefusedWithHint) {
    auto c = fast_cw(1.0);
    c.run.max_events = 1000;
    try {
        run_hbt(c, true);
        FAIL() << "expected CapacityError";
    } catch (const CapacityError& e) {
        EXPECT_NE(std::string(e.what()).find("write_streams"), std::string::npos);
    }
    EXPECT_NO_THROW(run_hbt([&] { auto d = c; d.run.duration_s = 0.01; d.run.max_events = 1e8; return d; }(), true));
}

TEST(Hbt, SameNanosecondPairsAcrossSourcesSurvive) {
    // Background alone is flat, including the zero bin.
    ExperimentConfig c;
    c.run.duration_s = 0.5;
    c.tau_abs_ns = std::numeric_limits<double>::infinity();
    c.background_rate_hz = 2e6;
    c.max_delay_ns = 5;
    const auto h = run_hbt(c, false).histogram;
    const double sigma = 1.0 / std::sqrt(h.normalization);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h.normalized[i], 1.0, 4 * sigma) << h.center(i);
}

TEST(Hbt, TwoIonsGiveHalf) {
    ExperimentConfig c;
    c.run.duration_s = 0.05;
    c.run.chunk_s = 0.005;
    c.ions = 2;
    c.tau_life_us = 0.02;
    c.tau_abs_ns = 20;
    c.max_delay_ns = 297;
    c.bin_width_ns = 9;
    EXPECT_DOUBLE_EQ(predicted_g2_zero(c), 0.5);
    c.fit.n_bootstrap = 50;
    const auto r = run_hbt(c, false);
    const auto f = fit_hbt_run(c, r.histogram);
    EXPECT_NEAR(f.param("g2_zero"), 0.5, 4 * f.sigma("g2_zero"));
}

TEST(Background, IdealDetectorsClosedForm) {
    // g(0) = 1 - rho^2 with rho = S / (S + B).
    ExperimentConfig c;
    c.run.duration_s = 1;
    for (auto [tau_abs, target] : {std::pair{5.5, 0.15}, std::pair{2.1, 0.25}}) {
        c.tau_abs_ns = tau_abs;
        const double s = cw_emission_rate(c.emitter());
        const double expect = s * (1.0 / std::sqrt(1.0 - target) - 1.0);
        EXPECT_NEAR(calibrate_background(c, target), expect, 1e-9 * expect);
    }
}

TEST(Background, WithDarkCountsAndQe) {
    auto c = fast_cw(1);
    c.background_rate_hz = 0;
    const double floor = predicted_g2_zero(c);
    EXPECT_GT(floor, 0.0);
    const double b = calibrate_background(c, 0.3);
    c.background_rate_hz = b;
    EXPECT_NEAR(predicted_g2_zero(c), 0.3, 1e-12);
    EXPECT_THROW(calibrate_background(c, floor / 2), DomainError);
    EXPECT_THROW(calibrate_background(c, 1.0), DomainError);
}

TEST(Background, PredictionMatchesSimulation) {
    auto c = fast_cw(2.0);
    c.run.chunk_s = 0.1;
    c.detector_a.dead_time_ns = 0;
    c.fit.n_bootstrap = 50;
    c.fit.seed = 3;
    const auto f = fit_hbt_run(c, run_hbt(c, false).histogram);
    EXPECT_NEAR(f.param("g2_zero"), predicted_g2_zero(c), 4 * f.sigma("g2_zero"));
    EXPECT_NEAR(f.param("tau_abs_ns"), 30.0, 4 * f.sigma("tau_abs_ns"));
}

TEST(Hbt, NarrowDipUnbiasedWithIntegerNsModel) {
    // Dip only a few ns wide, where flooring to ns matters.
    ExperimentConfig c;
    c.run.duration_s = 3;
    c.run.chunk_s = 0.5;
    c.tau_life_us = 0.2;
    c.tau_abs_ns = 2.1;
    c.max_delay_ns = 30;
    c.background_rate_hz = calibrate_background(c, 0.25);
    c.fit.n_bootstrap = 100;
    const auto h = run_hbt(c, false).histogram;
    const auto f = fit_hbt_run(c, h);
    EXPECT_NEAR(f.param("g2_zero"), 0.25, 4 * f.sigma("g2_zero"));
    EXPECT_NEAR(f.param("tau_abs_ns"), 2.1, 4 * f.sigma("tau_abs_ns"));
    // The zero bin is the bare g2(0): same-ns pairs of one emitter do not exist.
    EXPECT_NEAR(h.normalized[h.size() / 2], 0.25, 4 * h.errors[h.size() / 2]);
}

TEST(Lifetime, RunIsConsistent) {
    ExperimentConfig c;
    c.run.n_pulses = 20'000;
    c.tau_life_us = 452;
    c.tau_abs_ns = 20;
    c.gate = GateSchedule{20e3, 45e3, 25e3};
    c.detector_stop = {0.35, 500, 0};
    const auto r = run_lifetime(c);
    EXPECT_EQ(r.starts.size(), 20'000u);
    EXPECT_EQ(r.histogram.size(), 10u);
    EXPECT_EQ(r.histogram.total_pairs, r.delays.size());
    EXPECT_LE(r.delays.size(), r.starts.size());
    for (auto d : r.delays) ASSERT_TRUE(d > 0 && d <= c.tac.range_ns);
    for (const auto& e : r.stops.events) ASSERT_FALSE(c.gate->blocks(e.time_ns));
    // Every bin holds exactly one 5 us open slot of the gate.
    for (auto d : r.delays) {
        const auto m = d % 50'000;
        ASSERT_TRUE(m >= 20'000 && m <= 25'000) << d;
    }
}

TEST(Lifetime, FitRecoversLifetime) {
    ExperimentConfig c;
    c.run.n_pulses = 50'000;
    c.tau_life_us = 452;
    c.tau_abs_ns = 20;
    c.gate = GateSchedule{20e3, 45e3, 25e3};
    c.detector_stop = {0.35, 0, 0};
    c.fit.n_bootstrap = 200;
    const auto r = run_lifetime(c);
    const auto f = fit_lifetime_run(c, r.histogram);
    ASSERT_TRUE(f.converged);
    EXPECT_NEAR(f.param("tau_life_ns"), 452e3, 3 * f.sigma("tau_life_ns"));
}

TEST(Lifetime, Deterministic) {
    ExperimentConfig c;
    c.run.n_pulses = 3000;
    c.ions = 2;
    c.background_rate_hz = 100;
    EXPECT_EQ(run_lifetime(c).delays, run_lifetime(c).delays);
    auto d = c;
    d.run.seed = 2;
    EXPECT_NE(run_lifetime(c).delays, run_lifetime(d).delays);
}

TEST(Pipeline, RejectsWrongRunKind) {
    ExperimentConfig c;
    c.run.n_pulses = 10;
    EXPECT_THROW(run_hbt(c, false), DomainError);
    ExperimentConfig d;
    d.run.duration_s = 1;
    EXPECT_THROW(run_lifetime(d), DomainError);
}
