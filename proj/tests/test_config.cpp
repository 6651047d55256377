#include <cmath>
#include <functional>
#include <string>

#include <gtest/gtest.h>

#include "fsps/config.hpp"

using namespace fsps;

namespace {

std::string where_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ParseError& e) {
        return e.where();
    }
    return "<no error>";
}

const char* kCw = R"(# minimal CW run
[run]
name = smoke
seed = 42
duration_s = 2.5

[emitter]
tau_life_us = 452
tau_abs_ns = 5.5
)";

}  // namespace

TEST(Config, ParsesMinimalCwRun) {
    const auto c = parse_config(kCw, "cw.ini");
    EXPECT_EQ(c.run.name, "smoke");
    EXPECT_EQ(c.run.seed, 42u);
    EXPECT_DOUBLE_EQ(*c.run.duration_s, 2.5);
    EXPECT_FALSE(c.run.pulsed());
    EXPECT_DOUBLE_EQ(c.emitter().tau_life, 452e-6);
    EXPECT_DOUBLE_EQ(c.emitter().tau_abs, 5.5e-9);
    EXPECT_FALSE(c.gate.has_value());
}

TEST(Config, CommentsAndWhitespace) {
    const auto c = parse_config("; lead\n[run]\n  seed=7  \r\n\n# x\nn_pulses = 10\n[gate]\nwidth_ns = 45000\n",
                                "x.ini");
    EXPECT_EQ(c.run.seed, 7u);
    EXPECT_EQ(*c.run.n_pulses, 10u);
    ASSERT_TRUE(c.gate.has_value());
    EXPECT_DOUBLE_EQ(c.gate->gate_width_ns, 45000);

    const auto d = parse_config("[run]  # trailing\nduration_s = 2 ; s\nseed = 3\t# x\n", "y.ini");
    EXPECT_DOUBLE_EQ(*d.run.duration_s, 2);
    EXPECT_EQ(d.run.seed, 3u);
}

TEST(Config, RoundTripsThroughText) {
    auto c = parse_config(kCw, "cw.ini");
    c.gate = GateSchedule{20e3, 45e3, 25e3};
    c.pump.power_uw = 2.0;
    c.detector_b.dead_time_ns = 50;
    c.fit.seed = 99;
    c.fit.tau_life_us = std::numeric_limits<double>::infinity();
    c.background_rate_hz = 187.281547;
    const auto text = to_ini(c);
    const auto back = parse_config(text, "rt.ini");
    EXPECT_EQ(to_ini(back), text);
    EXPECT_DOUBLE_EQ(back.background_rate_hz, 187.281547);
    EXPECT_TRUE(std::isinf(*back.fit.tau_life_us));
}

TEST(Config, UnknownKeyNamesFieldAndLine) {
    EXPECT_EQ(where_of([] { parse_config("[run]\nseed = 1\nspeed = 3\n", "f.ini"); }), "f.ini:3 run.speed");
    EXPECT_EQ(where_of([] { parse_config("[run]\n[laser]\n", "f.ini"); }), "f.ini:2");
    EXPECT_EQ(where_of([] { parse_config("seed = 1\n", "f.ini"); }), "f.ini:1");
    EXPECT_EQ(where_of([] { parse_config("[run\n", "f.ini"); }), "f.ini:1");
    EXPECT_EQ(where_of([] { parse_config("[run]\nseed\n", "f.ini"); }), "f.ini:2");
}

TEST(Config, BadValuesNameField) {
    EXPECT_EQ(where_of([] { parse_config("[run]\nduration_s = 0\n", "f.ini"); }), "f.ini:2 run.duration_s");
    EXPECT_EQ(where_of([] { parse_config("[run]\nduration_s = 1\n[emitter]\ntau_life_us = abc\n", "f.ini"); }),
              "f.ini:4 emitter.tau_life_us");
    EXPECT_EQ(where_of([] { parse_config("[run]\nduration_s = 1\n[splitter]\nsplit_a = 1.5\n", "f.ini"); }),
              "f.ini:4 splitter.split_a");
    EXPECT_EQ(where_of([] { parse_config("[run]\nseed = -1\n", "f.ini"); }), "f.ini:2 run.seed");
    EXPECT_EQ(where_of([] { parse_config("[run]\nwrite_streams = maybe\n", "f.ini"); }), "f.ini:2 run.write_streams");
    EXPECT_EQ(where_of([] { parse_config("[optics]\nsides = three\n", "f.ini"); }), "f.ini:2 optics.sides");
    EXPECT_EQ(where_of([] { parse_config("[run]\nseed = 1\nseed = 2\n", "f.ini"); }), "f.ini:3 run.seed");
    EXPECT_EQ(where_of([] { parse_config("[run]\nduration_s = inf\n", "f.ini"); }), "f.ini:2 run.duration_s");
}

TEST(Config, ExactlyOneRunLength) {
    EXPECT_EQ(where_of([] { parse_config("[run]\nduration_s = 1\nn_pulses = 5\n", "f.ini"); }), "run");
    EXPECT_EQ(where_of([] { parse_config("[run]\nseed = 1\n", "f.ini"); }), "run");
}

TEST(Config, CrossFieldChecks) {
    const std::string base = "[run]\nduration_s = 1\n";
    EXPECT_EQ(where_of([&] { parse_config(base + "[gate]\nwidth_ns = 60000\n", "f.ini"); }), "gate");
    EXPECT_EQ(where_of([&] { parse_config(base + "[pulse]\nwidth_ns = 2e6\n", "f.ini"); }), "pulse");
    EXPECT_EQ(where_of([&] { parse_config(base + "[optics]\nnumerical_aperture = 1.2\n", "f.ini"); }), "optics");
    EXPECT_EQ(where_of([&] { parse_config(base + "[correlator]\nbin_width_ns = 3\n", "f.ini"); }),
              "correlator.max_delay_ns");
    EXPECT_EQ(where_of([&] { parse_config(base + "[correlator]\nbin_width_ns = 2\n", "f.ini"); }),
              "f.ini:4 correlator.bin_width_ns");
    EXPECT_EQ(where_of([&] { parse_config(base + "[tac]\nbin_width_ns = 30000\n", "f.ini"); }), "tac.bin_width_ns");
}

TEST(Config, OverridesUseFieldChecks) {
    auto c = parse_config(kCw, "cw.ini");
    set_config_value(c, "run.seed", "5");
    set_config_value(c, "correlator.max_delay_ns", "100");
    EXPECT_EQ(c.run.seed, 5u);
    EXPECT_EQ(c.max_delay_ns, 100);
    EXPECT_EQ(where_of([&] { set_config_value(c, "run.duration_s", "0"); }), "run.duration_s");
    EXPECT_EQ(where_of([&] { set_config_value(c, "run.colour", "red"); }), "run.colour");
    EXPECT_EQ(where_of([&] { set_config_value(c, "seed", "1"); }), "seed");
}

TEST(Config, TauAbsFromPump) {
    const auto c = parse_config(
        "[run]\nduration_s = 1\n[emitter]\ntau_life_us = 452\ntau_abs_ns = pump\n"
        "[pump]\npower_uw = 2\nbeam_diameter_um = 9\nwavelength_nm = 1480\nlinewidth_nm = 1\n",
        "f.ini");
    ASSERT_FALSE(c.tau_abs_ns.has_value());
    auto d = c;
    const PumpParams p{2e-6, 9e-6, 1480e-9, 1e-9};
    EXPECT_DOUBLE_EQ(d.tau_abs_s(), absorption_time(p, pump_intensity(p.power, p.beam_diameter), 452e-6));
    d.pump.linewidth_nm.reset();
    EXPECT_THROW(d.tau_abs_s(), DomainError);
    EXPECT_EQ(to_ini(parse_config(to_ini(c), "rt.ini")), to_ini(c));
    EXPECT_EQ(where_of([&] { parse_config(to_ini(d), "f.ini"); }), "emitter");
}

TEST(Config, FitDefaults) {
    const auto c = parse_config(kCw, "cw.ini");
    EXPECT_EQ(c.fit_seed(), derive_seed(42, stage::bootstrap));
    EXPECT_DOUBLE_EQ(c.fit_tau_life_s(), 452e-6);
    EXPECT_EQ(c.fit.g2_sampling, BinSampling::integer_ns);
    const auto d = parse_config(std::string(kCw) + "[fit]\ng2_sampling = average\n", "cw.ini");
    EXPECT_EQ(d.fit.g2_sampling, BinSampling::average);
    EXPECT_EQ(where_of([] { parse_config("[run]\nduration_s = 1\n[fit]\ng2_sampling = box\n", "f.ini"); }),
              "f.ini:4 fit.g2_sampling");
}
