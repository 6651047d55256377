#pragma once

// Presets, run/fit/efficiency commands that write artifacts, and the figure
// reproductions with a markdown summary. Everything written here is a pure
// function of the inputs: no clocks, hostnames or paths end up in files.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fsps/config.hpp"
#include "fsps/fit.hpp"
#include "fsps/io.hpp"
#include "fsps/models.hpp"
#include "fsps/photonics.hpp"
#include "fsps/pipeline.hpp"
#include "fsps/solid_angle.hpp"

namespace fsps::report {

namespace fs = std::filesystem;
using io::json;

// ---------------------------------------------------------------------------
// Presets

struct Preset {
    std::string_view name;
    std::string_view text;
};

namespace detail {

inline constexpr std::string_view kLifetimeSingle = R"(# Gated single-stop TAC lifetime measurement of one ion.
[run]
name = lifetime-single
seed = 402
n_pulses = 20000000
write_streams = false

[emitter]
tau_life_us = 452
tau_abs_ns = 20
ions = 1

[pulse]
repetition_rate_hz = 1000
width_ns = 129
first_pulse_ns = 0

# Stops are blocked for 45 us of every 50 us; the first block ends 20 us
# after each pump pulse.
[gate]
repetition_rate_hz = 20000
width_ns = 45000
phase_ns = 25000

[detector.stop]
quantum_efficiency = 0.35
dark_rate_hz = 500
dead_time_ns = 0

[tac]
range_ns = 500000
bin_width_ns = 50000
origin_ns = 0

[fit]
n_bootstrap = 1000
lifetime_background = true
)";

inline constexpr std::string_view kLifetimeEnsemble = R"(# Same measurement on the ensemble in the untapered fiber, modelled as one
# effective emitter so the stop rate stays near 1 kHz.
[run]
name = lifetime-ensemble
seed = 401
n_pulses = 20000000
write_streams = false

[emitter]
tau_life_us = 475
tau_abs_ns = 20
ions = 1

[pulse]
repetition_rate_hz = 1000
width_ns = 129
first_pulse_ns = 0

[gate]
repetition_rate_hz = 20000
width_ns = 45000
phase_ns = 25000

[detector.stop]
quantum_efficiency = 0.35
dark_rate_hz = 500
dead_time_ns = 0

[tac]
range_ns = 500000
bin_width_ns = 50000
origin_ns = 0

[fit]
n_bootstrap = 1000
lifetime_background = true
)";

inline constexpr std::string_view kHbtSelective = R"(# CW HBT measurement, pump focused on one ion from the side.
[run]
name = hbt-selective
seed = 502
duration_s = 100000
write_streams = false

[emitter]
tau_life_us = 452
tau_abs_ns = 5.5
ions = 1

[splitter]
split_a = 0.5
transmission = 0.8

# Uncorrelated light before the coupler, calibrated so that the expected
# g2(0) is 0.15 with ideal detectors.
[background]
rate_hz = 187.28154736

[correlator]
bin_width_ns = 1
max_delay_ns = 50

[fit]
n_bootstrap = 1000
)";

inline constexpr std::string_view kHbtNonselective = R"(# CW HBT measurement, pump through the guided mode, one ion resolved from the
# side.
[run]
name = hbt-nonselective
seed = 501
duration_s = 100000
write_streams = false

[emitter]
tau_life_us = 452
tau_abs_ns = 2.1
ions = 1

[splitter]
split_a = 0.5
transmission = 0.8

# Calibrated so that the expected g2(0) is 0.25 with ideal detectors.
[background]
rate_hz = 342.25623428

[correlator]
bin_width_ns = 1
max_delay_ns = 50

[fit]
n_bootstrap = 1000
)";

}  // namespace detail

inline const std::vector<Preset>& presets() {
    static const std::vector<Preset> p{
        {"paper-lifetime", detail::kLifetimeSingle},
        {"paper-lifetime-ensemble", detail::kLifetimeEnsemble},
        {"paper-hbt-selective", detail::kHbtSelective},
        {"paper-hbt-nonselective", detail::kHbtNonselective},
    };
    return p;
}

inline std::string preset_names() {
    std::string out;
    for (const auto& p : presets()) out += (out.empty() ? "" : ", ") + std::string(p.name);
    return out;
}

/// Parsed preset (not yet validated, so overrides can still be applied).
inline ExperimentConfig preset_config(std::string_view name) {
    for (const auto& p : presets()) {
        if (p.name == name) return parse_config_text(p.text, "preset " + std::string(p.name));
    }
    throw DomainError("unknown preset '" + std::string(name) + "'; available: " + preset_names());
}

// ---------------------------------------------------------------------------
// Number formatting for human-readable outputs

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string pm(const Measured& m, int digits) { return fixed(m.value, digits) + " ± " + fixed(m.sigma, digits); }

// ---------------------------------------------------------------------------
// Simulation and fitting artifacts

enum class FitModel { lifetime, g2 };

inline FitModel parse_fit_model(std::string_view s) {
    if (s == "lifetime") return FitModel::lifetime;
    if (s == "g2") return FitModel::g2;
    throw DomainError("unknown model '" + std::string(s) + "'; use lifetime or g2");
}

/// Data and fitted model per bin plus the model at the bin centre, for
/// plotting.
inline std::string fit_curve_csv(const CoincidenceHistogram& h, const FitResult& f, FitModel model,
                                 BinSampling sampling = BinSampling::average) {
    std::string out = "tau_ns,counts,data,data_err,model_bin,model_center\n";
    auto row = [&](std::size_t i, double data, double err, double bin, double centre) {
        out += format_double(h.center(i)) + ',' + std::to_string(h.counts[i]) + ',' + format_double(data) + ',' +
               format_double(err) + ',' + format_double(bin) + ',' + format_double(centre) + '\n';
    };
    if (model == FitModel::lifetime) {
        const bool bg = f.params.count("background") > 0;
        Eigen::VectorXd x(bg ? 3 : 2);
        x[0] = f.param("i0");
        x[1] = f.param("tau_life_ns");
        if (bg) x[2] = f.param("background");
        const LifetimeModel m(h, bg, sampling);
        const LifetimeModel c(h, bg, BinSampling::center);
        for (std::size_t i = 0; i < h.size(); ++i) {
            row(i, static_cast<double>(h.counts[i]), std::sqrt(static_cast<double>(h.counts[i])), m.predict(i, x),
                c.predict(i, x));
        }
    } else {
        Eigen::VectorXd x(2);
        x << f.param("g2_zero"), f.param("tau_abs_ns");
        const double life = f.diagnostics.count("tau_life_ns") ? f.diagnostics.at("tau_life_ns")
                                                                : std::numeric_limits<double>::infinity();
        const G2Model m(h, life, sampling);
        const G2Model c(h, life, BinSampling::center);
        for (std::size_t i = 0; i < h.size(); ++i) row(i, h.normalized[i], h.errors[i], m.predict(i, x), c.predict(i, x));
    }
    return out;
}

inline void write_fit_artifacts(const fs::path& dir, const CoincidenceHistogram& h, const FitResult& f,
                                FitModel model, BinSampling sampling = BinSampling::average) {
    io::write_fit(dir / "fit.json", f);
    io::write_file_atomic(dir / "fit_curve.csv", fit_curve_csv(h, f, model, sampling));
}

struct SimulationOutput {
    std::vector<fs::path> files;
    CoincidenceHistogram histogram;  // g2 for CW runs, TAC delays for pulsed runs
    FitModel model = FitModel::g2;
};

/// Runs the configured experiment and writes its data files to `dir`:
/// config.ini, run.json (run metadata), the histogram (g2.csv or
/// lifetime.csv, with sidecars),
/// delays.csv for pulsed runs, and the detected streams when
/// run.write_streams is set.
inline SimulationOutput simulate_to(const ExperimentConfig& c, const fs::path& dir) {
    validate_config(c);
    SimulationOutput out;
    auto put = [&](const fs::path& p) { out.files.push_back(p); };
    if (c.run.pulsed()) {
        const auto r = run_lifetime(c);
        if (c.run.write_streams) {
            io::write_stream(dir / "starts.csv", r.starts);
            io::write_stream(dir / "stops.csv", r.stops);
            put(dir / "starts.csv");
            put(dir / "stops.csv");
        }
        io::write_delays(dir / "delays.csv", r.delays);
        io::write_histogram(dir / "lifetime.csv", r.histogram, "lifetime");
        put(dir / "delays.csv");
        put(dir / "lifetime.csv");
        io::write_file_atomic(dir / "run.json", json(r.metadata).dump(2) + "\n");
        out.histogram = r.histogram;
        out.model = FitModel::lifetime;
    } else {
        const auto r = run_hbt(c, c.run.write_streams);
        if (c.run.write_streams) {
            io::write_stream(dir / "detector_a.csv", r.detector_a);
            io::write_stream(dir / "detector_b.csv", r.detector_b);
            put(dir / "detector_a.csv");
            put(dir / "detector_b.csv");
        }
        io::write_histogram(dir / "g2.csv", r.histogram, "g2");
        put(dir / "g2.csv");
        io::write_file_atomic(dir / "run.json", json(r.metadata).dump(2) + "\n");
        out.histogram = r.histogram;
        out.model = FitModel::g2;
    }
    io::write_file_atomic(dir / "config.ini", to_ini(c));
    put(dir / "run.json");
    put(dir / "config.ini");
    return out;
}

inline FitResult fit_with_config(const ExperimentConfig& c, const CoincidenceHistogram& h, FitModel model) {
    return model == FitModel::lifetime ? fit_lifetime_run(c, h) : fit_hbt_run(c, h);
}

// ---------------------------------------------------------------------------
// Efficiency and pump-intensity report

struct EfficiencyInputs {
    OpticsParams optics{0.5, 1.0, 1.45, CollectionSides::both};
    double power_selective_uw = 2.0;
    double diameter_selective_um = 9.0;
    double power_nonselective_uw = 0.2;
    double diameter_nonselective_um = 2.0;
    std::optional<Measured> correlation_time_selective_ns = Measured{11.0, 3.1};
    std::optional<Measured> correlation_time_nonselective_ns = Measured{4.2, 1.2};
    std::optional<Measured> count_rate_selective_hz = Measured{585, 13};
    std::optional<Measured> count_rate_nonselective_hz = Measured{927, 12};
};

inline json measured_json(const Measured& m) { return {{"value", m.value}, {"sigma", m.sigma}}; }

inline json efficiency_report(const EfficiencyInputs& in) {
    in.optics.validate();
    OpticsParams one = in.optics, both = in.optics;
    one.sides = CollectionSides::one;
    both.sides = CollectionSides::both;
    const double i_s = pump_intensity(in.power_selective_uw * 1e-6, in.diameter_selective_um * 1e-6);
    const double i_f = pump_intensity(in.power_nonselective_uw * 1e-6, in.diameter_nonselective_um * 1e-6);

    json j;
    j["eta_objective"] = objective_collection_efficiency(in.optics);
    j["eta_channel_one_side"] = channeling_efficiency(one);
    j["eta_channel_both_sides"] = channeling_efficiency(both);
    j["pump_intensity_selective_w_m2"] = i_s;
    j["pump_intensity_nonselective_w_m2"] = i_f;
    j["intensity_ratio"] = i_f / i_s;
    if (in.correlation_time_selective_ns && in.correlation_time_nonselective_ns) {
        const auto ratio = ratio_with_uncertainty(*in.correlation_time_selective_ns, *in.correlation_time_nonselective_ns);
        j["correlation_time_ratio"] = measured_json(ratio);
        if (in.count_rate_selective_hz && in.count_rate_nonselective_hz) {
            j["efficiency_ratio"] = measured_json(
                collection_efficiency_ratio(*in.count_rate_selective_hz, *in.count_rate_nonselective_hz, ratio));
        }
    }
    return j;
}

// ---------------------------------------------------------------------------
// Figure reproductions

struct Check {
    std::string what;
    std::string value;
    std::string target;
    bool pass = false;
};

struct Reproduction {
    std::string id;
    fs::path dir;
    std::vector<Check> checks;
    std::vector<fs::path> files;

    bool passed() const {
        for (const auto& c : checks) {
            if (!c.pass) return false;
        }
        return true;
    }
};

inline const std::vector<std::string_view>& figure_ids() {
    static const std::vector<std::string_view> ids{"fig4a", "fig4b", "fig5a", "fig5b", "table1"};
    return ids;
}

namespace detail {

inline std::string figure_list() {
    std::string out;
    for (auto id : figure_ids()) out += (out.empty() ? "" : ", ") + std::string(id);
    return out;
}

inline bool within(double x, double target, double sigma, double k = 3.0) { return std::abs(x - target) <= k * sigma; }

inline std::string summary_markdown(const Reproduction& r, const std::string& title, const std::string& notes) {
    std::string md = "# " + r.id + ": " + title + "\n\n";
    md += "| check | value | target | result |\n|---|---|---|---|\n";
    for (const auto& c : r.checks) {
        md += "| " + c.what + " | " + c.value + " | " + c.target + " | " + (c.pass ? "pass" : "FAIL") + " |\n";
    }
    md += "\nOverall: " + std::string(r.passed() ? "pass" : "FAIL") + "\n";
    if (!notes.empty()) md += "\n" + notes;
    return md;
}

struct LifetimeFigure {
    const char* preset;
    const char* title;
    double published_us;
    double published_sigma_us;
};

struct G2Figure {
    const char* preset;
    const char* title;
    double g2_zero;
    double g2_zero_sigma;
    double correlation_time_ns;
    double correlation_time_sigma_ns;
};

inline Reproduction reproduce_lifetime(Reproduction r, const LifetimeFigure& fig, std::optional<std::uint64_t> seed) {
    auto c = preset_config(fig.preset);
    if (seed) c.run.seed = *seed;
    validate_config(c);
    auto sim = simulate_to(c, r.dir);
    const auto f = fit_lifetime_run(c, sim.histogram);
    write_fit_artifacts(r.dir, sim.histogram, f, FitModel::lifetime);
    r.files = sim.files;
    r.files.push_back(r.dir / "fit.json");
    r.files.push_back(r.dir / "fit_curve.csv");

    const Measured tau{f.param("tau_life_ns") * 1e-3, f.sigma("tau_life_ns") * 1e-3};
    const double injected = c.tau_life_us;
    r.checks.push_back({"fit converged", f.converged ? "yes" : "no", "yes", f.converged});
    r.checks.push_back({"lifetime vs injected (µs)", pm(tau, 1), "within 3σ of " + fixed(injected, 1),
                        within(tau.value, injected, tau.sigma)});
    const double combined = std::hypot(tau.sigma, fig.published_sigma_us);
    r.checks.push_back({"lifetime vs published (µs)", pm(tau, 1),
                        fixed(fig.published_us, 0) + " ± " + fixed(fig.published_sigma_us, 0) + " (3σ combined)",
                        within(tau.value, fig.published_us, combined)});

    const std::string notes = "Pulses: " + std::to_string(*c.run.n_pulses) + ", recorded delays: " +
                              std::to_string(sim.histogram.total_pairs) + ", seed: " + std::to_string(c.run.seed) +
                              ".\nFitted background: " + fixed(f.param("background"), 1) +
                              " counts per bin, reduced chi2: " + fixed(f.reduced_chi2, 3) + ".\n";
    io::write_file_atomic(r.dir / "summary.md", summary_markdown(r, fig.title, notes));
    r.files.push_back(r.dir / "summary.md");
    return r;
}

inline Reproduction reproduce_g2(Reproduction r, const G2Figure& fig, std::optional<std::uint64_t> seed) {
    auto c = preset_config(fig.preset);
    if (seed) c.run.seed = *seed;
    validate_config(c);
    auto sim = simulate_to(c, r.dir);
    const auto f = fit_hbt_run(c, sim.histogram);
    write_fit_artifacts(r.dir, sim.histogram, f, FitModel::g2, c.fit.g2_sampling);
    r.files = sim.files;
    r.files.push_back(r.dir / "fit.json");
    r.files.push_back(r.dir / "fit_curve.csv");

    const Measured g0 = f.measured("g2_zero");
    const Measured tc = f.measured("correlation_time_ns");
    const Verdict v = single_photon_verdict(g0);
    const double expected_g0 = predicted_g2_zero(c);
    const double injected_tc = 2.0 * c.tau_abs_s() * 1e9;

    r.checks.push_back({"fit converged", f.converged ? "yes" : "no", "yes", f.converged});
    r.checks.push_back({"single-photon verdict g2(0) < 0.5", pm(g0, 3) + " (" + fixed(v.significance, 1) + "σ)",
                        "< 0.5", v.single_photon});
    r.checks.push_back({"g2(0) vs calibrated expectation", pm(g0, 3), "within 3σ of " + fixed(expected_g0, 3),
                        within(g0.value, expected_g0, g0.sigma)});
    r.checks.push_back({"2 tau_abs vs injected (ns)", pm(tc, 2), "within 3σ of " + fixed(injected_tc, 2),
                        within(tc.value, injected_tc, tc.sigma)});
    r.checks.push_back({"g2(0) vs published", pm(g0, 3),
                        fixed(fig.g2_zero, 2) + " ± " + fixed(fig.g2_zero_sigma, 2) + " (3σ combined)",
                        within(g0.value, fig.g2_zero, std::hypot(g0.sigma, fig.g2_zero_sigma))});
    r.checks.push_back({"2 tau_abs vs published (ns)", pm(tc, 2),
                        fixed(fig.correlation_time_ns, 1) + " ± " + fixed(fig.correlation_time_sigma_ns, 1) +
                            " (3σ combined)",
                        within(tc.value, fig.correlation_time_ns, std::hypot(tc.sigma, fig.correlation_time_sigma_ns))});

    const std::string notes = "Duration: " + fixed(*c.run.duration_s, 0) + " s, coincidences: " +
                              std::to_string(sim.histogram.total_pairs) + ", background: " +
                              format_double(c.background_rate_hz) + " Hz, seed: " + std::to_string(c.run.seed) +
                              ".\nReduced chi2: " + fixed(f.reduced_chi2, 3) + ", g2(0) at bound: " +
                              (f.diagnostics.at("bound_hit") > 0 ? "yes" : "no") + ".\n";
    io::write_file_atomic(r.dir / "summary.md", summary_markdown(r, fig.title, notes));
    r.files.push_back(r.dir / "summary.md");
    return r;
}

inline Reproduction reproduce_table1(Reproduction r) {
    const EfficiencyInputs in;
    json j = efficiency_report(in);
    const auto mc_obj = solid_angle_mc(SolidAngleSpec::cone(in.optics.numerical_aperture, in.optics.medium_index),
                                       1'000'000, 1);
    const auto mc_fib = solid_angle_mc(SolidAngleSpec::both_sides_tir(in.optics.fiber_index), 1'000'000, 2);
    j["eta_objective_mc"] = measured_json({mc_obj.estimate, mc_obj.std_error});
    j["eta_channel_both_sides_mc"] = measured_json({mc_fib.estimate, mc_fib.std_error});
    io::write_file_atomic(r.dir / "efficiency.json", j.dump(2) + "\n");
    r.files.push_back(r.dir / "efficiency.json");

    const double eta1 = j["eta_objective"], eta2 = j["eta_channel_both_sides"];
    const double i_s = j["pump_intensity_selective_w_m2"], i_f = j["pump_intensity_nonselective_w_m2"];
    const double ratio = j["intensity_ratio"];
    const Measured tr{j["correlation_time_ratio"]["value"], j["correlation_time_ratio"]["sigma"]};
    const Measured er{j["efficiency_ratio"]["value"], j["efficiency_ratio"]["sigma"]};

    r.checks.push_back({"objective efficiency (N.A. 0.5)", fixed(eta1, 5), "0.06699 ± 1e-5", within(eta1, 0.06699, 1e-5, 1)});
    r.checks.push_back({"channeling efficiency (both sides)", fixed(eta2, 5), "0.31034 ± 1e-5", within(eta2, 0.31034, 1e-5, 1)});
    r.checks.push_back({"objective efficiency, Monte Carlo", pm({mc_obj.estimate, mc_obj.std_error}, 5),
                        "within 3 SE of closed form", within(mc_obj.estimate, eta1, mc_obj.std_error)});
    r.checks.push_back({"channeling efficiency, Monte Carlo", pm({mc_fib.estimate, mc_fib.std_error}, 5),
                        "within 3 SE of closed form", within(mc_fib.estimate, eta2, mc_fib.std_error)});
    r.checks.push_back({"pump intensity, selective (W/m²)", fixed(i_s, 0), "[3.0e4, 3.2e4]", i_s >= 3.0e4 && i_s <= 3.2e4});
    r.checks.push_back({"pump intensity, non-selective (W/m²)", fixed(i_f, 0), "[6.2e4, 6.6e4]",
                        i_f >= 6.2e4 && i_f <= 6.6e4});
    r.checks.push_back({"intensity ratio", fixed(ratio, 3), "[1.9, 2.1], about 2", ratio >= 1.9 && ratio <= 2.1});
    r.checks.push_back({"correlation time ratio", pm(tr, 2), "2.6 ± 1.1 to rounding",
                        std::abs(tr.value - 2.6) < 0.05 && std::abs(tr.sigma - 1.1) < 0.05});
    r.checks.push_back({"collection efficiency ratio", pm(er, 2), "[1.5, 1.8], about 1.6", er.value >= 1.5 && er.value <= 1.8});

    io::write_file_atomic(r.dir / "summary.md", summary_markdown(r, "pump intensities and collection efficiencies", ""));
    r.files.push_back(r.dir / "summary.md");
    return r;
}

}  // namespace detail

/// Runs one figure reproduction into out_dir/<id>/. `seed` replaces the
/// preset seed.
inline Reproduction reproduce(std::string_view id, const fs::path& out_dir, std::optional<std::uint64_t> seed = {}) {
    Reproduction r;
    r.id = std::string(id);
    r.dir = out_dir / r.id;
    if (id == "fig4a") {
        return detail::reproduce_lifetime(r, {"paper-lifetime-ensemble", "lifetime, ensemble", 475, 22}, seed);
    }
    if (id == "fig4b") return detail::reproduce_lifetime(r, {"paper-lifetime", "lifetime, single ion", 452, 22}, seed);
    if (id == "fig5a") {
        return detail::reproduce_g2(r, {"paper-hbt-nonselective", "g2, non-selective excitation", 0.25, 0.14, 4.2, 1.2},
                                    seed);
    }
    if (id == "fig5b") {
        return detail::reproduce_g2(r, {"paper-hbt-selective", "g2, selective excitation", 0.15, 0.12, 11.0, 3.1}, seed);
    }
    if (id == "table1") return detail::reproduce_table1(r);
    throw DomainError("unknown figure id '" + std::string(id) + "'; available: " + detail::figure_list());
}

}  // namespace fsps::report
