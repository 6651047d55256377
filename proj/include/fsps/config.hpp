#pragma once

// Experiment configuration: a sectioned key = value text format.
//
//   # comment            ; comment
//   [section]
//   key = value          # trailing comments need whitespace before them
//
// Unknown sections and keys are errors, as are repeated keys. Every error
// names the offending field as "section.key" together with the line.
// Units are spelled out in the key names (us, ns, nm, uw, um, hz, s).
// emitter.tau_abs_ns = pump derives the absorption time from [pump].

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fsps/detection.hpp"
#include "fsps/emitter.hpp"
#include "fsps/error.hpp"
#include "fsps/format.hpp"
#include "fsps/models.hpp"
#include "fsps/photonics.hpp"

namespace fsps {

struct RunSettings {
    std::string name = "run";
    std::uint64_t seed = 1;
    std::optional<double> duration_s;       // CW
    std::optional<std::uint64_t> n_pulses;  // pulsed
    bool write_streams = true;
    std::uint64_t max_events = 100'000'000;
    double chunk_s = 10.0;  // streaming granularity for CW runs

    bool pulsed() const { return n_pulses.has_value(); }
};

struct PumpSettings {
    std::optional<double> power_uw;
    std::optional<double> beam_diameter_um;
    std::optional<double> wavelength_nm;
    std::optional<double> linewidth_nm;

    bool complete() const { return power_uw && beam_diameter_um && wavelength_nm && linewidth_nm; }

    PumpParams params() const {
        return {*power_uw * 1e-6, *beam_diameter_um * 1e-6, *wavelength_nm * 1e-9, *linewidth_nm * 1e-9};
    }
};

struct TacSettings {
    TimeNs range_ns = 500'000;
    double bin_width_ns = 50'000;
    double origin_ns = 0;

    std::size_t n_bins() const { return static_cast<std::size_t>(std::llround(static_cast<double>(range_ns) / bin_width_ns)); }
};

struct FitSettings {
    std::size_t n_bootstrap = 1000;
    bool lifetime_background = false;
    std::optional<std::uint64_t> seed;       // default: derived from run.seed
    std::optional<double> tau_life_us;       // g2 fits; default: emitter lifetime
    BinSampling g2_sampling = BinSampling::integer_ns;
};

struct ExperimentConfig {
    RunSettings run;
    double tau_life_us = 452.0;
    std::optional<double> tau_abs_ns = 5.5;  // unset: derived from [pump]
    double i0 = 0.0;
    std::uint32_t ions = 1;
    PumpSettings pump;
    OpticsParams optics{0.5, 1.0, 1.45, CollectionSides::both};
    PulseSchedule pulse;
    std::optional<GateSchedule> gate;
    DetectorParams detector_a;
    DetectorParams detector_b;
    DetectorParams detector_stop;
    double split_a = 0.5;
    double transmission = 0.8;
    double background_rate_hz = 0.0;
    TimeNs bin_width_ns = 1;
    TimeNs max_delay_ns = 50;
    TacSettings tac;
    FitSettings fit;

    /// Absorption time in seconds: explicit, or from the pump via the
    /// intensity relation when only [pump] is given.
    double tau_abs_s() const {
        if (tau_abs_ns) return *tau_abs_ns * 1e-9;
        detail::require(pump.complete(), "emitter.tau_abs_ns is unset and [pump] is incomplete");
        const auto p = pump.params();
        return absorption_time(p, pump_intensity(p.power, p.beam_diameter), tau_life_us * 1e-6);
    }

    EmitterParams emitter() const { return {tau_life_us * 1e-6, tau_abs_s(), i0}; }

    std::uint64_t fit_seed() const { return fit.seed ? *fit.seed : derive_seed(run.seed, 7); }
    double fit_tau_life_s() const { return (fit.tau_life_us ? *fit.tau_life_us : tau_life_us) * 1e-6; }
};

/// Sub-seed indices of the pipeline stages.
namespace stage {
inline constexpr std::uint64_t emitter = 1;
inline constexpr std::uint64_t background = 2;
inline constexpr std::uint64_t splitter = 3;
inline constexpr std::uint64_t detector_a = 4;
inline constexpr std::uint64_t detector_b = 5;
inline constexpr std::uint64_t detector_stop = 6;
inline constexpr std::uint64_t bootstrap = 7;
}  // namespace stage

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

class ConfigFields {
  public:
    using Setter = std::function<void(ExperimentConfig&, std::string_view, const std::string&)>;

    static const ConfigFields& instance() {
        static const ConfigFields f;
        return f;
    }

    bool has_section(const std::string& s) const { return sections_.count(s) > 0; }

    /// Sets `section.key` from text; throws ParseError naming the field.
    void set(ExperimentConfig& c, const std::string& section, const std::string& key, std::string_view value,
             const std::string& where) const {
        auto it = setters_.find(section + "." + key);
        if (it == setters_.end()) throw ParseError(where, "unknown key '" + section + "." + key + "'");
        it->second(c, trim(value), where);
    }

  private:
    ConfigFields() {
        // [run]
        add("run", "name", [](auto& c, auto v, auto& w) {
            if (v.empty() || v.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-.") !=
                                 std::string_view::npos) {
                throw ParseError(w, "must be a non-empty name of letters, digits, '_', '-' or '.'");
            }
            c.run.name = std::string(v);
        });
        add("run", "seed", [](auto& c, auto v, auto& w) { c.run.seed = integer<std::uint64_t>(v, w); });
        add("run", "duration_s", [](auto& c, auto v, auto& w) { c.run.duration_s = positive(v, w); });
        add("run", "n_pulses", [](auto& c, auto v, auto& w) {
            c.run.n_pulses = integer<std::uint64_t>(v, w);
            if (*c.run.n_pulses < 1) throw ParseError(w, "must be >= 1");
        });
        add("run", "write_streams", [](auto& c, auto v, auto& w) { c.run.write_streams = boolean(v, w); });
        add("run", "max_events", [](auto& c, auto v, auto& w) {
            c.run.max_events = integer<std::uint64_t>(v, w);
            if (c.run.max_events < 1) throw ParseError(w, "must be >= 1");
        });
        add("run", "chunk_s", [](auto& c, auto v, auto& w) { c.run.chunk_s = positive(v, w); });

        // [emitter]
        add("emitter", "tau_life_us", [](auto& c, auto v, auto& w) { c.tau_life_us = positive(v, w); });
        add("emitter", "tau_abs_ns", [](auto& c, auto v, auto& w) {
            if (v == "pump") {
                c.tau_abs_ns.reset();
            } else {
                c.tau_abs_ns = positive(v, w, true);
            }
        });
        add("emitter", "i0", [](auto& c, auto v, auto& w) { c.i0 = non_negative(v, w); });
        add("emitter", "ions", [](auto& c, auto v, auto& w) {
            const auto n = integer<std::uint32_t>(v, w);
            if (n < 1) throw ParseError(w, "must be >= 1");
            c.ions = n;
        });

        // [pump]
        add("pump", "power_uw", [](auto& c, auto v, auto& w) { c.pump.power_uw = positive(v, w); });
        add("pump", "beam_diameter_um", [](auto& c, auto v, auto& w) { c.pump.beam_diameter_um = positive(v, w); });
        add("pump", "wavelength_nm", [](auto& c, auto v, auto& w) { c.pump.wavelength_nm = positive(v, w); });
        add("pump", "linewidth_nm", [](auto& c, auto v, auto& w) { c.pump.linewidth_nm = positive(v, w); });

        // [optics]
        add("optics", "numerical_aperture",
            [](auto& c, auto v, auto& w) { c.optics.numerical_aperture = non_negative(v, w); });
        add("optics", "medium_index", [](auto& c, auto v, auto& w) { c.optics.medium_index = at_least_one(v, w); });
        add("optics", "fiber_index", [](auto& c, auto v, auto& w) { c.optics.fiber_index = at_least_one(v, w); });
        add("optics", "sides", [](auto& c, auto v, auto& w) {
            if (v == "one") {
                c.optics.sides = CollectionSides::one;
            } else if (v == "both") {
                c.optics.sides = CollectionSides::both;
            } else {
                throw ParseError(w, "must be 'one' or 'both'");
            }
        });

        // [pulse]
        add("pulse", "repetition_rate_hz", [](auto& c, auto v, auto& w) { c.pulse.repetition_rate_hz = positive(v, w); });
        add("pulse", "width_ns", [](auto& c, auto v, auto& w) { c.pulse.pulse_width_ns = non_negative(v, w); });
        add("pulse", "first_pulse_ns", [](auto& c, auto v, auto& w) { c.pulse.first_pulse_ns = non_negative(v, w); });

        // [gate]: present means enabled
        add("gate", "repetition_rate_hz", [](auto& c, auto v, auto& w) { gate(c).repetition_rate_hz = positive(v, w); });
        add("gate", "width_ns", [](auto& c, auto v, auto& w) { gate(c).gate_width_ns = non_negative(v, w); });
        add("gate", "phase_ns", [](auto& c, auto v, auto& w) { gate(c).phase_ns = finite(v, w); });

        // [detector.a], [detector.b], [detector.stop]
        for (const auto& [section, member] : {std::pair{"detector.a", &ExperimentConfig::detector_a},
                                             std::pair{"detector.b", &ExperimentConfig::detector_b},
                                             std::pair{"detector.stop", &ExperimentConfig::detector_stop}}) {
            add(section, "quantum_efficiency", [m = member](auto& c, auto v, auto& w) {
                (c.*m).quantum_efficiency = unit_interval(v, w);
            });
            add(section, "dark_rate_hz", [m = member](auto& c, auto v, auto& w) { (c.*m).dark_rate_hz = non_negative(v, w); });
            add(section, "dead_time_ns", [m = member](auto& c, auto v, auto& w) { (c.*m).dead_time_ns = non_negative(v, w); });
        }

        // [splitter]
        add("splitter", "split_a", [](auto& c, auto v, auto& w) { c.split_a = unit_interval(v, w); });
        add("splitter", "transmission", [](auto& c, auto v, auto& w) { c.transmission = unit_interval(v, w); });

        // [background]
        add("background", "rate_hz", [](auto& c, auto v, auto& w) { c.background_rate_hz = non_negative(v, w); });

        // [correlator]
        add("correlator", "bin_width_ns", [](auto& c, auto v, auto& w) {
            c.bin_width_ns = integer<TimeNs>(v, w);
            if (c.bin_width_ns < 1 || c.bin_width_ns % 2 == 0) throw ParseError(w, "must be a positive odd integer");
        });
        add("correlator", "max_delay_ns", [](auto& c, auto v, auto& w) {
            c.max_delay_ns = integer<TimeNs>(v, w);
            if (c.max_delay_ns < 1) throw ParseError(w, "must be a positive integer");
        });

        // [tac]
        add("tac", "range_ns", [](auto& c, auto v, auto& w) {
            c.tac.range_ns = integer<TimeNs>(v, w);
            if (c.tac.range_ns < 1) throw ParseError(w, "must be a positive integer");
        });
        add("tac", "bin_width_ns", [](auto& c, auto v, auto& w) { c.tac.bin_width_ns = positive(v, w); });
        add("tac", "origin_ns", [](auto& c, auto v, auto& w) { c.tac.origin_ns = non_negative(v, w); });

        // [fit]
        add("fit", "n_bootstrap", [](auto& c, auto v, auto& w) { c.fit.n_bootstrap = integer<std::size_t>(v, w); });
        add("fit", "lifetime_background", [](auto& c, auto v, auto& w) { c.fit.lifetime_background = boolean(v, w); });
        add("fit", "seed", [](auto& c, auto v, auto& w) { c.fit.seed = integer<std::uint64_t>(v, w); });
        add("fit", "tau_life_us", [](auto& c, auto v, auto& w) { c.fit.tau_life_us = positive(v, w, true); });
        add("fit", "g2_sampling", [](auto& c, auto v, auto& w) {
            auto s = bin_sampling_from(v);
            if (!s) throw ParseError(w, "must be average, center or integer_ns");
            c.fit.g2_sampling = *s;
        });
    }

    void add(const std::string& section, const std::string& key, Setter s) {
        sections_.insert(section);
        setters_[section + "." + key] = std::move(s);
    }

    static GateSchedule& gate(ExperimentConfig& c) {
        if (!c.gate) c.gate = GateSchedule{};
        return *c.gate;
    }

    static double number(std::string_view v, const std::string& w) {
        if (v == "inf") return std::numeric_limits<double>::infinity();
        double x = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (v.empty() || ec != std::errc{} || p != v.data() + v.size() || std::isnan(x)) {
            throw ParseError(w, "expected a number, got '" + std::string(v) + "'");
        }
        return x;
    }

    static double finite(std::string_view v, const std::string& w) {
        const double x = number(v, w);
        if (!std::isfinite(x)) throw ParseError(w, "must be finite");
        return x;
    }

    static double positive(std::string_view v, const std::string& w, bool allow_inf = false) {
        const double x = number(v, w);
        if (!(x > 0) || (!allow_inf && std::isinf(x))) throw ParseError(w, "must be > 0");
        return x;
    }

    static double non_negative(std::string_view v, const std::string& w) {
        const double x = finite(v, w);
        if (x < 0) throw ParseError(w, "must be >= 0");
        return x;
    }

    static double at_least_one(std::string_view v, const std::string& w) {
        const double x = finite(v, w);
        if (x < 1) throw ParseError(w, "must be >= 1");
        return x;
    }

    static double unit_interval(std::string_view v, const std::string& w) {
        const double x = finite(v, w);
        if (x < 0 || x > 1) throw ParseError(w, "must lie in [0, 1]");
        return x;
    }

    template <class T>
    static T integer(std::string_view v, const std::string& w) {
        T x{};
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (v.empty() || ec != std::errc{} || p != v.data() + v.size()) {
            throw ParseError(w, "expected a non-negative integer, got '" + std::string(v) + "'");
        }
        return x;
    }

    static bool boolean(std::string_view v, const std::string& w) {
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw ParseError(w, "expected true or false, got '" + std::string(v) + "'");
    }

    std::set<std::string> sections_;
    std::map<std::string, Setter> setters_;
};

}  // namespace detail

/// Cross-field checks. Throws ParseError naming the section at fault.
inline void validate_config(const ExperimentConfig& c) {
    if (c.run.duration_s.has_value() == c.run.n_pulses.has_value()) {
        throw ParseError("run", "set exactly one of duration_s (CW) or n_pulses (pulsed)");
    }
    auto check = [](const char* where, auto&& f) {
        try {
            f();
        } catch (const DomainError& e) {
            throw ParseError(where, e.what());
        }
    };
    check("emitter", [&] { c.emitter().validate(); });
    check("optics", [&] { c.optics.validate(); });
    check("pulse", [&] { c.pulse.validate(); });
    if (c.gate) check("gate", [&] { c.gate->validate(); });
    if (c.max_delay_ns % c.bin_width_ns != 0) {
        throw ParseError("correlator.max_delay_ns", "must be a multiple of correlator.bin_width_ns");
    }
    const double bins = static_cast<double>(c.tac.range_ns) / c.tac.bin_width_ns;
    if (std::abs(bins - std::round(bins)) > 1e-9 * bins || bins < 1) {
        throw ParseError("tac.bin_width_ns", "must divide tac.range_ns into a whole number of bins");
    }
}

/// Applies one "section.key" = value assignment with the usual checks.
inline void set_config_value(ExperimentConfig& c, const std::string& dotted, std::string_view value) {
    const auto dot = dotted.rfind('.');
    if (dot == std::string::npos) throw ParseError(dotted, "expected section.key");
    detail::ConfigFields::instance().set(c, dotted.substr(0, dot), dotted.substr(dot + 1), value, dotted);
}

/// Parses configuration text on top of the defaults. `name` is used in
/// error locations. Cross-field checks are left to validate_config so
/// callers can apply overrides first.
inline ExperimentConfig parse_config_text(std::string_view text, const std::string& name,
                                          ExperimentConfig base = {}) {
    const auto& fields = detail::ConfigFields::instance();
    std::string section;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        const auto at = name + ":" + std::to_string(line_no);
        line = detail::trim(line);
        if (line.empty() || line.front() == '#' || line.front() == ';') {
            if (end == text.size()) break;
            continue;
        }
        for (std::size_t i = 1; i < line.size(); ++i) {
            if ((line[i] == '#' || line[i] == ';') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
                line = detail::trim(line.substr(0, i));
                break;
            }
        }
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(at, "unterminated section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            if (!fields.has_section(section)) throw ParseError(at, "unknown section [" + section + "]");
            if (section == "gate" && !base.gate) base.gate = GateSchedule{};
        } else {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ParseError(at, "expected 'key = value'");
            if (section.empty()) throw ParseError(at, "key outside of any [section]");
            const std::string key(detail::trim(line.substr(0, eq)));
            const std::string field = section + "." + key;
            if (!seen.insert(field).second) throw ParseError(at + " " + field, "key given twice");
            fields.set(base, section, key, line.substr(eq + 1), at + " " + field);
        }
        if (end == text.size()) break;
    }
    return base;
}

inline ExperimentConfig parse_config(std::string_view text, const std::string& name) {
    auto c = parse_config_text(text, name);
    validate_config(c);
    return c;
}

/// Serializes every field, so parse(to_ini(c)) == c.
inline std::string to_ini(const ExperimentConfig& c) {
    std::string out;
    auto section = [&](const char* s) {
        if (!out.empty()) out += '\n';
        out += '[';
        out += s;
        out += "]\n";
    };
    auto kv = [&](const char* k, const std::string& v) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    };
    auto num = [](double x) { return format_double(x); };
    auto b = [](bool x) { return std::string(x ? "true" : "false"); };

    section("run");
    kv("name", c.run.name);
    kv("seed", std::to_string(c.run.seed));
    if (c.run.duration_s) kv("duration_s", num(*c.run.duration_s));
    if (c.run.n_pulses) kv("n_pulses", std::to_string(*c.run.n_pulses));
    kv("write_streams", b(c.run.write_streams));
    kv("max_events", std::to_string(c.run.max_events));
    kv("chunk_s", num(c.run.chunk_s));

    section("emitter");
    kv("tau_life_us", num(c.tau_life_us));
    kv("tau_abs_ns", c.tau_abs_ns ? num(*c.tau_abs_ns) : "pump");
    kv("i0", num(c.i0));
    kv("ions", std::to_string(c.ions));

    if (c.pump.power_uw || c.pump.beam_diameter_um || c.pump.wavelength_nm || c.pump.linewidth_nm) {
        section("pump");
        if (c.pump.power_uw) kv("power_uw", num(*c.pump.power_uw));
        if (c.pump.beam_diameter_um) kv("beam_diameter_um", num(*c.pump.beam_diameter_um));
        if (c.pump.wavelength_nm) kv("wavelength_nm", num(*c.pump.wavelength_nm));
        if (c.pump.linewidth_nm) kv("linewidth_nm", num(*c.pump.linewidth_nm));
    }

    section("optics");
    kv("numerical_aperture", num(c.optics.numerical_aperture));
    kv("medium_index", num(c.optics.medium_index));
    kv("fiber_index", num(c.optics.fiber_index));
    kv("sides", c.optics.sides == CollectionSides::one ? "one" : "both");

    section("pulse");
    kv("repetition_rate_hz", num(c.pulse.repetition_rate_hz));
    kv("width_ns", num(c.pulse.pulse_width_ns));
    kv("first_pulse_ns", num(c.pulse.first_pulse_ns));

    if (c.gate) {
        section("gate");
        kv("repetition_rate_hz", num(c.gate->repetition_rate_hz));
        kv("width_ns", num(c.gate->gate_width_ns));
        kv("phase_ns", num(c.gate->phase_ns));
    }

    for (const auto& [name, d] : {std::pair{"detector.a", &c.detector_a}, std::pair{"detector.b", &c.detector_b},
                                  std::pair{"detector.stop", &c.detector_stop}}) {
        section(name);
        kv("quantum_efficiency", num(d->quantum_efficiency));
        kv("dark_rate_hz", num(d->dark_rate_hz));
        kv("dead_time_ns", num(d->dead_time_ns));
    }

    section("splitter");
    kv("split_a", num(c.split_a));
    kv("transmission", num(c.transmission));

    section("background");
    kv("rate_hz", num(c.background_rate_hz));

    section("correlator");
    kv("bin_width_ns", std::to_string(c.bin_width_ns));
    kv("max_delay_ns", std::to_string(c.max_delay_ns));

    section("tac");
    kv("range_ns", std::to_string(c.tac.range_ns));
    kv("bin_width_ns", num(c.tac.bin_width_ns));
    kv("origin_ns", num(c.tac.origin_ns));

    section("fit");
    kv("n_bootstrap", std::to_string(c.fit.n_bootstrap));
    kv("lifetime_background", b(c.fit.lifetime_background));
    if (c.fit.seed) kv("seed", std::to_string(*c.fit.seed));
    if (c.fit.tau_life_us) kv("tau_life_us", num(*c.fit.tau_life_us));
    kv("g2_sampling", to_string(c.fit.g2_sampling));
    return out;
}

}  // namespace fsps
