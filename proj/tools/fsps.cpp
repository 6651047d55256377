// fsps: simulate, correlate, fit and report on fiber single-photon source
// experiments.
//
// exit codes: 0 ok, 1 usage or config error, 2 runtime failure (including
// a fit that did not converge).

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fsps/report.hpp"

namespace fs = std::filesystem;
using namespace fsps;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

// Thrown for a fit that ran but did not converge.
struct NotConverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path out_dir_or_default(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("FSPS_OUT_DIR"); env && *env) return env;
    return "fsps-out";
}

// --bins is the number of bins on each side of zero delay.
void apply_binning(ExperimentConfig& c, std::optional<std::int64_t> bins, std::optional<std::int64_t> max_delay) {
    if (max_delay) set_config_value(c, "correlator.max_delay_ns", std::to_string(*max_delay));
    if (bins) {
        if (*bins <= 0 || c.max_delay_ns % *bins != 0) {
            throw ParseError("--bins", "must divide max_delay_ns (" + std::to_string(c.max_delay_ns) + ")");
        }
        set_config_value(c, "correlator.bin_width_ns", std::to_string(c.max_delay_ns / *bins));
    }
}

void print_fit(const FitResult& f) {
    for (const auto& [k, v] : f.params) {
        std::cout << "  " << k << " = " << format_double(v);
        if (auto s = f.sigmas.find(k); s != f.sigmas.end()) std::cout << " +- " << format_double(s->second);
        std::cout << "\n";
    }
    std::cout << "  reduced_chi2 = " << format_double(f.reduced_chi2) << ", converged = " << (f.converged ? "yes" : "no")
              << "\n";
}

void require_converged(const FitResult& f) {
    if (!f.converged) throw NotConverged("fit did not converge: " + f.message);
}

Measured pair_of(const std::vector<double>& v) { return {v.at(0), v.at(1)}; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fiber single-photon source simulator and analysis"};
    app.require_subcommand(1);
    std::string out_flag;

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run an experiment from a config file or preset");
    std::string sim_config, sim_preset;
    std::optional<std::uint64_t> sim_seed;
    std::optional<std::string> sim_duration;
    std::optional<std::string> sim_pulses;
    std::optional<std::int64_t> sim_bins, sim_max_delay;
    std::vector<std::string> sim_set;
    bool sim_fit = false;
    auto* cfg_opt = sim->add_option("--config", sim_config, "INI config file")->check(CLI::ExistingFile);
    sim->add_option("--preset", sim_preset, "Built-in preset: " + report::preset_names())->excludes(cfg_opt);
    sim->add_option("--seed", sim_seed, "Master seed");
    sim->add_option("--duration", sim_duration, "CW run length in seconds (replaces n_pulses)");
    sim->add_option("--n-pulses", sim_pulses, "Pulsed run length (replaces duration)");
    sim->add_option("--bins", sim_bins, "Correlator bins per side of zero delay");
    sim->add_option("--max-delay-ns", sim_max_delay, "Correlator half range");
    sim->add_option("--set", sim_set, "Override a field, section.key=value (repeatable)");
    sim->add_flag("--fit", sim_fit, "Also fit the histogram");
    sim->add_option("--out-dir", out_flag, "Output directory");

    // correlate
    auto* cor = app.add_subcommand("correlate", "Build a g2 histogram from two detector stream files");
    std::string cor_a, cor_b;
    std::int64_t cor_bins = 50, cor_max = 50;
    cor->add_option("stream_a", cor_a, "Start channel CSV")->required()->check(CLI::ExistingFile);
    cor->add_option("stream_b", cor_b, "Stop channel CSV")->required()->check(CLI::ExistingFile);
    cor->add_option("--bins", cor_bins, "Bins per side of zero delay")->capture_default_str();
    cor->add_option("--max-delay-ns", cor_max, "Half range in ns")->capture_default_str();
    cor->add_option("--out-dir", out_flag, "Output directory");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a lifetime or g2 histogram file");
    std::string fit_file, fit_model_name;
    std::optional<double> fit_tau_life_us;
    std::size_t fit_bootstrap = 1000;
    std::optional<std::uint64_t> fit_seed;
    bool fit_background = false;
    std::string fit_sampling;
    fit->add_option("histogram", fit_file, "Histogram CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--model", fit_model_name, "lifetime or g2 (default: from the sidecar)");
    fit->add_option("--tau-life-us", fit_tau_life_us, "Fixed lifetime for g2 fits (default 452, inf allowed)");
    fit->add_flag("--background", fit_background, "Lifetime fit with a constant background term");
    fit->add_option("--sampling", fit_sampling,
                    "Model per bin: average, center or integer_ns (default integer_ns for g2, average for lifetime)")
        ->check(CLI::IsMember({"average", "center", "integer_ns"}));
    fit->add_option("--bootstrap", fit_bootstrap, "Bootstrap resamples")->capture_default_str();
    fit->add_option("--seed", fit_seed, "Bootstrap seed");
    fit->add_option("--out-dir", out_flag, "Output directory");

    // efficiency
    auto* eff = app.add_subcommand("efficiency", "Collection efficiencies and pump intensities");
    report::EfficiencyInputs ein;
    std::string sides = "both";
    std::vector<double> tc_s{11.0, 3.1}, tc_f{4.2, 1.2}, n_s{585, 13}, n_f{927, 12};
    eff->add_option("--na", ein.optics.numerical_aperture, "Objective N.A.")->capture_default_str();
    eff->add_option("--n-medium", ein.optics.medium_index, "Index around the objective")->capture_default_str();
    eff->add_option("--n-fiber", ein.optics.fiber_index, "Fiber index")->capture_default_str();
    eff->add_option("--sides", sides, "Sides counted for channeling (one|both)")
        ->check(CLI::IsMember({"one", "both"}))
        ->capture_default_str();
    eff->add_option("--power-selective-uw", ein.power_selective_uw)->capture_default_str();
    eff->add_option("--diameter-selective-um", ein.diameter_selective_um)->capture_default_str();
    eff->add_option("--power-nonselective-uw", ein.power_nonselective_uw)->capture_default_str();
    eff->add_option("--diameter-nonselective-um", ein.diameter_nonselective_um)->capture_default_str();
    eff->add_option("--corr-time-selective-ns", tc_s, "value sigma")->expected(2)->capture_default_str();
    eff->add_option("--corr-time-nonselective-ns", tc_f, "value sigma")->expected(2)->capture_default_str();
    eff->add_option("--rate-selective-hz", n_s, "value sigma")->expected(2)->capture_default_str();
    eff->add_option("--rate-nonselective-hz", n_f, "value sigma")->expected(2)->capture_default_str();
    eff->add_option("--out-dir", out_flag, "Output directory");

    // reproduce
    auto* rep = app.add_subcommand("reproduce", "Regenerate one figure or table with a pass/fail summary");
    std::string rep_id;
    std::optional<std::uint64_t> rep_seed;
    rep->add_option("id", rep_id, "fig4a, fig4b, fig5a, fig5b or table1")->required();
    rep->add_option("--seed", rep_seed, "Replace the preset seed");
    rep->add_option("--out-dir", out_flag, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        const fs::path out = out_dir_or_default(out_flag);

        if (*sim) {
            if (sim_config.empty() == sim_preset.empty()) throw ParseError("simulate", "give one of --config or --preset");
            ExperimentConfig c;
            if (!sim_preset.empty()) {
                try {
                    c = report::preset_config(sim_preset);
                } catch (const DomainError& e) {
                    throw ParseError("--preset", e.what());
                }
            } else {
                c = parse_config_text(io::read_file(sim_config), sim_config);
            }
            for (const auto& kv : sim_set) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw ParseError("--set", "expected section.key=value, got '" + kv + "'");
                set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (sim_seed) c.run.seed = *sim_seed;
            if (sim_duration) {
                set_config_value(c, "run.duration_s", *sim_duration);
                c.run.n_pulses.reset();
            }
            if (sim_pulses) {
                set_config_value(c, "run.n_pulses", *sim_pulses);
                c.run.duration_s.reset();
            }
            apply_binning(c, sim_bins, sim_max_delay);
            validate_config(c);

            const auto r = report::simulate_to(c, out);
            for (const auto& f : r.files) std::cout << "wrote " << f.string() << "\n";
            if (sim_fit) {
                const auto f = report::fit_with_config(c, r.histogram, r.model);
                report::write_fit_artifacts(out, r.histogram, f, r.model,
                                            r.model == report::FitModel::g2 ? c.fit.g2_sampling : BinSampling::average);
                std::cout << "fit (" << (r.model == report::FitModel::g2 ? "g2" : "lifetime") << "):\n";
                print_fit(f);
                require_converged(f);
            }
            return kOk;
        }

        if (*cor) {
            if (cor_bins <= 0 || cor_max % cor_bins != 0) {
                throw ParseError("--bins", "must divide --max-delay-ns (" + std::to_string(cor_max) + ")");
            }
            const auto a = io::read_stream(cor_a);
            const auto b = io::read_stream(cor_b);
            const auto h = correlate(a, b, cor_max / cor_bins, cor_max);
            io::write_histogram(out / "g2.csv", h, "g2");
            std::cout << "wrote " << (out / "g2.csv").string() << " (" << h.total_pairs << " pairs)\n";
            return kOk;
        }

        if (*fit) {
            const auto h = io::read_histogram(fit_file);
            report::FitModel model;
            if (!fit_model_name.empty()) {
                try {
                    model = report::parse_fit_model(fit_model_name);
                } catch (const DomainError& e) {
                    throw ParseError("--model", e.what());
                }
            } else {
                model = h.two_sided() ? report::FitModel::g2 : report::FitModel::lifetime;
            }
            BinSampling sampling = model == report::FitModel::g2 ? BinSampling::integer_ns : BinSampling::average;
            if (!fit_sampling.empty()) sampling = *bin_sampling_from(fit_sampling);
            FitResult f;
            if (model == report::FitModel::lifetime) {
                LifetimeFitOptions o;
                o.sampling = sampling;
                o.n_bootstrap = fit_bootstrap;
                o.fit_background = fit_background;
                if (fit_seed) o.seed = *fit_seed;
                f = fit_lifetime(h, o);
            } else {
                G2FitOptions o;
                o.sampling = sampling;
                o.n_bootstrap = fit_bootstrap;
                if (fit_seed) o.seed = *fit_seed;
                f = fit_g2(h, fit_tau_life_us.value_or(452.0) * 1e-6, o);
            }
            report::write_fit_artifacts(out, h, f, model, sampling);
            std::cout << "wrote " << (out / "fit.json").string() << ", " << (out / "fit_curve.csv").string() << "\n";
            print_fit(f);
            require_converged(f);
            return kOk;
        }

        if (*eff) {
            ein.optics.sides = sides == "one" ? CollectionSides::one : CollectionSides::both;
            ein.correlation_time_selective_ns = pair_of(tc_s);
            ein.correlation_time_nonselective_ns = pair_of(tc_f);
            ein.count_rate_selective_hz = pair_of(n_s);
            ein.count_rate_nonselective_hz = pair_of(n_f);
            io::json j;
            try {
                j = report::efficiency_report(ein);
            } catch (const DomainError& e) {
                throw ParseError("efficiency", e.what());
            }
            const std::string text = j.dump(2) + "\n";
            io::write_file_atomic(out / "efficiency.json", text);
            std::cout << text;
            return kOk;
        }

        if (*rep) {
            const auto& ids = report::figure_ids();
            if (std::find(ids.begin(), ids.end(), rep_id) == ids.end()) {
                try {
                    report::reproduce(rep_id, out);
                } catch (const DomainError& e) {
                    throw ParseError("reproduce", e.what());
                }
            }
            const auto r = report::reproduce(rep_id, out, rep_seed);
            std::cout << io::read_file(r.dir / "summary.md");
            return kOk;
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}
