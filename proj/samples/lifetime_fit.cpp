// Gated TAC lifetime run on one ion, then a fit of the delay histogram.
//
//   sample_lifetime_fit [n_pulses] [seed]

#include <cstdint>
#include <cstdlib>
#include <iostream>

#include "fsps/pipeline.hpp"

int main(int argc, char** argv) {
    using namespace fsps;
    ExperimentConfig c;
    c.run.n_pulses = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 2'000'000;
    c.run.seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;
    c.tau_life_us = 452;
    c.tau_abs_ns = 20;
    c.gate = GateSchedule{20e3, 45e3, 25e3};  // stops pass 20-25 us after each 50 us slot
    c.detector_stop = {0.35, 500, 0};
    c.fit.lifetime_background = true;
    c.fit.n_bootstrap = 300;
    validate_config(c);

    const auto run = run_lifetime(c);
    std::cout << "pulses " << *c.run.n_pulses << ", stops " << run.stops.size() << ", delays " << run.delays.size()
              << "\n\n  bin (us)   counts\n";
    for (std::size_t i = 0; i < run.histogram.size(); ++i) {
        std::cout << "  " << run.histogram.center(i) * 1e-3 << "\t" << run.histogram.counts[i] << "\n";
    }

    const auto f = fit_lifetime_run(c, run.histogram);
    std::cout << "\ntau_life = " << f.param("tau_life_ns") * 1e-3 << " +- " << f.sigma("tau_life_ns") * 1e-3
              << " us (injected " << c.tau_life_us << ")\n"
              << "background = " << f.param("background") << " counts/bin, reduced chi2 " << f.reduced_chi2 << "\n";
    return f.converged ? 0 : 2;
}
