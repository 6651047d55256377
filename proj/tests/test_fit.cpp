#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "fsps/fit.hpp"
#include "fsps/rng.hpp"
#include "oracles.hpp"

using namespace fsps;

namespace {

std::vector<double> edges(double origin, double width, std::size_t n) {
    std::vector<double> e(n + 1);
    for (std::size_t i = 0; i <= n; ++i) e[i] = origin + width * static_cast<double>(i);
    return e;
}

/// Expected counts per bin of i0 exp(-t / tau) + bg, by quadrature.
std::vector<double> decay_means(const std::vector<double>& e, double i0, double tau, double bg = 0.0) {
    std::vector<double> m;
    for (std::size_t i = 0; i + 1 < e.size(); ++i) {
        m.push_back(oracle::bin_mean([&](double t) { return i0 * std::exp(-t / tau); }, e[i], e[i + 1]) + bg);
    }
    return m;
}

/// Expected normalized g2 per bin by quadrature.
std::vector<double> g2_means(const std::vector<double>& e, double g0, double tau_abs, double tau_life) {
    const double k = 1.0 / tau_abs + 1.0 / tau_life;
    std::vector<double> m;
    for (std::size_t i = 0; i + 1 < e.size(); ++i) {
        auto f = [&](double t) { return 1.0 - (1.0 - g0) * std::exp(-k * std::abs(t)); };
        if (e[i] < 0 && e[i + 1] > 0) {
            m.push_back((oracle::simpson(f, e[i], 0) + oracle::simpson(f, 0, e[i + 1])) / (e[i + 1] - e[i]));
        } else {
            m.push_back(oracle::bin_mean(f, e[i], e[i + 1]));
        }
    }
    return m;
}

std::vector<std::uint64_t> rounded(const std::vector<double>& m) {
    std::vector<std::uint64_t> c;
    for (double x : m) c.push_back(static_cast<std::uint64_t>(std::llround(x)));
    return c;
}

CoincidenceHistogram g2_histogram(double g0, double tau_abs, double norm, std::uint64_t seed,
                                  double tau_life = 452e3) {
    const auto e = edges(-50.5, 1.0, 101);
    auto m = g2_means(e, g0, tau_abs, tau_life);
    for (auto& x : m) x *= norm;
    return CoincidenceHistogram::make(e, oracle::poisson_counts(m, seed), norm);
}

LifetimeFitOptions quick_lifetime(std::size_t boot = 0) {
    LifetimeFitOptions o;
    o.n_bootstrap = boot;
    return o;
}

G2FitOptions quick_g2(std::size_t boot = 0) {
    G2FitOptions o;
    o.n_bootstrap = boot;
    return o;
}

}  // namespace

TEST(FitLifetime, NoiselessRecovery) {
    const auto e = edges(0, 10e3, 50);
    const auto h = CoincidenceHistogram::make(e, rounded(decay_means(e, 1e12, 452e3)), 1.0);
    const auto f = fit_lifetime(h, quick_lifetime());
    ASSERT_TRUE(f.converged) << f.message;
    EXPECT_NEAR(f.param("tau_life_ns") / 452e3, 1.0, 1e-6);
    EXPECT_NEAR(f.param("i0") / 1e12, 1.0, 1e-6);
    EXPECT_EQ(f.n_points, 50u);
}

TEST(FitLifetime, NoiselessRecoveryWithBackground) {
    const auto e = edges(0, 50e3, 40);
    const auto h = CoincidenceHistogram::make(e, rounded(decay_means(e, 1e12, 452e3, 3e10)), 1.0);
    auto opt = quick_lifetime();
    opt.fit_background = true;
    const auto f = fit_lifetime(h, opt);
    ASSERT_TRUE(f.converged) << f.message;
    EXPECT_NEAR(f.param("tau_life_ns") / 452e3, 1.0, 1e-6);
    EXPECT_NEAR(f.param("background") / 3e10, 1.0, 1e-6);
}

TEST(FitLifetime, ResidualNoWorseThanTruth) {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const double tau = 1e5 + rng.uniform() * 1e6;
        const double i0 = 1e3 + rng.uniform() * 1e5;
        const auto e = edges(0, tau / 10, 40);
        const auto h = CoincidenceHistogram::make(e, rounded(decay_means(e, i0, tau)), 1.0);
        const auto f = fit_lifetime(h, quick_lifetime());
        ASSERT_TRUE(f.converged);
        const LifetimeModel m(h, false, BinSampling::average);
        Eigen::VectorXd fitted(2), truth(2);
        fitted << f.param("i0"), f.param("tau_life_ns");
        truth << i0, tau;
        EXPECT_LE(m.objective(fitted), m.objective(truth) * (1 + 1e-9) + 1e-12);
    }
}

TEST(FitLifetime, RescalingCounts) {
    const auto e = edges(0, 20e3, 40);
    const auto h = CoincidenceHistogram::make(e, oracle::poisson_counts(decay_means(e, 500, 452e3, 20), 4), 1.0);
    const auto f1 = fit_lifetime(h, quick_lifetime());
    for (std::uint64_t k : {3ULL, 10ULL, 1000ULL}) {
        auto scaled = h.counts;
        for (auto& c : scaled) c *= k;
        const auto fk = fit_lifetime(h.with_counts(scaled), quick_lifetime());
        ASSERT_TRUE(fk.converged);
        EXPECT_NEAR(fk.param("tau_life_ns") / f1.param("tau_life_ns"), 1.0, 1e-6) << k;
        EXPECT_NEAR(fk.param("i0") / (static_cast<double>(k) * f1.param("i0")), 1.0, 1e-6) << k;
    }
}

TEST(FitLifetime, BootstrapShrinksWithCounts) {
    const auto e = edges(0, 20e3, 40);
    std::vector<double> sig;
    for (double i0 : {200.0, 2000.0, 20000.0}) {
        const auto h = CoincidenceHistogram::make(e, oracle::poisson_counts(decay_means(e, i0, 452e3), 8), 1.0);
        const auto f = fit_lifetime(h, quick_lifetime(300));
        sig.push_back(f.diagnostics.at("sigma_bootstrap_tau_life_ns"));
    }
    for (std::size_t i = 1; i < sig.size(); ++i) {
        const double ratio = sig[i - 1] / sig[i];
        EXPECT_GT(ratio, std::sqrt(10.0) / 1.5);
        EXPECT_LT(ratio, std::sqrt(10.0) * 1.5);
    }
}

TEST(FitLifetime, ReportsLargerSigmaAndDiagnostics) {
    const auto e = edges(0, 20e3, 40);
    const auto h = CoincidenceHistogram::make(e, oracle::poisson_counts(decay_means(e, 800, 452e3), 9), 1.0);
    const auto f = fit_lifetime(h, quick_lifetime(200));
    EXPECT_EQ(f.n_bootstrap, 200u);
    for (const std::string p : {"i0", "tau_life_ns"}) {
        const double c = f.diagnostics.at("sigma_curvature_" + p);
        const double b = f.diagnostics.at("sigma_bootstrap_" + p);
        EXPECT_EQ(f.sigma(p), std::max(c, b));
        EXPECT_NEAR(b / c, 1.0, 0.3);
    }
    EXPECT_EQ(f.sigmas.size(), f.params.size());
    EXPECT_GE(f.reduced_chi2, 0.0);
}

TEST(FitLifetime, DeterministicBootstrap) {
    const auto e = edges(0, 20e3, 30);
    const auto h = CoincidenceHistogram::make(e, oracle::poisson_counts(decay_means(e, 300, 452e3), 10), 1.0);
    EXPECT_EQ(fit_lifetime(h, quick_lifetime(50)), fit_lifetime(h, quick_lifetime(50)));
}

TEST(FitLifetime, IterationCapReportedNotHidden) {
    const auto e = edges(0, 20e3, 30);
    const auto h = CoincidenceHistogram::make(e, oracle::poisson_counts(decay_means(e, 300, 452e3), 11), 1.0);
    auto opt = quick_lifetime();
    opt.lsq.max_iterations = 1;
    opt.lsq.param_rtol = 0;
    opt.lsq.cost_rtol = 0;
    const auto f = fit_lifetime(h, opt);
    EXPECT_FALSE(f.converged);
    EXPECT_EQ(f.message, "iteration cap reached");
}

TEST(FitLifetime, NeedsFiveNonemptyBins) {
    const auto h = CoincidenceHistogram::make(edges(0, 1, 6), {5, 4, 3, 2, 0, 0}, 1.0);
    EXPECT_THROW(fit_lifetime(h), DomainError);
}

TEST(FitG2, SyntheticRecovery) {
    int inside = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto h = g2_histogram(0.15, 5.5, 400.0, 100 + seed);
        const auto f = fit_g2(h, 452e-6, quick_g2(100));
        ASSERT_TRUE(f.converged);
        const bool g_ok = std::abs(f.param("g2_zero") - 0.15) < 3 * f.sigma("g2_zero");
        const bool t_ok = std::abs(f.param("tau_abs_ns") - 5.5) < 3 * f.sigma("tau_abs_ns");
        inside += g_ok && t_ok;
        EXPECT_DOUBLE_EQ(f.param("correlation_time_ns"), 2 * f.param("tau_abs_ns"));
        EXPECT_DOUBLE_EQ(f.sigma("correlation_time_ns"), 2 * f.sigma("tau_abs_ns"));
    }
    EXPECT_GE(inside, 18);
}

TEST(FitG2, FlatHistogramHitsBound) {
    const auto h = CoincidenceHistogram::make(edges(-50.5, 1.0, 101), std::vector<std::uint64_t>(101, 400), 400.0);
    const auto f = fit_g2(h, 452e-6, quick_g2(20));
    EXPECT_EQ(f.diagnostics.at("bound_hit"), 1.0);
    EXPECT_EQ(f.param("g2_zero"), 1.0);
}

TEST(FitG2, LifetimeTermNegligibleForLongLifetime) {
    const auto h = g2_histogram(0.15, 5.5, 400.0, 5);
    const auto a = fit_g2(h, 452e-6, quick_g2());
    const auto b = fit_g2(h, std::numeric_limits<double>::infinity(), quick_g2());
    EXPECT_LT(std::abs(a.param("tau_abs_ns") / b.param("tau_abs_ns") - 1.0), 1e-3);
}

TEST(FitG2, ReflectionInvariant) {
    const auto h = g2_histogram(0.2, 4.0, 300.0, 6);
    const auto a = fit_g2(h, 452e-6, quick_g2(50));
    const auto b = fit_g2(h.reflected(), 452e-6, quick_g2(50));
    EXPECT_NEAR(a.param("g2_zero"), b.param("g2_zero"), 1e-7);
    EXPECT_NEAR(a.param("tau_abs_ns") / b.param("tau_abs_ns"), 1.0, 1e-7);
}

TEST(FitG2, Preconditions) {
    const auto one_sided = CoincidenceHistogram::make(edges(0, 1, 10), std::vector<std::uint64_t>(10, 5), 5.0);
    EXPECT_THROW(fit_g2(one_sided, 452e-6), DomainError);
    const auto h = g2_histogram(0.2, 4.0, 300.0, 6);
    EXPECT_THROW(fit_g2(h, 0.0), DomainError);
}

TEST(FitG2, UnconstrainedModeCanLeaveUnitInterval) {
    // Bunched-looking data: zero-delay excess above 1.
    const auto e = edges(-10.5, 1.0, 21);
    std::vector<std::uint64_t> c(21, 1000);
    c[10] = 1400;
    c[9] = c[11] = 1200;
    const auto h = CoincidenceHistogram::make(e, c, 1000.0);
    auto opt = quick_g2();
    opt.constrain_g2_zero = false;
    const auto f = fit_g2(h, 452e-6, opt);
    EXPECT_GT(f.param("g2_zero"), 1.0);
    const auto g = fit_g2(h, 452e-6, quick_g2());
    EXPECT_LE(g.param("g2_zero"), 1.0);
}

TEST(Models, AnalyticGradientsMatchFiniteDifferences) {
    Rng rng(99);
    const auto le = edges(0, 20e3, 30);
    const auto lh = CoincidenceHistogram::make(le, oracle::poisson_counts(decay_means(le, 500, 452e3, 10), 1), 1.0);
    const auto gh = g2_histogram(0.15, 5.5, 300.0, 2);
    for (int i = 0; i < 100; ++i) {
        for (bool bg : {false, true}) {
            const LifetimeModel m(lh, bg, i % 2 ? BinSampling::center : BinSampling::average);
            std::vector<double> x{100 + rng.uniform() * 900, 1e5 + rng.uniform() * 1e6};
            if (bg) x.push_back(rng.uniform() * 50);
            auto f = [&](const std::vector<double>& v) {
                return m.objective(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
            };
            const auto fd = oracle::fd_gradient(f, x);
            const Eigen::VectorXd g =
                m.gradient(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
            for (std::size_t j = 0; j < x.size(); ++j) {
                EXPECT_NEAR(g[static_cast<Eigen::Index>(j)], fd[j], 1e-6 * std::max(std::abs(fd[j]), 1.0));
            }
        }
        const BinSampling sampling[] = {BinSampling::average, BinSampling::center, BinSampling::integer_ns};
        const G2Model gm(gh, 452e3, sampling[i % 3]);
        std::vector<double> x{rng.uniform(), 0.5 + rng.uniform() * 20};
        auto f = [&](const std::vector<double>& v) { return gm.objective(Eigen::Vector2d(v[0], v[1])); };
        const auto fd = oracle::fd_gradient(f, x);
        const Eigen::VectorXd g = gm.gradient(Eigen::Vector2d(x[0], x[1]));
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_NEAR(g[static_cast<Eigen::Index>(j)], fd[j], 1e-6 * std::max(std::abs(fd[j]), 1.0));
        }
    }
}

// Floored timestamps: integer delay d != 0 collects true delays in (d-1, d+1)
// with triangular weight; d = 0 keeps g0.
std::vector<double> integer_ns_means(const std::vector<double>& e, double g0, double tau_abs, double tau_life) {
    const double k = 1.0 / tau_abs + 1.0 / tau_life;
    auto g = [&](double t) { return 1.0 - (1.0 - g0) * std::exp(-k * std::abs(t)); };
    std::vector<double> m;
    for (std::size_t i = 0; i + 1 < e.size(); ++i) {
        double sum = 0;
        int n = 0;
        for (double d = std::ceil(e[i]); d < e[i + 1]; d += 1, ++n) {
            if (d == 0) {
                sum += g0;
                continue;
            }
            sum += oracle::simpson([&](double t) { return g(t) * (1 - std::abs(t - d)); }, d - 1, d + 1, 4000);
        }
        m.push_back(sum / n);
    }
    return m;
}

TEST(Models, IntegerNsMatchesTriangleQuadrature) {
    for (double width : {1.0, 3.0}) {
        const auto e = edges(-10 * width - width / 2, width, 21);
        const auto h = CoincidenceHistogram::make(e, std::vector<std::uint64_t>(21, 1), 1.0);
        for (double tau : {0.7, 2.1, 5.5, 300.0}) {  // 300 ns takes the small-k series
            const G2Model m(h, 452e3, BinSampling::integer_ns);
            const auto want = integer_ns_means(e, 0.2, tau, 452e3);
            for (std::size_t i = 0; i < want.size(); ++i) {
                EXPECT_NEAR(m.predict(i, Eigen::Vector2d(0.2, tau)), want[i], 1e-10) << width << " " << tau << " " << i;
            }
        }
    }
    const auto fine = CoincidenceHistogram::make(edges(-0.5, 0.25, 4), std::vector<std::uint64_t>(4, 1), 1.0);
    EXPECT_THROW(G2Model(fine, 452e3, BinSampling::integer_ns), DomainError);
}

TEST(FitG2, IntegerNsNoiselessRecovery) {
    const auto e = edges(-50.5, 1.0, 101);
    auto m = integer_ns_means(e, 0.25, 2.1, 452e3);
    for (auto& x : m) x *= 1e6;
    auto opt = quick_g2();
    opt.sampling = BinSampling::integer_ns;
    const auto f = fit_g2(CoincidenceHistogram::make(e, rounded(m), 1e6), 452e-6, opt);
    EXPECT_NEAR(f.param("g2_zero"), 0.25, 1e-4);
    EXPECT_NEAR(f.param("tau_abs_ns"), 2.1, 1e-3);
    // The plain bin average misreads the same data.
    const auto a = fit_g2(CoincidenceHistogram::make(e, rounded(m), 1e6), 452e-6, quick_g2());
    EXPECT_GT(std::abs(a.param("g2_zero") - 0.25), 0.05);
}

TEST(Models, SamplingNames) {
    for (auto s : {BinSampling::average, BinSampling::center, BinSampling::integer_ns}) {
        EXPECT_EQ(bin_sampling_from(to_string(s)), s);
    }
    EXPECT_FALSE(bin_sampling_from("triangle").has_value());
}

TEST(Verdict, MeasuredValues) {
    const auto v1 = single_photon_verdict(Measured{0.15, 0.12});
    EXPECT_TRUE(v1.single_photon);
    EXPECT_NEAR(v1.significance, 2.9167, 1e-4);
    const auto v2 = single_photon_verdict(Measured{0.25, 0.14});
    EXPECT_TRUE(v2.single_photon);
    EXPECT_NEAR(v2.significance, 1.7857, 1e-4);
    EXPECT_FALSE(single_photon_verdict(Measured{0.5, 0.1}).single_photon);
}

TEST(Verdict, MissingParameterRejected) {
    FitResult f;
    f.params["tau_life_ns"] = 1.0;
    f.sigmas["tau_life_ns"] = 0.1;
    EXPECT_THROW(single_photon_verdict(f), DomainError);
}

TEST(CountRate, Examples) {
    PhotonEventStream s;
    s.duration_ns = 1'000'000'000;
    for (int i = 0; i < 585; ++i) s.events.push_back({i * 1000, 0});
    auto r = count_rate(s);
    EXPECT_DOUBLE_EQ(r.value, 585.0);
    EXPECT_NEAR(r.sigma, 24.187, 1e-3);

    s.events.clear();
    r = count_rate(s);
    EXPECT_EQ(r, (Measured{0.0, 0.0}));

    s.duration_ns = 1'000'000'000'000LL;
    s.events.resize(1'000'000);
    r = count_rate(s);
    EXPECT_DOUBLE_EQ(r.value, 1000.0);
    EXPECT_DOUBLE_EQ(r.sigma, 1.0);

    s.duration_ns = 0;
    EXPECT_THROW(count_rate(s), DomainError);
}
