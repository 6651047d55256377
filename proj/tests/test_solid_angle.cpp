#include <cmath>

#include <gtest/gtest.h>

#include "fsps/photonics.hpp"
#include "fsps/solid_angle.hpp"

using namespace fsps;

TEST(SolidAngle, ConeMatchesClosedForm) {
    const double exact = objective_collection_efficiency({0.5, 1.0, 1.0, CollectionSides::both});
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto est = solid_angle_mc(SolidAngleSpec::cone(0.5, 1.0), 1'000'000, seed);
        EXPECT_NEAR(est.estimate, exact, 3 * est.std_error) << "seed " << seed;
        EXPECT_NEAR(est.std_error, 0.00025, 0.00001);
    }
}

TEST(SolidAngle, BothSidesTirMatchesClosedForm) {
    const double exact = channeling_efficiency({0, 1, 1.45, CollectionSides::both});
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto est = solid_angle_mc(SolidAngleSpec::both_sides_tir(1.45), 1'000'000, seed);
        EXPECT_NEAR(est.estimate, exact, 3 * est.std_error) << "seed " << seed;
    }
}

TEST(SolidAngle, OneSideTirMatchesClosedForm) {
    const double exact = channeling_efficiency({0, 1, 1.45, CollectionSides::one});
    const auto est = solid_angle_mc(SolidAngleSpec::tir(1.45), 1'000'000, 12);
    EXPECT_NEAR(est.estimate, exact, 3 * est.std_error);
}

TEST(SolidAngle, DegenerateApertures) {
    EXPECT_EQ(solid_angle_mc(SolidAngleSpec::cone(0.0, 1.0), 10'000, 1).estimate, 0.0);
    EXPECT_EQ(solid_angle_mc(SolidAngleSpec::both_sides_tir(1.0), 10'000, 1).estimate, 0.0);
    EXPECT_EQ(solid_angle_mc(SolidAngleSpec::cone(1.0, 1.0), 10'000, 1).estimate,
              solid_angle_mc(SolidAngleSpec::tir(1e300), 10'000, 1).estimate);
}

TEST(SolidAngle, RejectsBadInput) {
    EXPECT_THROW(solid_angle_mc(SolidAngleSpec::cone(0.5, 1.0), 999, 1), DomainError);
    EXPECT_THROW(solid_angle_mc(SolidAngleSpec::cone(1.5, 1.0), 1000, 1), DomainError);
    EXPECT_THROW(solid_angle_mc(SolidAngleSpec::tir(0.9), 1000, 1), DomainError);
}

TEST(SolidAngle, ErrorShrinksAsInverseRootN) {
    const double exact = objective_collection_efficiency({0.5, 1.0, 1.0, CollectionSides::both});
    for (std::uint64_t n : {10'000ULL, 100'000ULL, 1'000'000ULL}) {
        // Average |error| over seeds, compared with the binomial prediction.
        double mean_abs = 0;
        const int reps = 20;
        for (int s = 0; s < reps; ++s) {
            mean_abs += std::abs(solid_angle_mc(SolidAngleSpec::cone(0.5, 1.0), n, 1000 + s).estimate - exact);
        }
        mean_abs /= reps;
        const double predicted = std::sqrt(exact * (1 - exact) / static_cast<double>(n)) * std::sqrt(2 / M_PI);
        EXPECT_GT(mean_abs, predicted / 2.5) << n;
        EXPECT_LT(mean_abs, predicted * 2.5) << n;
    }
}
