#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace fsps {

/// Name recorded in stream metadata so results can be traced to a generator.
inline constexpr std::string_view kGeneratorName = "mt19937_64/splitmix64";

/// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Sub-seed for stream `index` of a parent seed. Stages and parallel chunks
/// each get their own index so their draws never overlap.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(parent) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Seeded engine with portable uniform/exponential transforms. The standard
/// library distributions are implementation-defined, so only raw engine
/// output is consumed here.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Exponential with the given mean. An infinite mean returns +inf.
    double exponential(double mean) noexcept {
        if (std::isinf(mean)) return std::numeric_limits<double>::infinity();
        return -mean * std::log1p(-uniform());
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    std::mt19937_64& engine() noexcept { return engine_; }

  private:
    std::mt19937_64 engine_;
};

}  // namespace fsps
