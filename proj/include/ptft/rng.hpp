#pragma once

// Seeded, platform-independent random numbers.
//
// Every random decision in the pipeline (splits, shuffles, masking, weight
// init, dropout, synthetic data) draws from SplitMix64 so a seed reproduces
// bit-for-bit on any platform. Host library engines and distributions are not
// used: std::normal_distribution and friends are implementation-defined.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace ptft {

/// SplitMix64 (Steele, Lea, Flood 2014). The state is a 64-bit counter
/// advanced by the golden-ratio increment; each output is a bijective mix of
/// the counter.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : state_{seed} {}

    /// Derive an independent stream for (seed, stream) pairs, e.g. one per epoch.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) noexcept {
        return Rng{mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))};
    }

    std::uint64_t next_u64() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Rejection sampling, so unbiased. n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) {
            x = next_u64();
        }
        return x % n;
    }

    /// Standard normal via Box-Muller; the spare value is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Fisher-Yates, high index down.
    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ptft
