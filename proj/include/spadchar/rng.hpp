#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace spadchar {

/// Counter-based random stream: draw `slot` of stream `stream` under `seed` is a
/// pure function of the three integers, so any gate can be replayed in isolation
/// and serial/parallel execution consume identical values.
/// Mixing is the SplitMix64 finalizer applied to a keyed counter.
class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(mix(mix(seed ^ 0x5851f42d4c957f2dULL) + stream * kGamma)) {}

    std::uint64_t bits(std::uint64_t slot) const { return mix(key_ + (slot + 1) * kGamma); }

    /// Uniform on (0, 1].
    double uniform(std::uint64_t slot) const {
        return static_cast<double>((bits(slot) >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal from two consecutive slots (Box-Muller, cosine branch).
    double normal(std::uint64_t slot) const {
        const double r = std::sqrt(-2.0 * std::log(uniform(slot)));
        return r * std::cos(2.0 * std::numbers::pi * uniform(slot + 1));
    }

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
    std::uint64_t key_;
};

/// Child seed for independent sub-runs (sweep points, repetitions).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return CounterRng(master, index ^ 0xa0761d6478bd642fULL).bits(0);
}

} // namespace spadchar
