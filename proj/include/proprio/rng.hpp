#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace proprio {

/// Seeded random stream with platform-independent output.
///
/// std::mt19937_64 produces a standardized bit sequence, but the standard
/// library distributions do not, so this wrapper converts raw engine output
/// to doubles and bounded ints itself. Substreams are derived from the
/// original seed and a tag, never from the evolving engine state, so e.g.
/// the shuffle stream of epoch 7 is the same no matter how much the
/// initialization stream consumed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], both inclusive. Rejection sampling, no modulo bias.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
        std::uint64_t raw = next_u64();
        while (raw >= limit) raw = next_u64();
        return lo + static_cast<int>(raw % span);
    }

    /// Child stream keyed on (seed, tag, index).
    Rng substream(std::string_view tag, std::uint64_t index = 0) const {
        std::uint64_t h = seed_;
        for (const char c : tag) h = mix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
        h = mix(h ^ index);
        return Rng(h);
    }

    std::uint64_t seed() const { return seed_; }

  private:
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle driven by the deterministic stream.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
        const int j = rng.uniform_int(0, i);
        std::swap(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(j)]);
    }
}

}  // namespace proprio
