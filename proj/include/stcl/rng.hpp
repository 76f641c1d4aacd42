#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace stcl {

// Reproducible random source. The bit stream is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; every derived draw (uniform, normal,
// bounded integer, shuffle) is computed here rather than through the
// implementation-defined <random> distributions, so a seed yields the same
// sequence on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (one value per call, no cached spare).
    double normal();

    // Uniform integer in [0, n), rejection sampled.
    std::size_t below(std::size_t n);

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    // Independent child stream, derived deterministically from this seed.
    Rng fork(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace stcl
