#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace fedkbp {

// Deterministic PRNG used everywhere randomness is needed (partition
// shuffles, phantom generation, weight init, per-round batch orders).
// xoshiro256** seeded through splitmix64, both defined by their published
// update rules, so sequences are reproducible across platforms and
// implementations.

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    static Rng seeded(std::uint64_t seed) {
        Rng r;
        std::uint64_t sm = seed;
        for (auto& word : r.state_) word = splitmix64_next(sm);
        return r;
    }

    // Derives an independent stream for (seed, path...). Used so that e.g.
    // site 3's round-7 shuffle never collides with site 5's round-2 one.
    static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t h = seed;
        for (std::uint64_t item : path) {
            std::uint64_t sm = item;
            h ^= splitmix64_next(sm) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
        }
        return seeded(h);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform integer in [0, n) via the multiply-shift reduction.
    std::uint64_t bounded(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace fedkbp
