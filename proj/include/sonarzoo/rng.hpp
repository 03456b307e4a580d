#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sonarzoo {

// Reproducible random source. The core generator is std::mt19937_64, whose
// output sequence is pinned by the C++ standard, and every derived draw below
// is defined explicitly on top of raw 64-bit words (the standard library
// distributions are NOT portable across implementations, so none are used).
//
//   uniform()     -> top 53 bits scaled to [0, 1)
//   uniform_int(n)-> unbiased rejection sampling on 64-bit words
//   normal()      -> Box-Muller pair, second value cached
//
// Identical seed therefore yields an identical draw sequence on any platform.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n >= 1.
    std::int64_t uniform_int(std::int64_t n) {
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<std::int64_t>(x % un);
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates, back to front.
    template <typename V>
    void shuffle(std::vector<V>& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
            const std::int64_t j = uniform_int(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

    // Stable seed derivation for independent sub-streams, e.g. per (width, fold)
    // or (spc, run) work cells. splitmix64 finalizer applied twice.
    static std::uint64_t derive(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
        return mix(mix(base + 0x9E3779B97F4A7C15ULL * (a + 1)) ^
                   (0xBF58476D1CE4E5B9ULL * (b + 1)));
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_ = 0;
    std::mt19937_64 gen_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

} // namespace sonarzoo
