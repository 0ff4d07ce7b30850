#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace skinny {

/// splitmix64: used for seed expansion and for deriving independent
/// child streams from a master seed.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

/// Folds a sequence of tags into a single derived seed. Streams produced
/// from distinct tag sequences are statistically independent, which is how
/// experiment grids split one master seed across cells/trials/repetitions.
inline std::uint64_t seed_mix(std::uint64_t seed) { return SplitMix64(seed).next(); }

template <typename... Rest>
std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t tag, Rest... rest) {
    SplitMix64 sm(seed);
    std::uint64_t h = sm.next() ^ (tag + 0x9e3779b97f4a7c15ULL);
    return seed_mix(h, rest...);
}

/// xoshiro256++ with explicit, platform-independent floating point helpers.
/// std::normal_distribution et al. are implementation-defined across
/// standard libraries, so all variate generation is done by hand here.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        SplitMix64 sm(seed);
        for (auto& word : s_) word = sm.next();
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    /// Unbiased integer in [0, n). Rejection sampling keeps the stream
    /// identical across platforms.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int uniform_int(int lo, int hi) {  // inclusive range
        return lo + static_cast<int>(uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    /// Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, q;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            q = u * u + v * v;
        } while (q >= 1.0 || q == 0.0);
        const double f = std::sqrt(-2.0 * std::log(q) / q);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {  // Fisher-Yates
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(static_cast<std::uint64_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Child stream derived from this stream's seed path.
    Rng split(std::uint64_t tag) { return Rng(seed_mix(next_u64(), tag)); }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace skinny
