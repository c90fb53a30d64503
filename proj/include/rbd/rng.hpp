#pragma once

#include <cmath>
#include <cstdint>

#include "rbd/common.hpp"

namespace rbd {

// splitmix64; used everywhere randomness must be reproducible across
// platforms and thread counts (std distributions are implementation-defined)
class rng {
  public:
    explicit rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller, second draw cached
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * kPi * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // independent child stream, stable under call order
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                std::uint64_t c = 0) {
        rng mix(seed ^ 0x2545f4914f6cdd1dull);
        mix.state_ ^= a * 0xff51afd7ed558ccdull;
        mix.next_u64();
        mix.state_ ^= b * 0xc4ceb9fe1a85ec53ull;
        mix.next_u64();
        mix.state_ ^= c * 0x9e3779b97f4a7c15ull;
        return mix.next_u64();
    }

  private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace rbd
