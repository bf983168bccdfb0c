#pragma once

#include <cstdint>

namespace canary {

// SplitMix64. Small, fast, and stable across platforms, which matters because
// every experiment must be bit-reproducible from its seed.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

    // Uniform in [0, bound) via 64x64->128 multiply; bound must be nonzero.
    uint64_t next_below(uint64_t bound) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

    // Uniform double in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool next_bool(double probability) {
        if (probability <= 0.0) return false;
        if (probability >= 1.0) return true;
        return next_double() < probability;
    }

private:
    uint64_t state_;
};

// Stateless mix of a seed with stream labels; used to derive independent
// substreams (placement, noise, drops, ...) from the single experiment seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    Rng r(seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL) ^
          (c * 0x165667b19e3779f9ULL));
    return r.next_u64();
}

} // namespace canary
