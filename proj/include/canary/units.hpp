#pragma once

#include <cstdint>

namespace canary {

// Simulation time in picoseconds. Signed so that deltas are painless.
using SimTime = int64_t;

constexpr SimTime kPicosecond = 1;
constexpr SimTime kNanosecond = 1000;
constexpr SimTime kMicrosecond = 1000 * kNanosecond;
constexpr SimTime kMillisecond = 1000 * kMicrosecond;
constexpr SimTime kSecond = 1000 * kMillisecond;

constexpr SimTime nanoseconds(double ns) { return static_cast<SimTime>(ns * kNanosecond); }
constexpr SimTime microseconds(double us) { return static_cast<SimTime>(us * kMicrosecond); }

constexpr double to_us(SimTime t) { return static_cast<double>(t) / kMicrosecond; }
constexpr double to_s(SimTime t) { return static_cast<double>(t) / kSecond; }

// Time to clock `bytes` onto a link of `bits_per_second`, rounded up to a ps.
inline SimTime serialization_time(int64_t bytes, int64_t bits_per_second) {
    // bytes*8 bits / (bits/s) in picoseconds = bytes*8*1e12 / bps
    const __int128 num = static_cast<__int128>(bytes) * 8 * 1000000000000LL;
    return static_cast<SimTime>((num + bits_per_second - 1) / bits_per_second);
}

} // namespace canary
