#pragma once

#include <cstdint>
#include <vector>

#include "canary/errors.hpp"
#include "canary/packet.hpp"

namespace canary {

// Closed-form shape of the bandwidth-optimal ring allreduce: reduce-scatter
// then allgather, 2(N-1) steps, vector_bytes/N per host per step.
struct RingSchedule {
    uint32_t steps = 0;
    int64_t bytes_per_step = 0;  // nominal chunk size
    int64_t total_bytes_per_host = 0;
};

inline RingSchedule ring_schedule(uint32_t n_hosts, int64_t vector_bytes) {
    if (n_hosts == 0) throw ConfigError("ring_schedule: empty host set");
    RingSchedule s;
    if (n_hosts == 1) return s; // no traffic, result is the local vector
    s.steps = 2 * (n_hosts - 1);
    s.bytes_per_step = vector_bytes / n_hosts;
    s.total_bytes_per_host = 2 * vector_bytes * (n_hosts - 1) / n_hosts;
    return s;
}

// Element range of chunk c when V elements are split across N ranks.
struct ChunkRange {
    uint32_t first = 0;
    uint32_t count = 0;
};

inline ChunkRange ring_chunk(uint32_t chunk, uint32_t n_hosts, uint32_t elements) {
    const uint64_t lo = static_cast<uint64_t>(elements) * chunk / n_hosts;
    const uint64_t hi = static_cast<uint64_t>(elements) * (chunk + 1) / n_hosts;
    return {static_cast<uint32_t>(lo), static_cast<uint32_t>(hi - lo)};
}

// Chunk sent by `rank` at reduce-scatter step s: (rank - s) mod N.
inline uint32_t ring_rs_send_chunk(uint32_t rank, uint32_t step, uint32_t n) {
    return (rank + n - step % n) % n;
}
// Chunk sent by `rank` at allgather step s: (rank + 1 - s) mod N.
inline uint32_t ring_ag_send_chunk(uint32_t rank, uint32_t step, uint32_t n) {
    return (rank + 1 + n - step % n) % n;
}

} // namespace canary
