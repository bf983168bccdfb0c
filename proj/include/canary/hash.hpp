#pragma once

#include <cstdint>

#include "canary/errors.hpp"

namespace canary {

// Seedable multiply-xorshift mix of a 32-bit block id. The seed lets
// experiments re-roll the id->slot mapping without touching ids.
inline uint32_t mix_id(uint32_t id, uint64_t seed) {
    uint64_t z = (static_cast<uint64_t>(id) + 0x9e3779b97f4a7c15ULL) ^ seed;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return static_cast<uint32_t>((z ^ (z >> 31)) >> 16);
}

// Deterministic id -> descriptor slot mapping, uniform over [0, table_size).
inline uint32_t map_id_to_slot(uint32_t id, uint32_t table_size, uint64_t seed = 0) {
    if (table_size == 0) throw ConfigError("map_id_to_slot: table_size must be >= 1");
    return static_cast<uint32_t>(
        (static_cast<uint64_t>(mix_id(id, seed)) * table_size) >> 32);
}

} // namespace canary
