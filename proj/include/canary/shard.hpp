#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "canary/errors.hpp"

namespace canary {

// One slice of a children bitmap. Prepending the shard index to the bits
// yields the multicast-group key the switch tables are keyed by.
struct Shard {
    uint32_t index;   // which slice of the bitmap
    uint64_t bits;    // the slice, width = port_count / shard_count

    bool operator==(const Shard& o) const { return index == o.index && bits == o.bits; }
};

// Splits a p-bit children bitmap into `shard_count` fixed-width slices and
// returns the nonzero ones (ascending index). Shard i covers ports
// [i*w, (i+1)*w) with w = p / shard_count.
inline std::vector<Shard> shard_children_bitmap(uint64_t bitmap, uint32_t port_count,
                                                uint32_t shard_count) {
    if (shard_count == 0 || port_count == 0 || port_count % shard_count != 0)
        throw ConfigError("shard_children_bitmap: shard_count must divide port_count");
    if (bitmap == 0)
        throw ProtocolError("shard_children_bitmap: empty children bitmap");
    const uint32_t width = port_count / shard_count;
    const uint64_t mask = width == 64 ? ~0ULL : ((1ULL << width) - 1);
    std::vector<Shard> shards;
    for (uint32_t i = 0; i < shard_count; ++i) {
        const uint64_t bits = (bitmap >> (i * width)) & mask;
        if (bits != 0) shards.push_back({i, bits});
    }
    return shards;
}

// Inverse of shard_children_bitmap.
inline uint64_t reassemble_bitmap(const std::vector<Shard>& shards, uint32_t port_count,
                                  uint32_t shard_count) {
    if (shard_count == 0 || port_count % shard_count != 0)
        throw ConfigError("reassemble_bitmap: shard_count must divide port_count");
    const uint32_t width = port_count / shard_count;
    uint64_t bitmap = 0;
    for (const Shard& s : shards) bitmap |= s.bits << (s.index * width);
    return bitmap;
}

// Ports named by one shard entry.
inline std::vector<uint32_t> shard_ports(const Shard& shard, uint32_t width) {
    std::vector<uint32_t> ports;
    for (uint32_t b = 0; b < width; ++b)
        if (shard.bits & (1ULL << b)) ports.push_back(shard.index * width + b);
    return ports;
}

// Number of multicast-group rules needed for p ports split into s shards:
// 2^(p/s) * s, versus 2^p without sharding.
inline uint64_t shard_key_space(uint32_t port_count, uint32_t shard_count) {
    if (shard_count == 0 || port_count % shard_count != 0)
        throw ConfigError("shard_key_space: shard_count must divide port_count");
    return (1ULL << (port_count / shard_count)) * shard_count;
}

// Human-readable rule table for one bitmap, for inspection and debugging.
inline std::string shard_rules_text(uint64_t bitmap, uint32_t port_count,
                                    uint32_t shard_count) {
    const uint32_t width = port_count / shard_count;
    std::ostringstream out;
    for (const Shard& s : shard_children_bitmap(bitmap, port_count, shard_count)) {
        out << s.index << ' ';
        for (uint32_t b = width; b-- > 0;) out << ((s.bits >> b) & 1);
        out << " -> [";
        bool first = true;
        for (uint32_t p : shard_ports(s, width)) {
            if (!first) out << ',';
            out << p;
            first = false;
        }
        out << "]\n";
    }
    return out.str();
}

} // namespace canary
