#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "canary/errors.hpp"
#include "canary/packet.hpp"
#include "canary/rng.hpp"
#include "canary/sim_packet.hpp"
#include "canary/units.hpp"

namespace canary {

// Block ids are app_id (8 bits) || sequence (24 bits). Re-issued attempts
// draw from the reserved top half of the sequence space so a fresh id can
// never aggregate with soft state left over from a failed attempt:
// bit 23 set, then 13 bits of leader rank and 10 bits of counter.
constexpr uint32_t kReissueBase = 0x800000u;

inline uint32_t block_id(uint8_t app_id, uint32_t sequence) {
    if (sequence >= kReissueBase)
        throw ConfigError("block sequence exceeds the 23-bit id space");
    return (static_cast<uint32_t>(app_id) << 24) | sequence;
}

inline uint32_t reissue_id(uint8_t app_id, uint32_t leader_rank, uint32_t n) {
    if (leader_rank >= (1u << 13)) throw ConfigError("leader rank too large for reissue ids");
    if (n >= (1u << 10)) throw ProtocolError("reissue counter exhausted");
    return (static_cast<uint32_t>(app_id) << 24) | kReissueBase | (leader_rank << 10) | n;
}

struct BlockRange {
    uint32_t sequence = 0;
    uint32_t id = 0;
    uint32_t first_element = 0;
    uint32_t element_count = 0; // un-padded tail may be shorter than E
};

// Split a payload of `element_count` elements into ceil(n/E) blocks with
// consecutive sequence numbers; the last block is zero-padded to E on send.
inline std::vector<BlockRange> packetize(uint32_t element_count, uint8_t app_id,
                                         uint32_t elements_per_packet) {
    if (elements_per_packet == 0) throw ConfigError("elements_per_packet must be >= 1");
    std::vector<BlockRange> blocks;
    const uint32_t n = (element_count + elements_per_packet - 1) / elements_per_packet;
    blocks.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        BlockRange b;
        b.sequence = i;
        b.id = block_id(app_id, i);
        b.first_element = i * elements_per_packet;
        b.element_count = std::min(elements_per_packet, element_count - b.first_element);
        blocks.push_back(b);
    }
    return blocks;
}

// Round-robin leader assignment; the root of a block is the edge switch of
// its leader, so (leader, root) comes from the block sequence alone.
struct BlockRoles {
    uint32_t leader_rank = 0; // index within the job's host list
    uint32_t leader_host = 0; // global host id
    uint32_t root_edge = 0;   // edge switch index of the leader
};

template <typename EdgeOfHost>
BlockRoles assign_block_roles(uint32_t block_seq, const std::vector<uint32_t>& hosts,
                              EdgeOfHost&& edge_of_host) {
    if (hosts.empty()) throw ConfigError("assign_block_roles: empty host list");
    BlockRoles r;
    r.leader_rank = block_seq % hosts.size();
    r.leader_host = hosts[r.leader_rank];
    r.root_edge = edge_of_host(r.leader_host);
    return r;
}

// Host input vectors. Seeded mode generates elements on demand so multi-MiB
// experiments never materialize per-host buffers; explicit mode serves tests.
class InputModel {
public:
    InputModel() = default;
    InputModel(uint64_t seed, uint32_t element_count)
        : seed_(seed), elements_(element_count) {}
    explicit InputModel(std::vector<Payload> vectors)
        : explicit_(std::move(vectors)),
          elements_(explicit_.empty() ? 0 : static_cast<uint32_t>(explicit_[0].size())) {}

    uint32_t element_count() const { return elements_; }

    uint32_t element(uint32_t rank, uint32_t index) const {
        if (!explicit_.empty()) return explicit_[rank][index];
        uint64_t z = seed_ ^ (0x9e3779b97f4a7c15ULL * (rank + 1)) ^
                     (0xc2b2ae3d27d4eb4fULL * (index + 1));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return static_cast<uint32_t>(z ^ (z >> 31));
    }

    // Rank's slice for one block, zero-padded to elements_per_packet.
    Payload block_slice(uint32_t rank, const BlockRange& b, uint32_t elements_per_packet) const {
        Payload out(elements_per_packet, 0);
        for (uint32_t i = 0; i < b.element_count; ++i)
            out[i] = element(rank, b.first_element + i);
        return out;
    }

    // Element-wise wrapping sum over all ranks; the brute-force oracle.
    Payload expected_block(uint32_t ranks, const BlockRange& b,
                           uint32_t elements_per_packet) const {
        Payload out(elements_per_packet, 0);
        for (uint32_t r = 0; r < ranks; ++r)
            for (uint32_t i = 0; i < b.element_count; ++i)
                out[i] += element(r, b.first_element + i);
        return out;
    }

private:
    uint64_t seed_ = 0;
    std::vector<Payload> explicit_;
    uint32_t elements_ = 0;
};

} // namespace canary
