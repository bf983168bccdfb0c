#pragma once

#include <cstdint>
#include <memory>

#include "canary/packet.hpp"

namespace canary {

// Ethernet + framing bytes charged once per link traversal, on top of the
// encoded packet (19-byte header + payload).
constexpr int64_t kFramingOverheadBytes = 38;

// Destination encoding for packets addressed to a switch rather than a host
// (tree-restoration packets).
constexpr uint32_t kSwitchDestBase = 0xFFFF0000u;
inline uint32_t switch_destination(uint16_t switch_address) {
    return kSwitchDestBase | switch_address;
}
inline bool is_switch_destination(uint32_t dest) {
    return (dest & 0xFFFF0000u) == kSwitchDestBase;
}

enum class PacketKind : uint8_t {
    Canary,      // Canary wire packets: reduce, bypass, broadcast, restoration
    Control,     // host-to-host protocol messages
    StaticData,  // static-tree reduce contribution
    StaticBcast, // static-tree broadcast
    RingData,    // ring allreduce step traffic
    Background,  // congestion workload traffic
};

enum class CtlType : uint8_t {
    RetransmitRequest, // host -> leader; fallback flag when retries exhausted
    ResultUnicast,     // leader -> host, carries the reduced block
    FailureNotice,     // leader -> hosts, re-issue block under a fresh id
    FallbackNotice,    // leader -> hosts, switch block to host-based reduction
    RingHop,           // fallback ring partial sum
    RingHopAck,
    RingStepAck,       // ring allreduce rendezvous: receiver consumed step N
    Done,              // host -> job coordinator
    Release,           // coordinator -> hosts
};

struct ControlMsg {
    CtlType type = CtlType::Done;
    uint32_t block_seq = 0;
    uint32_t attempt = 0;   // failure notices; fallback tag for ring messages
    uint32_t new_id = 0;    // failure notices: id of the next attempt
    uint32_t hop = 0;       // ring: contributions accumulated so far
    uint32_t requester = 0; // requesting / sending host
    bool fallback = false;  // request issued after max_retries
    PayloadPtr data;        // results and ring partials
};

// The unit the fabric moves around. Exactly one of the per-kind sections is
// meaningful; packets are immutable once transmitted (copies share payloads).
struct SimPacket {
    PacketKind kind = PacketKind::Background;
    uint32_t src_host = 0;
    uint32_t dst_node = 0;  // routing target: host node or switch node
    int32_t job = -1;       // owning job, -1 for background traffic
    bool noise_eligible = false;
    int64_t wire_bytes = 0; // frame bytes, excluding kFramingOverheadBytes

    CanaryPacket canary;    // kind == Canary

    ControlMsg ctl;         // kind == Control

    // static-tree / ring / background bookkeeping
    uint32_t tree = 0;
    uint32_t block_seq = 0;
    uint16_t counter = 0;
    uint8_t ring_phase = 0;  // 0 reduce-scatter, 1 allgather
    uint32_t ring_step = 0;
    uint32_t elem_offset = 0;
    uint32_t msg_packets = 0; // packets making up this chunk
    PayloadPtr data;          // static/ring payload
};

using PacketPtr = std::shared_ptr<SimPacket>;

inline int64_t canary_wire_bytes(size_t elements_per_packet) {
    return static_cast<int64_t>(encoded_size(elements_per_packet));
}

inline int64_t control_wire_bytes(const ControlMsg& m) {
    return static_cast<int64_t>(kHeaderBytes) + 12 +
           (m.data ? static_cast<int64_t>(m.data->size()) * 4 : 0);
}

} // namespace canary
