#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "canary/errors.hpp"
#include "canary/hash.hpp"
#include "canary/packet.hpp"
#include "canary/shard.hpp"
#include "canary/units.hpp"

namespace canary {

// Soft state for one reduction block occupying one table slot.
struct BlockDescriptor {
    uint32_t id = 0;
    Payload accumulator;          // element-wise wrapping sum
    uint32_t counter_sum = 0;     // sum of packet counters aggregated here
    uint16_t hosts = 0;           // expected contributions for the block
    uint64_t children_bitmap = 0; // ingress ports that contributed
    uint32_t leader_destination = 0;
    SimTime created_at = 0;
    SimTime last_activity = 0;
    bool sent_upstream = false;
    uint32_t generation = 0;      // guards timer events against slot reuse
};

enum class ReduceOutcome { StoreNew, Aggregate, EarlyComplete, Straggler, Collision };
enum class BroadcastOutcome { Replicated, Dropped };

// A packet the switch wants transmitted. out_port < 0 means "route toward
// pkt.destination with the fabric's load-balancing policy".
struct SwitchEmit {
    CanaryPacket pkt;
    int out_port = -1;
};

struct ReduceResult {
    ReduceOutcome outcome;
    std::vector<SwitchEmit> emits;
    uint32_t slot = 0;
};

struct TimeoutResult {
    bool fired = false;           // false: stale timer or already-sent slot
    std::vector<SwitchEmit> emits;
};

struct BroadcastResult {
    BroadcastOutcome outcome;
    std::vector<SwitchEmit> emits;
};

struct SwitchStats {
    uint64_t packets_reduced = 0;
    uint64_t collisions = 0;
    uint64_t stragglers = 0;
    uint64_t early_completions = 0;
    uint64_t timeout_emissions = 0;
    uint64_t broadcast_drops = 0;
    uint64_t restorations_served = 0;
    uint64_t stale_evictions = 0;
    int64_t descriptor_bytes = 0;      // currently allocated
    int64_t peak_descriptor_bytes = 0; // high-water mark
};

struct SwitchConfig {
    uint16_t address = 0;
    uint32_t port_count = 16;
    uint32_t shard_count = 1;
    uint32_t table_size = 32768;     // 32K descriptors
    SimTime timeout = microseconds(1.0);
    SimTime timer_granularity = 0;   // 0 = exact per-descriptor timers
    uint64_t hash_seed = 0;
    bool early_completion = true;    // emit as soon as counter_sum == hosts
    // Reclaim slots whose descriptor was sent upstream long ago and whose
    // broadcast never came back (lost or re-issued block). 0 disables.
    SimTime stale_horizon = kMillisecond;
};

// The Canary per-switch state machine. Pure state transitions: every handler
// maps (state, event) to (state', emitted packets); the fabric owns timing,
// queues and routing.
class CanarySwitch {
public:
    explicit CanarySwitch(const SwitchConfig& cfg) : cfg_(cfg), table_(cfg.table_size) {
        if (cfg.table_size == 0) throw ConfigError("switch table_size must be >= 1");
        if (cfg.port_count % cfg.shard_count != 0)
            throw ConfigError("shard_count must divide port_count");
    }

    const SwitchConfig& config() const { return cfg_; }
    const SwitchStats& stats() const { return stats_; }

    // Static table partitioning across applications (multitenancy). Ids of
    // app `app_id` map into [first_slot, first_slot + slots).
    void set_partition(uint8_t app_id, uint32_t first_slot, uint32_t slots) {
        if (first_slot + slots > cfg_.table_size || slots == 0)
            throw ConfigError("bad table partition");
        partitions_[app_id] = {first_slot, slots};
    }

    uint32_t slot_of(uint32_t id) const {
        const auto& p = partitions_[id >> 24];
        if (p.slots != 0)
            return p.first + map_id_to_slot(id, p.slots, cfg_.hash_seed);
        return map_id_to_slot(id, cfg_.table_size, cfg_.hash_seed);
    }

    const std::optional<BlockDescriptor>& descriptor_at(uint32_t slot) const {
        return table_[slot];
    }

    // When this descriptor's timer should fire. Granularity > 0 models the
    // clock-packet workaround: expiries snap up to the next check boundary.
    SimTime timer_deadline(SimTime created_at) const {
        SimTime deadline = created_at + cfg_.timeout;
        if (cfg_.timer_granularity > 0) {
            const SimTime g = cfg_.timer_granularity;
            deadline = ((deadline + g - 1) / g) * g;
        }
        return deadline;
    }

    ReduceResult on_reduce_packet(const CanaryPacket& pkt, uint32_t in_port, SimTime now) {
        if (pkt.bypass || pkt.multicast)
            throw ProtocolError("on_reduce_packet: flagged packet reached reduce path");
        if (pkt.counter > pkt.hosts)
            throw ProtocolError("on_reduce_packet: counter exceeds hosts");
        if (in_port >= cfg_.port_count)
            throw ProtocolError("on_reduce_packet: bad ingress port");
        ++stats_.packets_reduced;

        const uint32_t slot = slot_of(pkt.id);
        auto& entry = table_[slot];

        if (entry && entry->id != pkt.id) {
            // Occupied by a different block. Reclaim long-dead soft state,
            // otherwise hand the packet to the leader (collision).
            if (cfg_.stale_horizon > 0 && entry->sent_upstream &&
                now - entry->last_activity > cfg_.stale_horizon) {
                ++stats_.stale_evictions;
                free_slot(slot);
            } else {
                ++stats_.collisions;
                CanaryPacket fwd = pkt;
                fwd.bypass = true;
                fwd.switch_address = cfg_.address;
                fwd.children = in_port;
                return {ReduceOutcome::Collision, {{std::move(fwd), -1}}, slot};
            }
        }

        if (!entry) {
            BlockDescriptor d;
            d.id = pkt.id;
            d.accumulator = *pkt.data;
            d.counter_sum = pkt.counter;
            d.hosts = pkt.hosts;
            d.children_bitmap = 1ULL << in_port;
            d.leader_destination = pkt.destination;
            d.created_at = now;
            d.last_activity = now;
            d.generation = ++generation_counter_;
            entry = std::move(d);
            track_alloc(*entry);
            if (cfg_.early_completion && entry->counter_sum == entry->hosts) {
                ++stats_.early_completions;
                return {ReduceOutcome::EarlyComplete, {emit_upstream(*entry, now)}, slot};
            }
            return {ReduceOutcome::StoreNew, {}, slot};
        }

        BlockDescriptor& d = *entry;
        if (d.sent_upstream) {
            // Straggler: record the child so the broadcast reaches it, then
            // forward the packet unchanged toward the root.
            ++stats_.stragglers;
            d.children_bitmap |= 1ULL << in_port;
            d.last_activity = now;
            return {ReduceOutcome::Straggler, {{pkt, -1}}, slot};
        }

        for (size_t i = 0; i < d.accumulator.size(); ++i)
            d.accumulator[i] += (*pkt.data)[i];
        d.counter_sum += pkt.counter;
        d.children_bitmap |= 1ULL << in_port;
        d.last_activity = now;
        if (d.counter_sum > d.hosts)
            throw ProtocolError("descriptor counter_sum exceeds hosts");
        if (cfg_.early_completion && d.counter_sum == d.hosts) {
            ++stats_.early_completions;
            return {ReduceOutcome::EarlyComplete, {emit_upstream(d, now)}, slot};
        }
        return {ReduceOutcome::Aggregate, {}, slot};
    }

    // Per-descriptor timer expiry. The generation check makes firing on a
    // freed or reused slot a no-op, as is firing after an early completion.
    TimeoutResult on_timeout(uint32_t slot, uint32_t generation, SimTime now) {
        auto& entry = table_[slot];
        if (!entry || entry->generation != generation || entry->sent_upstream)
            return {};
        ++stats_.timeout_emissions;
        return {true, {emit_upstream(*entry, now)}};
    }

    BroadcastResult on_broadcast_packet(const CanaryPacket& pkt, SimTime /*now*/) {
        if (!pkt.multicast)
            throw ProtocolError("on_broadcast_packet: multicast flag not set");
        const uint32_t slot = slot_of(pkt.id);
        auto& entry = table_[slot];
        if (!entry || entry->id != pkt.id) {
            // Collision victim: no children recorded here. Drop and let the
            // leader's restoration packet rebuild this subtree.
            ++stats_.broadcast_drops;
            return {BroadcastOutcome::Dropped, {}};
        }
        std::vector<SwitchEmit> emits = replicate(pkt, entry->children_bitmap);
        free_slot(slot);
        return {BroadcastOutcome::Replicated, std::move(emits)};
    }

    // Leader-directed repair: replicate the reduced data on the ports named
    // by the packet's children bitmap. No descriptor is consulted.
    std::vector<SwitchEmit> on_restoration_packet(const CanaryPacket& pkt) {
        if (!pkt.multicast)
            throw ProtocolError("on_restoration_packet: multicast flag not set");
        if (pkt.children == 0)
            throw ProtocolError("on_restoration_packet: empty port bitmap");
        ++stats_.restorations_served;
        // copies continue downstream as ordinary broadcast packets
        CanaryPacket down = pkt;
        down.destination = 0;
        down.children = 0;
        down.switch_address = 0;
        return replicate(down, pkt.children);
    }

    size_t occupied_slots() const {
        size_t n = 0;
        for (const auto& e : table_)
            if (e) ++n;
        return n;
    }

    void clear_all_state() { // switch failure: soft state vanishes
        for (auto& e : table_)
            if (e) free_entry(e);
        stats_.descriptor_bytes = 0;
    }

private:
    struct Partition {
        uint32_t first = 0;
        uint32_t slots = 0;
    };

    SwitchEmit emit_upstream(BlockDescriptor& d, SimTime now) {
        CanaryPacket up;
        up.destination = d.leader_destination;
        up.id = d.id;
        up.counter = static_cast<uint16_t>(d.counter_sum);
        up.hosts = d.hosts;
        up.data = make_payload(d.accumulator);
        d.sent_upstream = true;
        d.last_activity = now;
        return {std::move(up), -1};
    }

    // Out-ports come from the shard decomposition of the bitmap, mirroring
    // how the rule tables are keyed in hardware.
    std::vector<SwitchEmit> replicate(const CanaryPacket& pkt, uint64_t bitmap) const {
        const uint32_t width = cfg_.port_count / cfg_.shard_count;
        std::vector<SwitchEmit> emits;
        for (const Shard& s : shard_children_bitmap(bitmap, cfg_.port_count, cfg_.shard_count))
            for (uint32_t port : shard_ports(s, width))
                emits.push_back({pkt, static_cast<int>(port)});
        return emits;
    }

    int64_t descriptor_footprint(const BlockDescriptor& d) const {
        // accumulator plus the fixed per-descriptor fields (id, counters,
        // children bitmap, addresses, timestamp).
        return static_cast<int64_t>(d.accumulator.size()) * 4 + 32;
    }

    void track_alloc(const BlockDescriptor& d) {
        stats_.descriptor_bytes += descriptor_footprint(d);
        if (stats_.descriptor_bytes > stats_.peak_descriptor_bytes)
            stats_.peak_descriptor_bytes = stats_.descriptor_bytes;
    }

    void free_entry(std::optional<BlockDescriptor>& entry) {
        stats_.descriptor_bytes -= descriptor_footprint(*entry);
        entry.reset();
    }

    void free_slot(uint32_t slot) { free_entry(table_[slot]); }

    SwitchConfig cfg_;
    std::vector<std::optional<BlockDescriptor>> table_;
    std::array<Partition, 256> partitions_{};
    SwitchStats stats_;
    uint32_t generation_counter_ = 0;
};

} // namespace canary
