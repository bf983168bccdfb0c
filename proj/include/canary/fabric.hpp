#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "canary/event_queue.hpp"
#include "canary/hash.hpp"
#include "canary/rng.hpp"
#include "canary/sim_packet.hpp"
#include "canary/topology.hpp"

namespace canary {

enum class RoutingPolicy { Adaptive, StaticHash };

struct FabricConfig {
    int64_t queue_capacity_bytes = 1024 * 1024; // per switch output port
    // Best-effort background only occupies a slice of each queue, the way
    // shared-buffer switches carve space per class. Keeps compute-traffic
    // queueing delay bounded while background still saturates links.
    int64_t bg_admission_bytes = 128 * 1024;
    RoutingPolicy policy = RoutingPolicy::Adaptive;
    double drop_rate = 0.0;         // i.i.d. Bernoulli loss per link traversal
    double noise_probability = 0.0; // host send delay injection
    SimTime noise_delay = microseconds(1.0);
    uint64_t drop_seed = 1;
    uint64_t noise_seed = 2;
};

struct LinkStats {
    int64_t offered_bytes = 0; // presented to the output port
    int64_t sent_bytes = 0;    // clocked onto the wire
    int64_t sent_frames = 0;
    int64_t tail_drop_bytes = 0;
    int64_t tail_drops = 0;
    int64_t rng_drops = 0;     // injected Bernoulli losses
    int64_t cleared_bytes = 0; // queue wiped by a switch failure
    int64_t max_queue_bytes = 0;
    // offered split: 0 canary reduce/bypass, 1 canary broadcast/restoration,
    // 2 control, 3 static/ring data, 4 background
    int64_t offered_by_class[5] = {0, 0, 0, 0, 0};
};

inline int traffic_class(const SimPacket& p) {
    switch (p.kind) {
    case PacketKind::Canary: return p.canary.multicast ? 1 : 0;
    case PacketKind::Control: return 2;
    case PacketKind::StaticData:
    case PacketKind::StaticBcast:
    case PacketKind::RingData: return 3;
    case PacketKind::Background: return 4;
    }
    return 4;
}

struct FabricCounters {
    int64_t injected_drops = 0;
    int64_t tail_drops = 0;
    int64_t tail_drops_job = 0; // tail drops of job traffic (any algorithm)
    int64_t pushed_out = 0;     // background frames evicted for job frames
    int64_t dead_node_drops = 0;
    int64_t routing_violations = 0; // adaptive rule led to a worse port (must stay 0)
    SimTime first_tail_drop_at = -1;
    uint32_t first_tail_drop_link = 0;
};

// Output ports, queues, serialization timing, up/down routing and loss
// injection for the two-level fat tree. One instance per simulation run; the
// simulation interprets deliveries, the fabric moves bytes.
class Fabric {
public:
    Fabric(const Topology& topo, const FabricConfig& cfg, EventQueue& events)
        : topo_(topo), cfg_(cfg), events_(events), drop_rng_(cfg.drop_seed),
          noise_rng_(cfg.noise_seed) {
        ports_.resize(topo.node_count());
        node_alive_.assign(topo.node_count(), true);
        uint32_t link_id = 0;
        for (uint32_t n = 0; n < topo.node_count(); ++n) {
            const uint32_t pc = topo.port_count_of(n);
            ports_[n].resize(pc);
            for (uint32_t p = 0; p < pc; ++p) {
                auto peer = topo.peer(n, p);
                ports_[n][p].peer_node = peer.node;
                ports_[n][p].peer_port = peer.port;
                ports_[n][p].link_id = link_id++;
            }
        }
        link_stats_.resize(link_id);
    }

    const Topology& topology() const { return topo_; }
    const FabricConfig& config() const { return cfg_; }
    const std::vector<LinkStats>& link_stats() const { return link_stats_; }
    const FabricCounters& counters() const { return counters_; }
    bool node_alive(uint32_t node) const { return node_alive_[node]; }

    std::function<void(uint32_t host)> on_host_nic_idle;
    std::function<void(uint32_t host, const PacketPtr&)> on_host_packet_departed;

    std::string link_name(uint32_t node, uint32_t port) const {
        const auto& op = ports_[node][port];
        return topo_.node_name(node) + "->" + topo_.node_name(op.peer_node);
    }

    // All directed links, in link-id order.
    std::vector<std::string> link_names() const {
        std::vector<std::string> names(link_stats_.size());
        for (uint32_t n = 0; n < topo_.node_count(); ++n)
            for (uint32_t p = 0; p < ports_[n].size(); ++p)
                names[ports_[n][p].link_id] = link_name(n, p);
        return names;
    }

    int64_t wire_frame_bytes(const PacketPtr& pkt) const {
        return pkt->wire_bytes + kFramingOverheadBytes;
    }

    // Leaders keep streaming their own contributions while serving their
    // blocks; result traffic must not sit behind that bulk backlog, so host
    // NICs give protocol packets a priority lane. Switch ports stay FIFO.
    static bool host_priority(const SimPacket& p) {
        return p.kind == PacketKind::Control ||
               (p.kind == PacketKind::Canary && p.canary.multicast);
    }

    // Hand a packet to an output port. Switch ports tail-drop on overflow;
    // host NICs queue in host memory (unbounded application backlog).
    void transmit(uint32_t node, uint32_t port, PacketPtr pkt, SimTime now) {
        if (!node_alive_[node]) return;
        OutPort& op = ports_[node][port];
        const int64_t fb = wire_frame_bytes(pkt);
        LinkStats& ls = link_stats_[op.link_id];
        ls.offered_bytes += fb;
        ls.offered_by_class[traffic_class(*pkt)] += fb;
        const int64_t admission = pkt->job < 0 && !topo_.is_host(node)
                                      ? std::min(cfg_.bg_admission_bytes,
                                                 cfg_.queue_capacity_bytes)
                                      : cfg_.queue_capacity_bytes;
        if (!topo_.is_host(node) && op.queued_bytes + fb > admission) {
            // Allreduce frames may push out queued best-effort background;
            // they still tail-drop when the job itself overfills the queue.
            if (pkt->job >= 0) push_out_background(op, ls, fb);
            if (op.queued_bytes + fb > cfg_.queue_capacity_bytes) {
                ls.tail_drop_bytes += fb;
                ++ls.tail_drops;
                ++counters_.tail_drops;
                if (pkt->job >= 0) ++counters_.tail_drops_job;
                if (counters_.first_tail_drop_at < 0) {
                    counters_.first_tail_drop_at = now;
                    counters_.first_tail_drop_link = op.link_id;
                }
                return;
            }
        }
        if (topo_.is_host(node) && host_priority(*pkt)) op.hi.push_back(std::move(pkt));
        else op.lo.push_back(std::move(pkt));
        op.queued_bytes += fb;
        if (op.queued_bytes > ls.max_queue_bytes) ls.max_queue_bytes = op.queued_bytes;
        if (!op.busy) begin_service(node, port, now, /*noise_checked=*/false);
    }

    // Aggregation traffic routes by destination alone so that packets of one
    // block converge and merge; everything else spreads per flow, the way
    // ECMP hashes connections.
    static uint32_t flow_salt_of(const SimPacket& pkt) {
        return pkt.kind == PacketKind::Canary ? 0 : pkt.src_host + 1;
    }

    // Pick the out-port toward dst_node and transmit.
    void route_and_transmit(uint32_t node, PacketPtr pkt, SimTime now) {
        const int port = route_port(node, pkt->dst_node, flow_salt_of(*pkt));
        if (port < 0) {
            ++counters_.dead_node_drops; // destination unreachable (failed switch)
            return;
        }
        transmit(node, static_cast<uint32_t>(port), std::move(pkt), now);
    }

    // Routing decision toward a node, or -1 if no live port exists.
    int route_port(uint32_t node, uint32_t dst_node, uint32_t flow_salt = 0) {
        if (topo_.is_host(node)) return 0;
        if (topo_.is_edge(node)) {
            const uint32_t e = topo_.edge_index(node);
            uint32_t target_edge;
            if (topo_.is_host(dst_node)) {
                target_edge = topo_.edge_of_host(dst_node);
                if (target_edge == e)
                    return static_cast<int>(topo_.down_port_of_host(dst_node));
            } else if (topo_.is_core(dst_node)) {
                const uint32_t up = topo_.up_port_to_core(topo_.core_index(dst_node));
                return port_alive(node, up) ? static_cast<int>(up) : -1;
            } else {
                target_edge = topo_.edge_index(dst_node);
                if (target_edge == e) return -1; // addressed to this switch
            }
            return select_up_port(node, dst_node, flow_salt);
        }
        // core switch: single deterministic down-port
        uint32_t edge;
        if (topo_.is_host(dst_node)) edge = topo_.edge_of_host(dst_node);
        else if (topo_.is_edge(dst_node)) edge = topo_.edge_index(dst_node);
        else return -1;
        const uint32_t p = topo_.core_port_to_edge(edge);
        return port_alive(node, p) ? static_cast<int>(p) : -1;
    }

    // Up-port choice. Adaptive: the default (hash of destination) port unless
    // it sits above 50% occupancy, then the least-loaded live up-port, ties to
    // the lowest port id. StaticHash: always the default port.
    int select_up_port(uint32_t node, uint32_t dst_node, uint32_t flow_salt = 0) {
        const uint32_t first_up = topo_.scale().hosts_per_edge;
        const uint32_t n_up = topo_.scale().up_ports;
        const int def = default_up_port(node, dst_node, flow_salt);
        if (def < 0) return -1;
        const OutPort& dport = ports_[node][def];
        if (cfg_.policy == RoutingPolicy::StaticHash)
            return def;
        if (dport.queued_bytes * 2 <= cfg_.queue_capacity_bytes)
            return def;
        int best = -1;
        int64_t best_bytes = 0;
        for (uint32_t p = first_up; p < first_up + n_up; ++p) {
            if (!port_alive(node, p)) continue;
            const int64_t qb = ports_[node][p].queued_bytes;
            if (best < 0 || qb < best_bytes) {
                best = static_cast<int>(p);
                best_bytes = qb;
            }
        }
        // Sanity: never keep a >50% default when a strictly emptier port exists.
        if (best != def && best >= 0 && best_bytes >= dport.queued_bytes)
            best = def;
        if (best >= 0 && best != def && ports_[node][best].queued_bytes > dport.queued_bytes)
            ++counters_.routing_violations;
        return best;
    }

    int64_t queued_bytes(uint32_t node, uint32_t port) const {
        return ports_[node][port].queued_bytes;
    }

    // Testing hook: pretend bytes are queued without moving packets.
    void preload_queue(uint32_t node, uint32_t port, int64_t bytes) {
        ports_[node][port].queued_bytes += bytes;
    }

    void handle_port_free(uint32_t node, uint32_t port, SimTime now) {
        if (!node_alive_[node]) return; // failed mid-serialization
        OutPort& op = ports_[node][port];
        if (!op.in_service) return;
        PacketPtr pkt = std::move(op.in_service);
        op.in_service = nullptr;
        const int64_t fb = wire_frame_bytes(pkt);
        op.queued_bytes -= fb;
        op.busy = false;
        LinkStats& ls = link_stats_[op.link_id];
        ls.sent_bytes += fb;
        ++ls.sent_frames;

        // Loss injection happens on the wire, one Bernoulli trial per traversal.
        bool lost = false;
        if (cfg_.drop_rate > 0.0 && drop_rng_.next_bool(cfg_.drop_rate)) {
            lost = true;
            ++ls.rng_drops;
            ++counters_.injected_drops;
        }
        if (topo_.is_host(node) && on_host_packet_departed)
            on_host_packet_departed(node, pkt);
        if (!lost)
            events_.push(now + topo_.latency(), EvKind::Deliver, op.peer_node, op.peer_port,
                         0, std::move(pkt));
        if (!op.hi.empty() || !op.lo.empty())
            begin_service(node, port, now, /*noise_checked=*/false);
        else if (topo_.is_host(node) && on_host_nic_idle)
            on_host_nic_idle(node);
    }

    void handle_start_service(uint32_t node, uint32_t port, SimTime now) {
        if (!node_alive_[node]) return;
        begin_service(node, port, now, /*noise_checked=*/true);
    }

    // Deliveries to dead switches vanish (the failure discards in-transit
    // packets); callers should check before dispatching.
    bool absorb_if_dead(uint32_t node) {
        if (node_alive_[node]) return false;
        ++counters_.dead_node_drops;
        return true;
    }

    // Switch failure: wipe queues, take adjacent links down in both
    // directions so surviving switches route around the hole.
    void fail_switch(uint32_t node, SimTime /*now*/) {
        node_alive_[node] = false;
        for (uint32_t p = 0; p < ports_[node].size(); ++p) {
            OutPort& op = ports_[node][p];
            LinkStats& ls = link_stats_[op.link_id];
            ls.cleared_bytes += op.queued_bytes;
            op.hi.clear();
            op.lo.clear();
            op.in_service = nullptr;
            op.queued_bytes = 0;
            op.busy = true; // never serves again
        }
    }

    size_t link_count() const { return link_stats_.size(); }

    // Flow conservation residue: what is still sitting in the queue.
    int64_t residual_bytes(uint32_t link_id) const {
        for (uint32_t n = 0; n < topo_.node_count(); ++n)
            for (const auto& op : ports_[n])
                if (op.link_id == link_id) return op.queued_bytes;
        return 0;
    }

private:
    struct OutPort {
        std::deque<PacketPtr> hi; // host protocol lane; switch ports never use it
        std::deque<PacketPtr> lo;
        PacketPtr in_service;     // removed from its lane while serializing
        int64_t queued_bytes = 0; // waiting plus in-service
        bool busy = false;
        uint32_t peer_node = 0;
        uint32_t peer_port = 0;
        uint32_t link_id = 0;
    };

    bool port_alive(uint32_t node, uint32_t port) const {
        return node_alive_[ports_[node][port].peer_node];
    }

    // Evict queued background frames, newest first, until `needed` fits.
    void push_out_background(OutPort& op, LinkStats& ls, int64_t needed) {
        for (auto it = op.lo.rbegin();
             it != op.lo.rend() && op.queued_bytes + needed > cfg_.queue_capacity_bytes;) {
            if ((*it)->job >= 0) {
                ++it;
                continue;
            }
            const int64_t fb = wire_frame_bytes(*it);
            op.queued_bytes -= fb;
            ls.tail_drop_bytes += fb;
            ++ls.tail_drops;
            ++counters_.tail_drops;
            ++counters_.pushed_out;
            it = decltype(it)(op.lo.erase(std::next(it).base()));
        }
    }

    // Function of the destination only, identical at every switch: traffic
    // toward one destination converges on one core, so in-flight aggregates
    // for a block meet and merge on their way to the root.
    int default_up_port(uint32_t node, uint32_t dst_node, uint32_t flow_salt) {
        const uint32_t first_up = topo_.scale().hosts_per_edge;
        const uint32_t n_up = topo_.scale().up_ports;
        const uint32_t h = mix_id(dst_node, 0x706f7274u + flow_salt);
        for (uint32_t k = 0; k < n_up; ++k) {
            const uint32_t p = first_up + (h + k) % n_up;
            if (port_alive(node, p)) return static_cast<int>(p);
        }
        return -1;
    }

    void begin_service(uint32_t node, uint32_t port, SimTime now, bool noise_checked) {
        OutPort& op = ports_[node][port];
        op.busy = true;
        if (!op.in_service) {
            auto& lane = op.hi.empty() ? op.lo : op.hi;
            op.in_service = std::move(lane.front());
            lane.pop_front();
        }
        const PacketPtr& head = op.in_service;
        if (!noise_checked && topo_.is_host(node) && head->noise_eligible &&
            cfg_.noise_probability > 0.0 && noise_rng_.next_bool(cfg_.noise_probability)) {
            events_.push(now + cfg_.noise_delay, EvKind::StartService, node, port);
            return;
        }
        const SimTime ser = serialization_time(wire_frame_bytes(head), topo_.bandwidth_bps());
        events_.push(now + ser, EvKind::PortFree, node, port);
    }

    const Topology& topo_;
    FabricConfig cfg_;
    EventQueue& events_;
    std::vector<std::vector<OutPort>> ports_;
    std::vector<bool> node_alive_;
    std::vector<LinkStats> link_stats_;
    FabricCounters counters_;
    Rng drop_rng_;
    Rng noise_rng_;
};

} // namespace canary
