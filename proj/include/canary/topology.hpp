#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "canary/errors.hpp"
#include "canary/units.hpp"

namespace canary {

// Node numbering: hosts are [0, host_count); switches follow, edge switches
// first, then core switches. A switch's 16-bit protocol address is its index
// within the switch range.
struct TopologyScale {
    uint32_t edge_count = 8;
    uint32_t up_ports = 8;       // uplinks per edge switch == number of cores
    uint32_t hosts_per_edge = 8;
};

// Two-level fat tree: every edge switch connects to every core switch by
// exactly one link. Edge switch ports: [0, hosts_per_edge) go down to hosts,
// [hosts_per_edge, hosts_per_edge + up_ports) go up to cores. Core switch c
// has edge_count ports, port e to edge e.
class Topology {
public:
    Topology(const TopologyScale& scale, int64_t link_bandwidth_bps, SimTime per_hop_latency)
        : scale_(scale), bandwidth_bps_(link_bandwidth_bps), latency_(per_hop_latency) {
        if (scale.edge_count == 0 || scale.up_ports == 0 || scale.hosts_per_edge == 0)
            throw ConfigError("topology: all scale parameters must be positive");
        if (link_bandwidth_bps <= 0 || per_hop_latency < 0)
            throw ConfigError("topology: bad link parameters");
        if (edge_port_count() > 64)
            throw ConfigError("topology: more than 64 ports per edge switch");
    }

    const TopologyScale& scale() const { return scale_; }
    int64_t bandwidth_bps() const { return bandwidth_bps_; }
    SimTime latency() const { return latency_; }

    uint32_t host_count() const { return scale_.edge_count * scale_.hosts_per_edge; }
    uint32_t core_count() const { return scale_.up_ports; }
    uint32_t switch_count() const { return scale_.edge_count + core_count(); }
    uint32_t node_count() const { return host_count() + switch_count(); }

    uint32_t edge_port_count() const { return scale_.hosts_per_edge + scale_.up_ports; }
    uint32_t core_port_count() const { return scale_.edge_count; }

    // Longest host-to-host path in link hops (host-edge-core-edge-host).
    uint32_t diameter_hops() const { return scale_.edge_count > 1 ? 4 : 2; }

    // --- node ids ---
    uint32_t host_node(uint32_t host) const { return host; }
    uint32_t edge_node(uint32_t edge) const { return host_count() + edge; }
    uint32_t core_node(uint32_t core) const { return host_count() + scale_.edge_count + core; }
    bool is_host(uint32_t node) const { return node < host_count(); }
    bool is_edge(uint32_t node) const {
        return node >= host_count() && node < host_count() + scale_.edge_count;
    }
    bool is_core(uint32_t node) const { return node >= host_count() + scale_.edge_count; }
    uint32_t edge_index(uint32_t node) const { return node - host_count(); }
    uint32_t core_index(uint32_t node) const { return node - host_count() - scale_.edge_count; }

    // Switch protocol addresses (16-bit): edge e -> e, core c -> edge_count + c.
    uint16_t switch_address(uint32_t node) const {
        return static_cast<uint16_t>(node - host_count());
    }
    uint32_t node_of_switch_address(uint16_t addr) const { return host_count() + addr; }

    // --- wiring ---
    uint32_t edge_of_host(uint32_t host) const { return host / scale_.hosts_per_edge; }
    uint32_t down_port_of_host(uint32_t host) const { return host % scale_.hosts_per_edge; }
    uint32_t up_port_to_core(uint32_t core) const { return scale_.hosts_per_edge + core; }
    uint32_t core_port_to_edge(uint32_t edge) const { return edge; }

    struct PortPeer {
        uint32_t node;
        uint32_t port;
    };

    // Peer of (node, port); hosts have a single port 0 to their edge switch.
    PortPeer peer(uint32_t node, uint32_t port) const {
        if (is_host(node)) {
            if (port != 0) throw SimError("host has only port 0");
            return {edge_node(edge_of_host(node)), down_port_of_host(node)};
        }
        if (is_edge(node)) {
            const uint32_t e = edge_index(node);
            if (port < scale_.hosts_per_edge) return {e * scale_.hosts_per_edge + port, 0};
            const uint32_t core = port - scale_.hosts_per_edge;
            if (core >= core_count()) throw SimError("bad edge port");
            return {core_node(core), core_port_to_edge(e)};
        }
        const uint32_t c = core_index(node);
        if (port >= scale_.edge_count) throw SimError("bad core port");
        (void)c;
        return {edge_node(port), up_port_to_core(core_index(node))};
    }

    uint32_t port_count_of(uint32_t node) const {
        if (is_host(node)) return 1;
        if (is_edge(node)) return edge_port_count();
        return core_port_count();
    }

    std::string node_name(uint32_t node) const {
        if (is_host(node)) return "h" + std::to_string(node);
        if (is_edge(node)) return "e" + std::to_string(edge_index(node));
        return "c" + std::to_string(core_index(node));
    }

private:
    TopologyScale scale_;
    int64_t bandwidth_bps_;
    SimTime latency_;
};

inline Topology build_fat_tree(const TopologyScale& scale, int64_t bandwidth_bps,
                               SimTime per_hop_latency) {
    return Topology(scale, bandwidth_bps, per_hop_latency);
}

} // namespace canary
