#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "canary/errors.hpp"
#include "canary/packet.hpp"
#include "canary/rng.hpp"
#include "canary/topology.hpp"

namespace canary {

// One pre-installed reduction tree: member hosts -> their edge switches ->
// one core switch picked as root. Every switch on the tree knows its children
// and parent a priori, so aggregation waits for an exact child count and
// needs no timers.
struct StaticTree {
    uint32_t root_core = 0;
    std::vector<uint64_t> edge_child_ports;  // per edge: member host ports
    std::vector<uint32_t> edge_expected;     // per edge: member host count
    uint64_t root_child_edges = 0;           // bitmap of member edges
    uint32_t root_expected = 0;              // total contributions: all members
    uint32_t member_edges = 0;
};

struct StaticTreeSet {
    std::vector<StaticTree> trees;
    uint32_t tree_of_block(uint32_t block_seq) const {
        return block_seq % static_cast<uint32_t>(trees.size());
    }
};

// Roots are drawn without replacement while cores remain, matching the
// "randomly pick the roots" setup.
inline StaticTreeSet build_static_trees(const Topology& topo,
                                        const std::vector<uint32_t>& hosts,
                                        uint32_t n_trees, uint64_t seed) {
    if (n_trees == 0) throw ConfigError("build_static_trees: n_trees must be >= 1");
    if (hosts.empty()) throw ConfigError("build_static_trees: no member hosts");
    Rng rng(seed);
    std::vector<uint32_t> cores(topo.core_count());
    for (uint32_t c = 0; c < topo.core_count(); ++c) cores[c] = c;

    StaticTreeSet set;
    std::vector<uint32_t> pool = cores;
    for (uint32_t t = 0; t < n_trees; ++t) {
        if (pool.empty()) pool = cores;
        const uint32_t pick = static_cast<uint32_t>(rng.next_below(pool.size()));
        StaticTree tree;
        tree.root_core = pool[pick];
        pool.erase(pool.begin() + pick);
        tree.edge_child_ports.assign(topo.scale().edge_count, 0);
        tree.edge_expected.assign(topo.scale().edge_count, 0);
        for (uint32_t h : hosts) {
            const uint32_t e = topo.edge_of_host(h);
            tree.edge_child_ports[e] |= 1ULL << topo.down_port_of_host(h);
            ++tree.edge_expected[e];
        }
        tree.root_expected = static_cast<uint32_t>(hosts.size());
        for (uint32_t e = 0; e < topo.scale().edge_count; ++e)
            if (tree.edge_expected[e] > 0) {
                tree.root_child_edges |= 1ULL << e;
                ++tree.member_edges;
            }
        set.trees.push_back(std::move(tree));
    }
    return set;
}

struct StaticSwitchStats {
    uint64_t aggregated_packets = 0;
    uint64_t forwarded_up = 0;
    uint64_t broadcasts = 0;
};

// Per-switch aggregation state for the static baseline. Keyed by
// (job, tree, block); descriptors are implicit (children known a priori),
// only accumulators live here.
class StaticSwitchEngine {
public:
    struct Emit {
        uint32_t port;
        bool broadcast; // false: aggregated contribution upward
        uint16_t counter;
        PayloadPtr data;
    };

    // Contribution at an edge or root. expected/parent/children come from the
    // installed tree; returns the forward/broadcast emissions, if complete.
    std::vector<Emit> on_contribution(uint64_t key, uint32_t expected, uint16_t counter,
                                      const PayloadPtr& data, bool at_root,
                                      uint32_t parent_port, uint64_t child_ports) {
        ++stats_.aggregated_packets;
        Acc& acc = open_[key];
        if (acc.sum.empty()) acc.sum.assign(data->size(), 0);
        for (size_t i = 0; i < acc.sum.size(); ++i) acc.sum[i] += (*data)[i];
        acc.count += counter;
        if (acc.count < expected) return {};

        std::vector<Emit> out;
        PayloadPtr result = make_payload(std::move(acc.sum));
        const uint16_t total = static_cast<uint16_t>(acc.count);
        open_.erase(key);
        if (at_root) {
            ++stats_.broadcasts;
            for (uint32_t p = 0; p < 64; ++p)
                if (child_ports & (1ULL << p)) out.push_back({p, true, total, result});
        } else {
            ++stats_.forwarded_up;
            out.push_back({parent_port, false, total, result});
        }
        return out;
    }

    // Broadcast replication at an edge switch toward its member hosts.
    std::vector<Emit> on_broadcast(uint64_t child_ports, const PayloadPtr& data) {
        std::vector<Emit> out;
        for (uint32_t p = 0; p < 64; ++p)
            if (child_ports & (1ULL << p)) out.push_back({p, true, 0, data});
        return out;
    }

    const StaticSwitchStats& stats() const { return stats_; }
    size_t open_blocks() const { return open_.size(); }

private:
    struct Acc {
        Payload sum;
        uint32_t count = 0;
    };
    std::unordered_map<uint64_t, Acc> open_;
    StaticSwitchStats stats_;
};

inline uint64_t static_block_key(uint32_t job, uint32_t tree, uint32_t block_seq) {
    return (static_cast<uint64_t>(job) << 56) | (static_cast<uint64_t>(tree) << 48) |
           block_seq;
}

} // namespace canary
