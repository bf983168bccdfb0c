#pragma once

#include <cstdint>
#include <vector>

#include "canary/errors.hpp"
#include "canary/rng.hpp"
#include "canary/units.hpp"

namespace canary {

// Random uniform injection: every congestion host streams fixed-size
// messages to a uniformly drawn peer (never itself) and re-draws the peer on
// a fixed period. Message generation is pulled by the NIC, so each host
// injects at line rate.
class CongestionWorkload {
public:
    CongestionWorkload(std::vector<uint32_t> hosts, uint64_t seed, int64_t flow_bytes,
                       SimTime reshuffle_period)
        : hosts_(std::move(hosts)), flow_bytes_(flow_bytes), period_(reshuffle_period) {
        if (hosts_.size() < 2)
            throw ConfigError("congestion workload needs at least two hosts");
        rngs_.reserve(hosts_.size());
        peers_.assign(hosts_.size(), 0);
        peer_epoch_.assign(hosts_.size(), -1);
        for (size_t i = 0; i < hosts_.size(); ++i)
            rngs_.emplace_back(mix_seed(seed, 0x6267u, hosts_[i]));
    }

    const std::vector<uint32_t>& hosts() const { return hosts_; }
    int64_t flow_bytes() const { return flow_bytes_; }

    // Destination for a message starting now from hosts()[index].
    uint32_t next_peer(size_t index, SimTime now) {
        const int64_t epoch = period_ > 0 ? now / period_ : 0;
        if (peer_epoch_[index] != epoch) {
            peer_epoch_[index] = epoch;
            peers_[index] = draw_peer(index);
        }
        return peers_[index];
    }

private:
    uint32_t draw_peer(size_t index) {
        // uniform over the other hosts; no self-sends
        const uint64_t k = rngs_[index].next_below(hosts_.size() - 1);
        const size_t peer = k < index ? k : k + 1;
        return hosts_[peer];
    }

    std::vector<uint32_t> hosts_;
    int64_t flow_bytes_;
    SimTime period_;
    std::vector<Rng> rngs_;
    std::vector<uint32_t> peers_;
    std::vector<int64_t> peer_epoch_;
};

} // namespace canary
