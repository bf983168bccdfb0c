#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "canary/event_queue.hpp"
#include "canary/fabric.hpp"
#include "canary/topology.hpp"
#include "canary/workload.hpp"

using namespace canary;

namespace {

PacketPtr raw_packet(uint32_t src, uint32_t dst, int64_t wire_bytes) {
    auto p = std::make_shared<SimPacket>();
    p->kind = PacketKind::Background;
    p->src_host = src;
    p->dst_node = dst;
    p->wire_bytes = wire_bytes;
    return p;
}

struct Harness {
    Topology topo;
    EventQueue events;
    Fabric fabric;

    Harness(const TopologyScale& scale, FabricConfig cfg = {},
            int64_t bw = 100LL * 1000 * 1000 * 1000, SimTime lat = nanoseconds(300))
        : topo(scale, bw, lat), fabric(topo, cfg, events) {}

    // run the wire machinery only; returns deliveries as (time, node, packet)
    struct Delivery {
        SimTime t;
        uint32_t node;
        PacketPtr pkt;
    };
    std::vector<Delivery> run(bool forward = true) {
        std::vector<Delivery> out;
        while (!events.empty()) {
            const Event ev = events.pop();
            switch (ev.kind) {
            case EvKind::PortFree: fabric.handle_port_free(ev.a, ev.b, ev.t); break;
            case EvKind::StartService: fabric.handle_start_service(ev.a, ev.b, ev.t); break;
            case EvKind::Deliver:
                if (fabric.absorb_if_dead(ev.a)) break;
                if (topo.is_host(ev.a) || !forward) out.push_back({ev.t, ev.a, ev.pkt});
                else fabric.route_and_transmit(ev.a, ev.pkt, ev.t);
                break;
            default: break;
            }
        }
        return out;
    }
};

} // namespace

TEST_CASE("fat tree construction at the reference and desk scales") {
    SECTION("32x32x32: 1024 hosts, 64 switches, 64-port edges, 32-port cores") {
        const Topology t({32, 32, 32}, 100e9, nanoseconds(300));
        CHECK(t.host_count() == 1024);
        CHECK(t.switch_count() == 64);
        CHECK(t.core_count() == 32);
        CHECK(t.edge_port_count() == 64);
        CHECK(t.core_port_count() == 32);
        CHECK(t.diameter_hops() == 4);
    }
    SECTION("8x8x8 desk scale: 64 hosts, 16 switches") {
        const Topology t({8, 8, 8}, 100e9, nanoseconds(300));
        CHECK(t.host_count() == 64);
        CHECK(t.switch_count() == 16);
    }
    SECTION("1x1x2 degenerate: two hosts, one edge, one core") {
        const Topology t({1, 1, 2}, 100e9, nanoseconds(300));
        CHECK(t.host_count() == 2);
        CHECK(t.switch_count() == 2);
        CHECK(t.diameter_hops() == 2);
    }
}

TEST_CASE("every edge-core pair is connected by exactly one link") {
    const Topology t({8, 8, 8}, 100e9, nanoseconds(300));
    std::set<std::pair<uint32_t, uint32_t>> pairs;
    for (uint32_t e = 0; e < 8; ++e)
        for (uint32_t up = 0; up < 8; ++up) {
            const auto peer = t.peer(t.edge_node(e), t.up_port_to_core(up));
            REQUIRE(t.is_core(peer.node));
            pairs.insert({e, t.core_index(peer.node)});
            // and the reverse port points back
            const auto back = t.peer(peer.node, peer.port);
            CHECK(back.node == t.edge_node(e));
        }
    CHECK(pairs.size() == 64);
}

TEST_CASE("one packet over one hop: latency plus serialization") {
    // 147-byte packet + 38 framing bytes at 100 Gbps: 14.8 ns, plus 300 ns.
    Harness h({1, 1, 2});
    h.fabric.transmit(0, 0, raw_packet(0, 1, 147), 0);
    const auto deliveries = h.run();
    // host0 -> edge -> host1; both hosts share the edge so the path is 2 hops
    REQUIRE(deliveries.size() == 1);
    CHECK(deliveries[0].node == 1);
    CHECK(deliveries[0].pkt->dst_node == 1);
}

TEST_CASE("hop timing matches the serialization model") {
    Harness h({1, 1, 2});
    h.fabric.transmit(0, 0, raw_packet(0, 1, 147), 0);
    std::vector<std::pair<SimTime, uint32_t>> arrivals;
    while (!h.events.empty()) {
        const Event ev = h.events.pop();
        if (ev.kind == EvKind::PortFree) h.fabric.handle_port_free(ev.a, ev.b, ev.t);
        else if (ev.kind == EvKind::Deliver) {
            arrivals.push_back({ev.t, ev.a});
            if (!h.topo.is_host(ev.a)) h.fabric.route_and_transmit(ev.a, ev.pkt, ev.t);
        }
    }
    REQUIRE(arrivals.size() == 2);
    const SimTime ser = serialization_time(147 + 38, 100LL * 1000 * 1000 * 1000);
    CHECK(ser == 14800); // (147+38)*8 bits / 100 Gbps = 14.8 ns
    CHECK(arrivals[0].first == nanoseconds(300) + ser);          // at the edge
    CHECK(arrivals[1].first == 2 * (nanoseconds(300) + ser));    // at host 1
}

TEST_CASE("empty event list yields an empty trace") {
    Harness h({1, 1, 2});
    CHECK(h.run().empty());
    for (const auto& l : h.fabric.link_stats()) CHECK(l.sent_bytes == 0);
}

TEST_CASE("FIFO: the second packet to a port waits out the first serialization") {
    Harness h({1, 1, 2});
    h.fabric.transmit(0, 0, raw_packet(0, 1, 962), 0);
    h.fabric.transmit(0, 0, raw_packet(0, 1, 962), 0);
    std::vector<SimTime> freed;
    while (!h.events.empty()) {
        const Event ev = h.events.pop();
        if (ev.kind == EvKind::PortFree) {
            freed.push_back(ev.t);
            h.fabric.handle_port_free(ev.a, ev.b, ev.t);
        }
    }
    const SimTime ser = serialization_time(1000, 100LL * 1000 * 1000 * 1000);
    REQUIRE(freed.size() == 2);
    CHECK(freed[0] == ser);
    CHECK(freed[1] == 2 * ser);
}

TEST_CASE("adaptive up-port selection") {
    FabricConfig cfg;
    cfg.queue_capacity_bytes = 1000;
    Harness h({2, 4, 2}, cfg);
    const uint32_t edge = h.topo.edge_node(0);
    const uint32_t dst = 2; // host on the other edge
    const int def = h.fabric.route_port(edge, dst);
    REQUIRE(def >= 2); // an up port: ports 0,1 go down

    SECTION("default port below 50% occupancy is kept") {
        h.fabric.preload_queue(edge, def, 499);
        CHECK(h.fabric.route_port(edge, dst) == def);
    }
    SECTION("above 50% the least-loaded up-port wins") {
        h.fabric.preload_queue(edge, def, 501);
        int alt = -1;
        for (uint32_t p = 2; p < 6; ++p)
            if (static_cast<int>(p) != def && h.fabric.queued_bytes(edge, p) == 0) {
                alt = static_cast<int>(p);
                break;
            }
        // load every other alternative a little so the emptiest is unique
        for (uint32_t p = 2; p < 6; ++p)
            if (static_cast<int>(p) != def && static_cast<int>(p) != alt)
                h.fabric.preload_queue(edge, p, 300);
        CHECK(h.fabric.route_port(edge, dst) == alt);
    }
    SECTION("ties break to the lowest port id") {
        h.fabric.preload_queue(edge, def, 800);
        for (uint32_t p = 2; p < 6; ++p)
            if (static_cast<int>(p) != def) h.fabric.preload_queue(edge, p, 200);
        CHECK(h.fabric.route_port(edge, dst) == 2);
        CHECK(h.fabric.counters().routing_violations == 0);
    }
    SECTION("static-hash policy never deviates") {
        FabricConfig scfg;
        scfg.policy = RoutingPolicy::StaticHash;
        scfg.queue_capacity_bytes = 1000;
        Harness hs({2, 4, 2}, scfg);
        const int sdef = hs.fabric.route_port(hs.topo.edge_node(0), dst);
        hs.fabric.preload_queue(hs.topo.edge_node(0), sdef, 999);
        CHECK(hs.fabric.route_port(hs.topo.edge_node(0), dst) == sdef);
    }
}

TEST_CASE("tail drop on queue overflow, hosts queue without limit") {
    FabricConfig cfg;
    cfg.queue_capacity_bytes = 2000;
    Harness h({1, 1, 2}, cfg);
    const uint32_t edge = h.topo.edge_node(0);
    // 3 x 962+38 = 3000 bytes offered to a 2000-byte switch port
    for (int i = 0; i < 3; ++i) h.fabric.transmit(edge, 0, raw_packet(0, 0, 962), 0);
    CHECK(h.fabric.counters().tail_drops == 1);
    // host NICs are application backlog: no drops however much is queued
    for (int i = 0; i < 50; ++i) h.fabric.transmit(0, 0, raw_packet(0, 1, 962), 0);
    CHECK(h.fabric.counters().tail_drops == 1);
}

TEST_CASE("flow conservation per link: offered equals sent plus dropped plus queued") {
    FabricConfig cfg;
    cfg.queue_capacity_bytes = 5000;
    Harness h({2, 2, 4}, cfg);
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        const uint32_t src = static_cast<uint32_t>(rng.next_below(8));
        uint32_t dst = static_cast<uint32_t>(rng.next_below(8));
        if (dst == src) dst = (dst + 1) % 8;
        h.fabric.transmit(src, 0, raw_packet(src, dst, 200 + rng.next_below(1000)), 0);
    }
    h.run();
    const auto& links = h.fabric.link_stats();
    for (uint32_t l = 0; l < links.size(); ++l) {
        const auto& s = links[l];
        CHECK(s.offered_bytes ==
              s.sent_bytes + s.tail_drop_bytes + h.fabric.residual_bytes(l) +
                  s.cleared_bytes);
    }
}

TEST_CASE("switch failure takes adjacent links down and clears queues") {
    Harness h({2, 2, 2});
    const uint32_t core0 = h.topo.core_node(0);
    h.fabric.fail_switch(core0, 0);
    CHECK_FALSE(h.fabric.node_alive(core0));
    // both edges must now route up through core 1 only
    for (uint32_t e = 0; e < 2; ++e) {
        const int p = h.fabric.route_port(h.topo.edge_node(e), /*host*/ e == 0 ? 2 : 0);
        CHECK(p == static_cast<int>(h.topo.up_port_to_core(1)));
    }
    // deliveries addressed to the dead switch vanish
    CHECK(h.fabric.absorb_if_dead(core0));
}

TEST_CASE("injected loss drops roughly drop_rate of traversals") {
    FabricConfig cfg;
    cfg.drop_rate = 0.1;
    cfg.drop_seed = 7;
    Harness h({1, 1, 2}, cfg);
    for (int i = 0; i < 2000; ++i) h.fabric.transmit(0, 0, raw_packet(0, 1, 100), 0);
    const auto deliveries = h.run();
    // two traversals per packet, each surviving with p = 0.9
    const double survived = static_cast<double>(deliveries.size()) / 2000.0;
    CHECK(survived > 0.75);
    CHECK(survived < 0.87); // 0.81 expected
    CHECK(h.fabric.counters().injected_drops > 300);

    SECTION("drop rate zero is byte-identical to no injection") {
        FabricConfig c0;
        c0.drop_rate = 0.0;
        Harness a({1, 1, 2}, c0), b({1, 1, 2}, FabricConfig{});
        for (int i = 0; i < 50; ++i) {
            a.fabric.transmit(0, 0, raw_packet(0, 1, 100), 0);
            b.fabric.transmit(0, 0, raw_packet(0, 1, 100), 0);
        }
        const auto da = a.run(), db = b.run();
        REQUIRE(da.size() == db.size());
        for (size_t i = 0; i < da.size(); ++i) CHECK(da[i].t == db[i].t);
    }
}

TEST_CASE("congestion workload draws uniform peers and never self-sends") {
    SECTION("two hosts always pair up") {
        CongestionWorkload w({3, 9}, 1, 1024, microseconds(10));
        CHECK(w.next_peer(0, 0) == 9);
        CHECK(w.next_peer(1, 0) == 3);
    }
    SECTION("fixed seed reproduces the peer sequence") {
        CongestionWorkload a({0, 1, 2, 3, 4, 5, 6, 7}, 99, 1024, microseconds(10));
        CongestionWorkload b({0, 1, 2, 3, 4, 5, 6, 7}, 99, 1024, microseconds(10));
        for (int epoch = 0; epoch < 50; ++epoch)
            for (size_t i = 0; i < 8; ++i)
                CHECK(a.next_peer(i, epoch * microseconds(10)) ==
                      b.next_peer(i, epoch * microseconds(10)));
    }
    SECTION("peer histogram is uniform within 3 sigma") {
        std::vector<uint32_t> hosts(16);
        for (uint32_t i = 0; i < 16; ++i) hosts[i] = i;
        CongestionWorkload w(hosts, 5, 1024, microseconds(1));
        std::map<uint32_t, int> histogram;
        const int draws = 30000;
        for (int e = 0; e < draws; ++e) ++histogram[w.next_peer(3, e * microseconds(1))];
        CHECK(histogram.count(3) == 0); // derangement: no self-send
        const double mean = static_cast<double>(draws) / 15.0;
        const double sigma = std::sqrt(mean * (1.0 - 1.0 / 15.0));
        for (const auto& [peer, count] : histogram) {
            INFO("peer " << peer);
            CHECK(std::abs(count - mean) < 3.0 * sigma + 1);
        }
    }
}
