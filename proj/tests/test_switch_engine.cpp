#include <catch2/catch_amalgamated.hpp>

#include "canary/rng.hpp"
#include "canary/switch_engine.hpp"

using namespace canary;

namespace {

SwitchConfig small_config() {
    SwitchConfig cfg;
    cfg.address = 7;
    cfg.port_count = 16;
    cfg.shard_count = 2;
    cfg.table_size = 64;
    cfg.timeout = microseconds(1.0);
    return cfg;
}

CanaryPacket reduce_packet(uint32_t id, uint16_t counter, uint16_t hosts,
                           std::initializer_list<uint32_t> data, uint32_t dest = 42) {
    CanaryPacket p;
    p.destination = dest;
    p.id = id;
    p.counter = counter;
    p.hosts = hosts;
    p.data = make_payload(Payload(data));
    return p;
}

} // namespace

TEST_CASE("first packet stores a descriptor with only the ingress port set") {
    CanarySwitch sw(small_config());
    const auto res = sw.on_reduce_packet(reduce_packet(5, 1, 8, {1, 2}), 3, 100);
    REQUIRE(res.outcome == ReduceOutcome::StoreNew);
    REQUIRE(res.emits.empty());
    const auto& d = sw.descriptor_at(res.slot);
    REQUIRE(d.has_value());
    CHECK(d->children_bitmap == (1ULL << 3));
    CHECK(d->counter_sum == 1);
    CHECK(d->accumulator == Payload{1, 2});
    CHECK(d->leader_destination == 42);
    CHECK_FALSE(d->sent_upstream);
}

TEST_CASE("same id aggregates: counters add, children accumulate") {
    CanarySwitch sw(small_config());
    sw.on_reduce_packet(reduce_packet(5, 1, 8, {1, 2}), 3, 100);
    const auto res = sw.on_reduce_packet(reduce_packet(5, 1, 8, {10, 20}), 6, 200);
    REQUIRE(res.outcome == ReduceOutcome::Aggregate);
    const auto& d = sw.descriptor_at(res.slot);
    CHECK(d->counter_sum == 2); // two contributions reduced into one packet
    CHECK(d->accumulator == Payload{11, 22});
    CHECK(d->children_bitmap == ((1ULL << 3) | (1ULL << 6)));
}

TEST_CASE("aggregation wraps element-wise modulo 2^32") {
    CanarySwitch sw(small_config());
    sw.on_reduce_packet(reduce_packet(5, 1, 8, {0xFFFFFFFFu, 1}), 0, 0);
    const auto res = sw.on_reduce_packet(reduce_packet(5, 1, 8, {2, 3}), 1, 0);
    CHECK(sw.descriptor_at(res.slot)->accumulator == Payload{1, 4});
}

TEST_CASE("reaching the expected host count emits upstream immediately") {
    CanarySwitch sw(small_config());
    sw.on_reduce_packet(reduce_packet(9, 7, 8, {100}), 1, 50);
    const auto res = sw.on_reduce_packet(reduce_packet(9, 1, 8, {11}), 2, 60);
    REQUIRE(res.outcome == ReduceOutcome::EarlyComplete);
    REQUIRE(res.emits.size() == 1);
    const CanaryPacket& up = res.emits[0].pkt;
    CHECK(res.emits[0].out_port == -1); // routed toward the leader
    CHECK(up.counter == 8);
    CHECK(up.hosts == 8);
    CHECK(*up.data == Payload{111});
    CHECK(sw.descriptor_at(res.slot)->sent_upstream);

    // descriptor is retained for broadcast and straggler detection
    REQUIRE(sw.occupied_slots() == 1);
}

TEST_CASE("timeout emits the partial aggregate and keeps the descriptor") {
    CanarySwitch sw(small_config());
    const auto r1 = sw.on_reduce_packet(reduce_packet(9, 2, 8, {5}), 1, 50);
    const uint32_t gen = sw.descriptor_at(r1.slot)->generation;
    const auto res = sw.on_timeout(r1.slot, gen, 50 + sw.config().timeout);
    REQUIRE(res.fired);
    REQUIRE(res.emits.size() == 1);
    CHECK(res.emits[0].pkt.counter == 2);
    REQUIRE(sw.occupied_slots() == 1);

    SECTION("firing again is a no-op") {
        REQUIRE_FALSE(sw.on_timeout(r1.slot, gen, 99999).fired);
    }
    SECTION("stale generations are ignored") {
        REQUIRE_FALSE(sw.on_timeout(r1.slot, gen + 1, 99999).fired);
    }
}

TEST_CASE("straggler after emission is forwarded unchanged and joins the children") {
    CanarySwitch sw(small_config());
    const auto r1 = sw.on_reduce_packet(reduce_packet(9, 1, 8, {5}), 1, 50);
    sw.on_timeout(r1.slot, sw.descriptor_at(r1.slot)->generation, microseconds(2));
    const CanaryPacket late = reduce_packet(9, 1, 8, {7});
    const auto res = sw.on_reduce_packet(late, 4, microseconds(3));
    REQUIRE(res.outcome == ReduceOutcome::Straggler);
    REQUIRE(res.emits.size() == 1);
    CHECK(res.emits[0].pkt == late); // forwarded unchanged
    CHECK(res.emits[0].out_port == -1);
    // the straggler's port still joins the broadcast set
    CHECK(sw.descriptor_at(r1.slot)->children_bitmap == ((1ULL << 1) | (1ULL << 4)));
    // but its data was not aggregated here
    CHECK(sw.descriptor_at(r1.slot)->accumulator == Payload{5});
    CHECK(sw.stats().stragglers == 1);
}

TEST_CASE("colliding id bypasses to the leader with switch address and port") {
    SwitchConfig cfg = small_config();
    cfg.table_size = 1; // every id collides
    CanarySwitch sw(cfg);
    sw.on_reduce_packet(reduce_packet(1, 1, 8, {5}, 42), 1, 50);
    const auto res = sw.on_reduce_packet(reduce_packet(2, 1, 8, {7}, 42), 9, 60);
    REQUIRE(res.outcome == ReduceOutcome::Collision);
    REQUIRE(res.emits.size() == 1);
    const CanaryPacket& fwd = res.emits[0].pkt;
    CHECK(fwd.bypass);
    CHECK_FALSE(fwd.multicast);
    CHECK(fwd.switch_address == 7);
    CHECK(fwd.children == 9); // ingress port id rides in the children field
    CHECK(fwd.id == 2);
    CHECK(*fwd.data == Payload{7});
    CHECK(fwd.destination == 42);
    CHECK(sw.stats().collisions == 1);
}

TEST_CASE("broadcast replicates on the recorded children and frees the slot") {
    CanarySwitch sw(small_config());
    sw.on_reduce_packet(reduce_packet(9, 1, 8, {5}), 1, 0);
    sw.on_reduce_packet(reduce_packet(9, 1, 8, {6}), 4, 0);

    CanaryPacket bcast = reduce_packet(9, 8, 8, {999});
    bcast.multicast = true;
    const auto res = sw.on_broadcast_packet(bcast, microseconds(5));
    REQUIRE(res.outcome == BroadcastOutcome::Replicated);
    REQUIRE(res.emits.size() == 2);
    CHECK(res.emits[0].out_port == 1);
    CHECK(res.emits[1].out_port == 4);
    CHECK(*res.emits[0].pkt.data == Payload{999});
    CHECK(sw.occupied_slots() == 0);

    SECTION("slot is freed exactly once; a second broadcast is dropped") {
        const auto again = sw.on_broadcast_packet(bcast, microseconds(6));
        CHECK(again.outcome == BroadcastOutcome::Dropped);
        CHECK(again.emits.empty());
    }
}

TEST_CASE("broadcast without a descriptor is dropped (collision victim)") {
    CanarySwitch sw(small_config());
    CanaryPacket bcast = reduce_packet(77, 8, 8, {999});
    bcast.multicast = true;
    const auto res = sw.on_broadcast_packet(bcast, 0);
    CHECK(res.outcome == BroadcastOutcome::Dropped);
    CHECK(sw.stats().broadcast_drops == 1);
}

TEST_CASE("degenerate multicast: single child, single copy") {
    CanarySwitch sw(small_config());
    sw.on_reduce_packet(reduce_packet(9, 1, 8, {5}), 2, 0);
    CanaryPacket bcast = reduce_packet(9, 8, 8, {50});
    bcast.multicast = true;
    const auto res = sw.on_broadcast_packet(bcast, 0);
    REQUIRE(res.emits.size() == 1);
    CHECK(res.emits[0].out_port == 2);
}

TEST_CASE("restoration replicates on the carried port bitmap without a descriptor") {
    CanarySwitch sw(small_config());
    CanaryPacket rest = reduce_packet(9, 8, 8, {123});
    rest.multicast = true;
    rest.switch_address = 7;
    rest.children = (1u << 2) | (1u << 5) | (1u << 11);
    const auto emits = sw.on_restoration_packet(rest);
    REQUIRE(emits.size() == 3);
    CHECK(emits[0].out_port == 2);
    CHECK(emits[1].out_port == 5);
    CHECK(emits[2].out_port == 11);
    for (const auto& e : emits) {
        CHECK(e.pkt.children == 0); // copies continue as plain broadcast packets
        CHECK(e.pkt.multicast);
        CHECK(*e.pkt.data == Payload{123});
    }

    SECTION("an empty bitmap is a protocol error") {
        rest.children = 0;
        CHECK_THROWS_AS(sw.on_restoration_packet(rest), ProtocolError);
    }
}

TEST_CASE("malformed counter is rejected") {
    CanarySwitch sw(small_config());
    CHECK_THROWS_AS(sw.on_reduce_packet(reduce_packet(1, 9, 8, {0}), 0, 0), ProtocolError);
}

TEST_CASE("timer deadline honors the clock-packet granularity") {
    SwitchConfig cfg = small_config();
    cfg.timeout = microseconds(1.0);
    CanarySwitch exact(cfg);
    CHECK(exact.timer_deadline(250) == 250 + microseconds(1.0));

    cfg.timer_granularity = microseconds(0.5);
    CanarySwitch coarse(cfg);
    CHECK(coarse.timer_deadline(250) == microseconds(1.5)); // rounded up
    CHECK(coarse.timer_deadline(0) == microseconds(1.0));   // already aligned
}

TEST_CASE("stale sent descriptors are evicted for new blocks") {
    SwitchConfig cfg = small_config();
    cfg.table_size = 1;
    cfg.stale_horizon = microseconds(10);
    CanarySwitch sw(cfg);
    const auto r1 = sw.on_reduce_packet(reduce_packet(1, 1, 8, {5}), 1, 0);
    sw.on_timeout(r1.slot, sw.descriptor_at(r1.slot)->generation, microseconds(1));
    // within the horizon: still a collision
    REQUIRE(sw.on_reduce_packet(reduce_packet(2, 1, 8, {6}), 2, microseconds(5)).outcome ==
            ReduceOutcome::Collision);
    // long after: the zombie is reclaimed
    const auto res = sw.on_reduce_packet(reduce_packet(2, 1, 8, {6}), 2, microseconds(60));
    CHECK(res.outcome == ReduceOutcome::StoreNew);
    CHECK(sw.stats().stale_evictions == 1);
    CHECK(sw.descriptor_at(res.slot)->id == 2);
}

TEST_CASE("descriptor bytes track allocation and peak") {
    CanarySwitch sw(small_config());
    sw.on_reduce_packet(reduce_packet(1, 1, 8, {1, 2}), 0, 0);
    sw.on_reduce_packet(reduce_packet(2, 1, 8, {1, 2}), 0, 0);
    const int64_t per_descriptor = 2 * 4 + 32;
    CHECK(sw.stats().descriptor_bytes == 2 * per_descriptor);
    CHECK(sw.stats().peak_descriptor_bytes == 2 * per_descriptor);
    CanaryPacket bcast = reduce_packet(1, 8, 8, {9, 9});
    bcast.multicast = true;
    sw.on_broadcast_packet(bcast, 0);
    CHECK(sw.stats().descriptor_bytes == per_descriptor);
    CHECK(sw.stats().peak_descriptor_bytes == 2 * per_descriptor);
}

TEST_CASE("counter conservation across random single-switch histories") {
    // Injected counters equal counters still held in live descriptors plus
    // counters carried out by emitted or forwarded packets.
    Rng rng(0xC0);
    for (int trial = 0; trial < 20; ++trial) {
        SwitchConfig cfg = small_config();
        cfg.table_size = 4;
        cfg.stale_horizon = 0; // no eviction for this accounting check
        CanarySwitch sw(cfg);
        uint64_t injected = 0, out = 0;
        SimTime now = 0;
        std::vector<std::pair<uint32_t, uint32_t>> live; // slot, generation
        for (int i = 0; i < 200; ++i) {
            now += microseconds(0.1);
            const uint32_t id = static_cast<uint32_t>(rng.next_below(8));
            const auto res =
                sw.on_reduce_packet(reduce_packet(id, 1, 1000, {1}),
                                    static_cast<uint32_t>(rng.next_below(16)), now);
            injected += 1;
            for (const auto& e : res.emits) out += e.pkt.counter;
            if (res.outcome == ReduceOutcome::StoreNew)
                live.push_back({res.slot, sw.descriptor_at(res.slot)->generation});
            if (rng.next_bool(0.3) && !live.empty()) {
                const auto [slot, gen] = live[rng.next_below(live.size())];
                const auto t = sw.on_timeout(slot, gen, now + sw.config().timeout);
                for (const auto& e : t.emits) out += e.pkt.counter;
            }
        }
        uint64_t in_descriptors = 0;
        for (uint32_t s = 0; s < cfg.table_size; ++s)
            if (const auto& d = sw.descriptor_at(s); d && !d->sent_upstream)
                in_descriptors += d->counter_sum;
        REQUIRE(injected == out + in_descriptors);
    }
}
