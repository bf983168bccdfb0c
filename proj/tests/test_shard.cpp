#include <catch2/catch_amalgamated.hpp>

#include "canary/rng.hpp"
#include "canary/shard.hpp"

using namespace canary;

TEST_CASE("worked example: bitmap 00101101 with two shards") {
    // ports {0,2,3,5} split into 1|0010 -> {5} and 0|1101 -> {0,2,3}
    const auto shards = shard_children_bitmap(0b00101101, 8, 2);
    REQUIRE(shards.size() == 2);
    CHECK(shards[0] == Shard{0, 0b1101});
    CHECK(shards[1] == Shard{1, 0b0010});
    CHECK(shard_ports(shards[0], 4) == std::vector<uint32_t>{0, 2, 3});
    CHECK(shard_ports(shards[1], 4) == std::vector<uint32_t>{5});
}

TEST_CASE("only nonzero shards are returned") {
    const auto shards = shard_children_bitmap(0x0000000F, 16, 4);
    REQUIRE(shards.size() == 1);
    CHECK(shards[0] == Shard{0, 0xF});
}

TEST_CASE("single-bit bitmap yields exactly one shard entry") {
    for (uint32_t port = 0; port < 16; ++port) {
        const auto shards = shard_children_bitmap(1ULL << port, 16, 4);
        REQUIRE(shards.size() == 1);
        CHECK(shard_ports(shards[0], 4) == std::vector<uint32_t>{port});
    }
}

TEST_CASE("key space: 64 ports with 4 shards needs 262144 entries") {
    CHECK(shard_key_space(64, 4) == 262144);
    CHECK(shard_key_space(8, 2) == 2u * 16);
    // sharding wins over the unsharded 2^p table for any multi-shard split
    CHECK(shard_key_space(16, 4) < (1ULL << 16));
}

TEST_CASE("shard round-trip reproduces the bitmap") {
    Rng rng(0x5AAD);
    for (int i = 0; i < 10000; ++i) {
        const uint32_t p = 8u << rng.next_below(4); // 8,16,32,64
        uint32_t s = 1u << rng.next_below(4);       // 1,2,4,8
        while (p % s != 0) s >>= 1;
        uint64_t bitmap = rng.next_u64();
        if (p < 64) bitmap &= (1ULL << p) - 1;
        if (bitmap == 0) bitmap = 1;
        const auto shards = shard_children_bitmap(bitmap, p, s);
        REQUIRE(reassemble_bitmap(shards, p, s) == bitmap);
    }
}

TEST_CASE("configuration and protocol errors") {
    CHECK_THROWS_AS(shard_children_bitmap(1, 8, 3), ConfigError);  // 3 does not divide 8
    CHECK_THROWS_AS(shard_children_bitmap(0, 8, 2), ProtocolError); // empty bitmap
    CHECK_THROWS_AS(shard_key_space(8, 0), ConfigError);
}

TEST_CASE("rule table text names the ports of each shard") {
    const auto text = shard_rules_text(0b00101101, 8, 2);
    CHECK(text.find("0 1101 -> [0,2,3]") != std::string::npos);
    CHECK(text.find("1 0010 -> [5]") != std::string::npos);
}
