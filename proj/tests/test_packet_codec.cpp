#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "canary/packet.hpp"
#include "canary/rng.hpp"

using namespace canary;

namespace {

std::vector<uint8_t> load_hex_fixture(const std::string& name) {
    std::ifstream in(std::string(FIXTURE_DIR) + "/" + name);
    REQUIRE(in.good());
    std::vector<uint8_t> bytes;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) bytes.push_back(static_cast<uint8_t>(std::stoul(tok, nullptr, 16)));
    }
    return bytes;
}

CanaryPacket random_packet(Rng& rng, size_t elements) {
    CanaryPacket p;
    p.destination = rng.next_u32();
    p.id = rng.next_u32();
    p.hosts = static_cast<uint16_t>(rng.next_u32());
    p.counter = p.hosts == 0 ? 0 : static_cast<uint16_t>(rng.next_below(p.hosts + 1));
    p.children = rng.next_u32();
    p.switch_address = static_cast<uint16_t>(rng.next_u32());
    switch (rng.next_below(3)) {
    case 0: p.bypass = true; break;
    case 1: p.multicast = true; break;
    default: break;
    }
    Payload data(elements);
    for (auto& e : data) e = rng.next_u32();
    p.data = make_payload(std::move(data));
    return p;
}

} // namespace

TEST_CASE("all-zero packet with 32 elements encodes to 147 zero bytes") {
    CanaryPacket p;
    p.data = zero_payload(32);
    const auto bytes = encode(p, 32);
    REQUIRE(bytes.size() == 147);
    for (uint8_t b : bytes) REQUIRE(b == 0);
    REQUIRE(bytes == load_hex_fixture("packet_e32_zero.hex"));
}

TEST_CASE("counter and hosts land in their declared byte ranges") {
    CanaryPacket p;
    p.counter = 2;
    p.hosts = 8;
    p.data = zero_payload(32);
    const auto bytes = encode(p, 32);
    REQUIRE(bytes[8] == 0x00);
    REQUIRE(bytes[9] == 0x02);
    REQUIRE(bytes[10] == 0x00);
    REQUIRE(bytes[11] == 0x08);
}

TEST_CASE("packet sizes: 19-byte header overhead for any element count") {
    CanaryPacket p;
    for (size_t e : {1u, 2u, 32u, 256u}) {
        p.data = zero_payload(e);
        REQUIRE(encode(p, e).size() == 19 + 4 * e);
    }
    p.data = zero_payload(256);
    REQUIRE(encode(p, 256).size() == 1043);
}

TEST_CASE("hex fixtures decode to the expected fields") {
    SECTION("bypass packet") {
        const auto bytes = load_hex_fixture("packet_e4_bypass.hex");
        REQUIRE(bytes.size() == 35);
        const CanaryPacket p = decode(bytes, 4);
        CHECK(p.destination == 0x0A000001u);
        CHECK(p.id == 0x01000002u);
        CHECK(p.counter == 2);
        CHECK(p.hosts == 8);
        CHECK(p.children == 3);
        CHECK(p.switch_address == 0x0012);
        CHECK(p.bypass);
        CHECK_FALSE(p.multicast);
        CHECK(*p.data == Payload{1, 2, 0x89ABCDEFu, 4});
        CHECK(encode(p, 4) == bytes);
    }
    SECTION("restoration packet") {
        const auto bytes = load_hex_fixture("packet_e2_restoration.hex");
        const CanaryPacket p = decode(bytes, 2);
        CHECK(p.destination == 0xFFFF0005u);
        CHECK(p.children == 0x2Cu);
        CHECK(p.multicast);
        CHECK_FALSE(p.bypass);
        CHECK(*p.data == Payload{0xDEADBEEFu, 0});
        CHECK(encode(p, 2) == bytes);
    }
}

TEST_CASE("round-trip identity over randomized packets") {
    Rng rng(0xC0DEC);
    for (int i = 0; i < 2000; ++i) {
        const size_t e = 1 + rng.next_below(64);
        const CanaryPacket p = random_packet(rng, e);
        REQUIRE(decode(encode(p, e), e) == p);
    }
}

TEST_CASE("flipping one header field only changes its declared byte range") {
    Rng rng(0x15074);
    const size_t e = 8;
    struct FieldSpan {
        const char* name;
        size_t first, last; // inclusive byte range
        void (*mutate)(CanaryPacket&);
    };
    const FieldSpan spans[] = {
        {"destination", 0, 3, [](CanaryPacket& p) { p.destination ^= 0x5a5a5a5a; }},
        {"id", 4, 7, [](CanaryPacket& p) { p.id ^= 0xa5a5a5a5; }},
        {"counter", 8, 9, [](CanaryPacket& p) { p.counter ^= 0x1111; }},
        {"hosts", 10, 11, [](CanaryPacket& p) { p.hosts ^= 0x2222; }},
        {"children", 12, 15, [](CanaryPacket& p) { p.children ^= 0x33333333; }},
        {"switch_address", 16, 17, [](CanaryPacket& p) { p.switch_address ^= 0x4444; }},
        {"flags", 18, 18, [](CanaryPacket& p) { p.bypass = !p.bypass; }},
    };
    for (const auto& span : spans) {
        CanaryPacket p = random_packet(rng, e);
        p.bypass = false;
        p.multicast = false;
        const auto before = encode(p, e);
        span.mutate(p);
        const auto after = encode(p, e);
        for (size_t i = 0; i < before.size(); ++i) {
            if (i >= span.first && i <= span.last) continue;
            INFO(span.name << " byte " << i);
            REQUIRE(before[i] == after[i]);
        }
        REQUIRE(before != after);
    }
}

TEST_CASE("codec errors") {
    CanaryPacket p;
    p.data = zero_payload(16);
    CHECK_THROWS_AS(encode(p, 32), CodecError); // wrong payload length

    p.data = zero_payload(32);
    p.bypass = true;
    p.multicast = true;
    CHECK_THROWS_AS(encode(p, 32), CodecError); // both flags

    CHECK_THROWS_AS(decode(std::vector<uint8_t>(100, 0), 32), CodecError); // truncated

    std::vector<uint8_t> bad(encoded_size(32), 0);
    bad[18] = 0x01; // nonzero padding
    CHECK_THROWS_AS(decode(bad, 32), CodecError);

    bad[18] = 0xC0; // bypass and multicast both set
    CHECK_THROWS_AS(decode(bad, 32), CodecError);
}
