#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "canary/errors.hpp"

namespace canary {

// Payloads are shared between packet copies (multicast replicates headers,
// never element data).
using Payload = std::vector<uint32_t>;
using PayloadPtr = std::shared_ptr<const Payload>;

inline PayloadPtr make_payload(Payload v) {
    return std::make_shared<const Payload>(std::move(v));
}
inline PayloadPtr zero_payload(size_t n) { return make_payload(Payload(n, 0)); }

// Fixed header layout, all fields big-endian:
//
//   offset  size  field
//   0       4     destination     (leader host address)
//   4       4     id              (app id || sequence)
//   8       2     counter         (already-reduced contributions)
//   10      2     hosts           (expected contributions on the wire)
//   12      4     children        (port id on collision-forward, port bitmap
//                                  on restoration packets)
//   16      2     switch_address  (switch that detected a collision)
//   18      1     flags           (bit 7 bypass, bit 6 multicast, bits 5..0
//                                  zero padding)
//
// followed by elements_per_packet 32-bit big-endian fixed-point elements.
// Elements reduce with wrapping 32-bit addition.
constexpr size_t kHeaderBytes = 19;

constexpr size_t encoded_size(size_t elements_per_packet) {
    return kHeaderBytes + 4 * elements_per_packet;
}

struct CanaryPacket {
    uint32_t destination = 0;
    uint32_t id = 0;
    uint16_t counter = 0;
    uint16_t hosts = 0;
    uint32_t children = 0;
    uint16_t switch_address = 0;
    bool bypass = false;
    bool multicast = false;
    PayloadPtr data; // never null in a valid packet

    bool operator==(const CanaryPacket& o) const {
        return destination == o.destination && id == o.id && counter == o.counter &&
               hosts == o.hosts && children == o.children &&
               switch_address == o.switch_address && bypass == o.bypass &&
               multicast == o.multicast &&
               (data == o.data || (data && o.data && *data == *o.data));
    }
};

namespace detail {
inline void put_u32(std::vector<uint8_t>& out, size_t at, uint32_t v) {
    out[at] = static_cast<uint8_t>(v >> 24);
    out[at + 1] = static_cast<uint8_t>(v >> 16);
    out[at + 2] = static_cast<uint8_t>(v >> 8);
    out[at + 3] = static_cast<uint8_t>(v);
}
inline void put_u16(std::vector<uint8_t>& out, size_t at, uint16_t v) {
    out[at] = static_cast<uint8_t>(v >> 8);
    out[at + 1] = static_cast<uint8_t>(v);
}
inline uint32_t get_u32(const std::vector<uint8_t>& in, size_t at) {
    return (uint32_t(in[at]) << 24) | (uint32_t(in[at + 1]) << 16) |
           (uint32_t(in[at + 2]) << 8) | uint32_t(in[at + 3]);
}
inline uint16_t get_u16(const std::vector<uint8_t>& in, size_t at) {
    return static_cast<uint16_t>((uint16_t(in[at]) << 8) | in[at + 1]);
}
} // namespace detail

inline std::vector<uint8_t> encode(const CanaryPacket& pkt, size_t elements_per_packet) {
    if (!pkt.data || pkt.data->size() != elements_per_packet)
        throw CodecError("encode: payload length " +
                         std::to_string(pkt.data ? pkt.data->size() : 0) +
                         " != elements_per_packet " + std::to_string(elements_per_packet));
    if (pkt.bypass && pkt.multicast)
        throw CodecError("encode: bypass and multicast are mutually exclusive");

    std::vector<uint8_t> out(encoded_size(elements_per_packet), 0);
    detail::put_u32(out, 0, pkt.destination);
    detail::put_u32(out, 4, pkt.id);
    detail::put_u16(out, 8, pkt.counter);
    detail::put_u16(out, 10, pkt.hosts);
    detail::put_u32(out, 12, pkt.children);
    detail::put_u16(out, 16, pkt.switch_address);
    out[18] = static_cast<uint8_t>((pkt.bypass ? 0x80 : 0) | (pkt.multicast ? 0x40 : 0));
    size_t at = kHeaderBytes;
    for (uint32_t e : *pkt.data) {
        detail::put_u32(out, at, e);
        at += 4;
    }
    return out;
}

inline CanaryPacket decode(const std::vector<uint8_t>& bytes, size_t elements_per_packet) {
    if (bytes.size() != encoded_size(elements_per_packet))
        throw CodecError("decode: expected " +
                         std::to_string(encoded_size(elements_per_packet)) +
                         " bytes, got " + std::to_string(bytes.size()));
    const uint8_t flags = bytes[18];
    if ((flags & 0x3f) != 0)
        throw CodecError("decode: nonzero padding bits");
    if ((flags & 0xc0) == 0xc0)
        throw CodecError("decode: bypass and multicast both set");

    CanaryPacket pkt;
    pkt.destination = detail::get_u32(bytes, 0);
    pkt.id = detail::get_u32(bytes, 4);
    pkt.counter = detail::get_u16(bytes, 8);
    pkt.hosts = detail::get_u16(bytes, 10);
    pkt.children = detail::get_u32(bytes, 12);
    pkt.switch_address = detail::get_u16(bytes, 16);
    pkt.bypass = (flags & 0x80) != 0;
    pkt.multicast = (flags & 0x40) != 0;
    Payload data(elements_per_packet);
    size_t at = kHeaderBytes;
    for (size_t i = 0; i < elements_per_packet; ++i, at += 4)
        data[i] = detail::get_u32(bytes, at);
    pkt.data = make_payload(std::move(data));
    return pkt;
}

} // namespace canary
