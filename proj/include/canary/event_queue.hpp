#pragma once

#include <cstdint>
#include <queue>
#include <vector>

#include "canary/sim_packet.hpp"
#include "canary/units.hpp"

namespace canary {

enum class EvKind : uint8_t {
    Deliver,      // a = node, b = in_port, pkt
    PortFree,     // a = node, b = port
    StartService, // a = node, b = port (noise-delayed serialization start)
    SwitchTimer,  // a = switch node, b = slot, c = generation
    HostTimer,    // a = host, b = packed timer key, c = generation
    FailSwitch,   // a = switch node
};

struct Event {
    SimTime t = 0;
    uint64_t seq = 0; // tie-break: FIFO among equal timestamps
    EvKind kind = EvKind::Deliver;
    uint32_t a = 0, b = 0, c = 0;
    PacketPtr pkt;
};

struct EventLater {
    bool operator()(const Event& x, const Event& y) const {
        if (x.t != y.t) return x.t > y.t;
        return x.seq > y.seq;
    }
};

class EventQueue {
public:
    void push(SimTime t, EvKind kind, uint32_t a = 0, uint32_t b = 0, uint32_t c = 0,
              PacketPtr pkt = nullptr) {
        q_.push(Event{t, next_seq_++, kind, a, b, c, std::move(pkt)});
    }

    bool empty() const { return q_.empty(); }
    size_t size() const { return q_.size(); }
    const Event& top() const { return q_.top(); }

    Event pop() {
        Event e = q_.top();
        q_.pop();
        return e;
    }

private:
    std::priority_queue<Event, std::vector<Event>, EventLater> q_;
    uint64_t next_seq_ = 0;
};

} // namespace canary
