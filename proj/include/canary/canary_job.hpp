#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "canary/errors.hpp"
#include "canary/host_engine.hpp"
#include "canary/packet.hpp"
#include "canary/sim_packet.hpp"
#include "canary/units.hpp"

namespace canary {

enum class HostTimerKind : uint8_t {
    Retransmit = 0,      // per-block loss detection
    DoneResend = 1,      // completion notification until Release
    FallbackRefresh = 2, // leader re-advertises fallback until complete
    RingResend = 3,      // unacked fallback ring hop
};

struct JobSpec {
    uint8_t app_id = 1;
    std::vector<uint32_t> hosts; // global host ids in rank order
    uint32_t element_count = 0;
    uint32_t elements_per_packet = 32;
    int fixed_leader_rank = -1;  // -1: round-robin leaders
    InputModel inputs;
};

struct CanaryJobConfig {
    SimTime retransmit_timeout = microseconds(200);
    uint32_t max_retries = 3;
    uint32_t window = 0; // max outstanding blocks per host; 0 = unlimited
    SimTime reissue_cooldown = microseconds(200);
};

struct CanaryJobStats {
    uint64_t retransmission_requests = 0;
    uint64_t reissues = 0;
    uint64_t fallbacks = 0;
    uint64_t result_unicasts = 0;
    uint64_t failure_notices = 0;
    uint64_t stale_packets = 0;
    uint64_t unknown_broadcasts = 0;
    uint64_t ring_hops = 0;
    uint64_t leader_data_packets = 0; // reduce-phase packets consumed by leaders
};

// Environment the protocol runs against; the simulation implements it, unit
// tests provide a recording stub.
class CanaryEnv {
public:
    virtual SimTime now() const = 0;
    virtual void send_canary(uint32_t src_host, CanaryPacket pkt) = 0;
    virtual void send_control(uint32_t src_host, uint32_t dst_host, ControlMsg msg) = 0;
    virtual void arm_timer(uint32_t host, HostTimerKind kind, uint32_t block_seq,
                           uint32_t generation, SimTime at) = 0;
    // Block result landed at a host (delivery + verification hook).
    virtual void block_delivered(uint32_t host, uint32_t block_seq, const Payload& result) = 0;
    virtual void leader_finalized(uint32_t block_seq) = 0;
    virtual void attempt_registered(uint32_t block_seq, uint32_t id) = 0;
    virtual void job_finished(uint32_t host, SimTime at) = 0;
    virtual ~CanaryEnv() = default;
};

// One allreduce job: every member's sender state, the leader role for the
// blocks each member leads, loss recovery, host-based fallback and the
// completion barrier. Event-driven; one method call per delivered event.
class CanaryJob {
public:
    CanaryJob(const JobSpec& spec, const CanaryJobConfig& cfg, CanaryEnv& env)
        : spec_(spec), cfg_(cfg), env_(env),
          blocks_(packetize(spec.element_count, spec.app_id, spec.elements_per_packet)) {
        const uint32_t n = static_cast<uint32_t>(spec_.hosts.size());
        if (n == 0) throw ConfigError("job needs at least one host");
        members_.resize(n);
        for (uint32_t r = 0; r < n; ++r) {
            members_[r].finish_time = -1;
            rank_of_host_[spec_.hosts[r]] = r;
        }
        for (const BlockRange& b : blocks_) {
            const uint32_t lr = leader_rank(b.sequence);
            auto& lb = members_[lr].leader_blocks[b.sequence];
            lb.seq = b.sequence;
            lb.current_id = b.id;
            id_index_[b.id] = b.sequence;
        }
        for (auto& m : members_) {
            m.block_state.resize(blocks_.size());
            for (size_t s = 0; s < blocks_.size(); ++s)
                m.block_state[s].current_id = blocks_[s].id;
        }
    }

    uint32_t member_count() const { return static_cast<uint32_t>(spec_.hosts.size()); }
    const std::vector<BlockRange>& blocks() const { return blocks_; }
    const CanaryJobStats& stats() const { return stats_; }
    const JobSpec& spec() const { return spec_; }

    uint32_t leader_rank(uint32_t seq) const {
        if (spec_.fixed_leader_rank >= 0)
            return static_cast<uint32_t>(spec_.fixed_leader_rank);
        return seq % member_count();
    }
    uint32_t leader_host(uint32_t seq) const { return spec_.hosts[leader_rank(seq)]; }
    bool is_member(uint32_t host) const { return rank_of_host_.count(host) != 0; }
    uint32_t rank_of(uint32_t host) const { return rank_of_host_.at(host); }

    // Expected contributions on the wire: every member except the leader.
    uint16_t wire_hosts() const { return static_cast<uint16_t>(member_count() - 1); }

    SimTime finish_time(uint32_t rank) const { return members_[rank].finish_time; }
    SimTime last_finalize_time() const { return last_finalize_; }
    bool done() const { return finished_members_ == member_count(); }

    // ---- job start ----
    void start() {
        for (uint32_t r = 0; r < member_count(); ++r) {
            Member& m = members_[r];
            if (blocks_.empty()) {
                enter_barrier(r);
                continue;
            }
            if (member_count() == 1) {
                // Degenerate single-host reduction: no network traffic at all.
                for (const BlockRange& b : blocks_) {
                    LeaderBlock& lb = m.leader_blocks[b.sequence];
                    lb.retained = make_payload(
                        spec_.inputs.block_slice(r, b, spec_.elements_per_packet));
                    lb.complete = true;
                    deliver_block(r, b.sequence, *lb.retained);
                }
                continue;
            }
            pump_sends(r);
        }
    }

    // ---- deliveries ----
    void on_canary(uint32_t host, const CanaryPacket& pkt) {
        const uint32_t rank = rank_of(host);
        if (pkt.multicast) {
            on_broadcast_result(rank, pkt);
            return;
        }
        on_leader_packet(rank, pkt);
    }

    void on_control(uint32_t host, const ControlMsg& msg) {
        const uint32_t rank = rank_of(host);
        switch (msg.type) {
        case CtlType::RetransmitRequest: return leader_on_request(rank, msg);
        case CtlType::ResultUnicast: return on_result_unicast(rank, msg);
        case CtlType::FailureNotice: return on_failure_notice(rank, msg);
        case CtlType::FallbackNotice:
            return engage_member_fallback(rank, msg.block_seq, msg.attempt);
        case CtlType::RingHop: return on_ring_hop(rank, msg);
        case CtlType::RingHopAck: return on_ring_ack(rank, msg);
        case CtlType::Done: return coordinator_on_done(rank, msg);
        case CtlType::Release: return on_release(rank);
        }
    }

    void on_timer(uint32_t host, HostTimerKind kind, uint32_t seq, uint32_t gen) {
        const uint32_t rank = rank_of(host);
        switch (kind) {
        case HostTimerKind::Retransmit: return on_retransmit_timer(rank, seq, gen);
        case HostTimerKind::DoneResend: return on_done_resend(rank, gen);
        case HostTimerKind::FallbackRefresh: return on_fallback_refresh(rank, seq, gen);
        case HostTimerKind::RingResend: return on_ring_resend(rank, seq, gen);
        }
    }

    // A contribution left the sender's NIC: start its loss-detection timer.
    void on_contribution_departed(uint32_t host, uint32_t id) {
        const uint32_t rank = rank_of(host);
        auto it = id_index_.find(id);
        if (it == id_index_.end()) return;
        const uint32_t seq = it->second;
        BlockSend& bs = members_[rank].block_state[seq];
        if (bs.done || bs.current_id != id) return;
        bs.send_time = env_.now();
        arm_retransmit(rank, seq);
    }

private:
    struct BlockSend {
        uint32_t current_id = 0;
        uint32_t attempt = 0;
        bool sent = false;
        bool done = false;
        bool counted_outstanding = false;
        uint32_t retransmit_count = 0;
        uint32_t timer_gen = 0;
        SimTime send_time = -1;
        // member-side fallback
        bool fb_engaged = false;
        uint32_t fb_tag = 0;
        bool fb_hop_pending = false;
        uint32_t fb_hop = 0;
        uint32_t fb_dst_rank = 0;
        PayloadPtr fb_data;
        uint32_t fb_timer_gen = 0;
        std::set<uint32_t> fb_seen_hops;
    };

    struct LeaderBlock {
        uint32_t seq = 0;
        uint32_t current_id = 0;
        uint32_t attempt = 0;
        Payload partial;
        uint32_t received = 0;
        std::map<uint16_t, uint32_t> restorations; // switch address -> port bitmap
        PayloadPtr retained;
        bool complete = false;
        bool released = false;
        SimTime last_reissue = std::numeric_limits<SimTime>::min() / 4;
        uint32_t reissue_count = 0;
        bool fallback = false;
        uint32_t fallback_tag = 0;
        uint32_t fb_refresh_gen = 0;
    };

    struct Member {
        std::vector<BlockSend> block_state;
        std::map<uint32_t, LeaderBlock> leader_blocks; // keyed by block seq
        uint32_t next_unsent = 0;
        uint32_t outstanding = 0;
        uint32_t done_blocks = 0;
        bool in_barrier = false;
        bool finished = false;
        SimTime finish_time = -1;
        uint32_t done_timer_gen = 0;
        uint32_t reissue_counter = 0; // this member's id allocations as leader
        std::set<uint32_t> done_ranks; // coordinator only
        bool released = false;
    };

    // ---------- sending ----------
    void pump_sends(uint32_t rank) {
        Member& m = members_[rank];
        while (m.next_unsent < blocks_.size() &&
               (cfg_.window == 0 || m.outstanding < cfg_.window)) {
            const uint32_t seq = m.next_unsent++;
            BlockSend& bs = m.block_state[seq];
            if (bs.done) continue; // completed before its turn (led blocks, fallback)
            bs.counted_outstanding = true;
            ++m.outstanding;
            if (leader_rank(seq) == rank) {
                bs.sent = true; // the leader contributes locally at finalize
                continue;
            }
            send_contribution(rank, seq);
        }
    }

    void send_contribution(uint32_t rank, uint32_t seq) {
        BlockSend& bs = members_[rank].block_state[seq];
        CanaryPacket pkt;
        pkt.destination = leader_host(seq);
        pkt.id = bs.current_id;
        pkt.counter = 1;
        pkt.hosts = wire_hosts();
        pkt.data = make_payload(
            spec_.inputs.block_slice(rank, blocks_[seq], spec_.elements_per_packet));
        bs.sent = true;
        env_.send_canary(spec_.hosts[rank], std::move(pkt));
    }

    void arm_retransmit(uint32_t rank, uint32_t seq) {
        BlockSend& bs = members_[rank].block_state[seq];
        ++bs.timer_gen;
        env_.arm_timer(spec_.hosts[rank], HostTimerKind::Retransmit, seq, bs.timer_gen,
                       env_.now() + cfg_.retransmit_timeout);
    }

    // ---------- results at members ----------
    void on_broadcast_result(uint32_t rank, const CanaryPacket& pkt) {
        auto it = id_index_.find(pkt.id);
        if (it == id_index_.end()) {
            ++stats_.unknown_broadcasts;
            return;
        }
        const uint32_t seq = it->second;
        BlockSend& bs = members_[rank].block_state[seq];
        // A member that missed a failure notice cannot tell a newer attempt's
        // id apart from garbage; it recovers through a retransmission request.
        if (bs.current_id != pkt.id && !bs.done) {
            ++stats_.unknown_broadcasts;
            return;
        }
        complete_block(rank, seq, *pkt.data);
    }

    void on_result_unicast(uint32_t rank, const ControlMsg& msg) {
        complete_block(rank, msg.block_seq, *msg.data);
    }

    void complete_block(uint32_t rank, uint32_t seq, const Payload& result) {
        Member& m = members_[rank];
        BlockSend& bs = m.block_state[seq];
        if (bs.done) return;
        bs.done = true;
        ++bs.timer_gen;    // cancel retransmit timer
        ++bs.fb_timer_gen; // cancel ring resend
        deliver_block(rank, seq, result);
    }

    void deliver_block(uint32_t rank, uint32_t seq, const Payload& result) {
        Member& m = members_[rank];
        BlockSend& bs = m.block_state[seq];
        bs.done = true;
        ++m.done_blocks;
        env_.block_delivered(spec_.hosts[rank], seq, result);
        if (bs.counted_outstanding) {
            bs.counted_outstanding = false;
            --m.outstanding;
        }
        if (!blocks_.empty()) pump_sends(rank);
        if (m.done_blocks == blocks_.size() && !m.in_barrier) enter_barrier(rank);
    }

    // ---------- leader role ----------
    LeaderBlock* find_leader_block(uint32_t rank, uint32_t seq) {
        auto& lbs = members_[rank].leader_blocks;
        auto it = lbs.find(seq);
        return it == lbs.end() ? nullptr : &it->second;
    }

    void on_leader_packet(uint32_t rank, const CanaryPacket& pkt) {
        auto idit = id_index_.find(pkt.id);
        if (idit == id_index_.end()) {
            ++stats_.stale_packets;
            return;
        }
        LeaderBlock* lb = find_leader_block(rank, idit->second);
        if (!lb || lb->current_id != pkt.id || lb->complete) {
            ++stats_.stale_packets;
            return;
        }
        ++stats_.leader_data_packets;
        if (lb->partial.empty()) lb->partial.assign(spec_.elements_per_packet, 0);
        for (size_t i = 0; i < lb->partial.size(); ++i)
            lb->partial[i] += (*pkt.data)[i];
        lb->received += pkt.counter;
        if (lb->received > wire_hosts())
            throw ProtocolError("leader received more contributions than senders");
        if (pkt.bypass) {
            if (pkt.children >= 32)
                throw ProtocolError("collision port beyond restoration bitmap range");
            lb->restorations[pkt.switch_address] |= (1u << pkt.children);
        }
        if (lb->received == wire_hosts()) finalize(rank, *lb);
    }

    void finalize(uint32_t rank, LeaderBlock& lb) {
        const BlockRange& b = blocks_[lb.seq];
        Payload final = spec_.inputs.block_slice(rank, b, spec_.elements_per_packet);
        for (size_t i = 0; i < final.size(); ++i) final[i] += lb.partial[i];
        lb.retained = make_payload(std::move(final));
        lb.complete = true;
        lb.partial.clear();
        last_finalize_ = std::max(last_finalize_, env_.now());
        env_.leader_finalized(lb.seq);

        CanaryPacket bcast;
        bcast.destination = spec_.hosts[rank];
        bcast.id = lb.current_id;
        bcast.counter = wire_hosts();
        bcast.hosts = wire_hosts();
        bcast.multicast = true;
        bcast.data = lb.retained;
        env_.send_canary(spec_.hosts[rank], std::move(bcast));

        for (const auto& [sw, bitmap] : lb.restorations) {
            CanaryPacket rest;
            rest.destination = switch_destination(sw);
            rest.id = lb.current_id;
            rest.counter = wire_hosts();
            rest.hosts = wire_hosts();
            rest.multicast = true;
            rest.switch_address = sw;
            rest.children = bitmap;
            rest.data = lb.retained;
            env_.send_canary(spec_.hosts[rank], std::move(rest));
        }
        // The leader now holds the result for its own block.
        complete_block(rank, lb.seq, *lb.retained);
    }

    void leader_on_request(uint32_t rank, const ControlMsg& msg) {
        LeaderBlock* lb = find_leader_block(rank, msg.block_seq);
        if (!lb) throw ProtocolError("retransmission request at non-leader");
        if (lb->released) return; // every member already notified completion
        if (lb->retained) {
            ControlMsg out;
            out.type = CtlType::ResultUnicast;
            out.block_seq = lb->seq;
            out.data = lb->retained;
            ++stats_.result_unicasts;
            env_.send_control(spec_.hosts[rank], msg.requester, out);
            return;
        }
        if (msg.fallback || lb->fallback || lb->reissue_count > cfg_.max_retries) {
            engage_leader_fallback(rank, *lb, msg.requester);
            return;
        }
        if (env_.now() - lb->last_reissue >= cfg_.reissue_cooldown) {
            reissue(rank, *lb);
        } else {
            // Re-point the requester at the current attempt; it may have
            // missed the failure notice.
            send_failure_notice(rank, *lb, msg.requester);
        }
    }

    void reissue(uint32_t rank, LeaderBlock& lb) {
        ++stats_.reissues;
        ++lb.attempt;
        ++lb.reissue_count;
        lb.current_id = reissue_id(spec_.app_id, rank, members_[rank].reissue_counter++);
        id_index_[lb.current_id] = lb.seq;
        env_.attempt_registered(lb.seq, lb.current_id);
        lb.partial.clear();
        lb.received = 0;
        lb.restorations.clear();
        lb.last_reissue = env_.now();
        for (uint32_t r = 0; r < member_count(); ++r)
            if (r != rank) send_failure_notice(rank, lb, spec_.hosts[r]);
    }

    void send_failure_notice(uint32_t rank, const LeaderBlock& lb, uint32_t dst_host) {
        ControlMsg msg;
        msg.type = CtlType::FailureNotice;
        msg.block_seq = lb.seq;
        msg.attempt = lb.attempt;
        msg.new_id = lb.current_id;
        ++stats_.failure_notices;
        env_.send_control(spec_.hosts[rank], dst_host, msg);
    }

    void on_failure_notice(uint32_t rank, const ControlMsg& msg) {
        BlockSend& bs = members_[rank].block_state[msg.block_seq];
        if (bs.done || bs.fb_engaged) return;
        if (msg.attempt <= bs.attempt) return;
        bs.attempt = msg.attempt;
        bs.current_id = msg.new_id;
        if (bs.sent) send_contribution(rank, msg.block_seq);
    }

    void on_retransmit_timer(uint32_t rank, uint32_t seq, uint32_t gen) {
        BlockSend& bs = members_[rank].block_state[seq];
        if (bs.done || gen != bs.timer_gen) return;
        ++bs.retransmit_count;
        ++stats_.retransmission_requests;
        ControlMsg msg;
        msg.type = CtlType::RetransmitRequest;
        msg.block_seq = seq;
        msg.requester = spec_.hosts[rank];
        msg.fallback = bs.retransmit_count > cfg_.max_retries;
        env_.send_control(spec_.hosts[rank], leader_host(seq), msg);
        arm_retransmit(rank, seq);
    }

    // ---------- host-based fallback (reliable ring around the members) ----------
    uint32_t offset_of(uint32_t rank, uint32_t seq) const {
        return (rank + member_count() - leader_rank(seq)) % member_count();
    }
    uint32_t rank_at_offset(uint32_t offset, uint32_t seq) const {
        return (leader_rank(seq) + offset) % member_count();
    }

    void engage_leader_fallback(uint32_t rank, LeaderBlock& lb, uint32_t requester) {
        if (lb.fallback) {
            // Idempotent: remind the requester.
            ControlMsg msg;
            msg.type = CtlType::FallbackNotice;
            msg.block_seq = lb.seq;
            msg.attempt = lb.fallback_tag;
            env_.send_control(spec_.hosts[rank], requester, msg);
            return;
        }
        ++stats_.fallbacks;
        lb.fallback = true;
        lb.fallback_tag = ++fallback_tag_counter_;
        broadcast_fallback(rank, lb);
        engage_member_fallback(rank, lb.seq, lb.fallback_tag);
        ++lb.fb_refresh_gen;
        env_.arm_timer(spec_.hosts[rank], HostTimerKind::FallbackRefresh, lb.seq,
                       lb.fb_refresh_gen, env_.now() + cfg_.retransmit_timeout);
    }

    void broadcast_fallback(uint32_t rank, const LeaderBlock& lb) {
        for (uint32_t r = 0; r < member_count(); ++r) {
            if (r == rank) continue;
            ControlMsg msg;
            msg.type = CtlType::FallbackNotice;
            msg.block_seq = lb.seq;
            msg.attempt = lb.fallback_tag;
            env_.send_control(spec_.hosts[rank], spec_.hosts[r], msg);
        }
    }

    void on_fallback_refresh(uint32_t rank, uint32_t seq, uint32_t gen) {
        LeaderBlock* lb = find_leader_block(rank, seq);
        if (!lb || !lb->fallback || lb->complete || gen != lb->fb_refresh_gen) return;
        broadcast_fallback(rank, *lb);
        env_.arm_timer(spec_.hosts[rank], HostTimerKind::FallbackRefresh, seq, gen,
                       env_.now() + cfg_.retransmit_timeout);
    }

    void engage_member_fallback(uint32_t rank, uint32_t seq, uint32_t tag) {
        BlockSend& bs = members_[rank].block_state[seq];
        if (bs.done) return;
        if (bs.fb_engaged && bs.fb_tag == tag) {
            maybe_start_ring(rank, seq);
            return;
        }
        bs.fb_engaged = true;
        bs.fb_tag = tag;
        // The retransmit timer keeps running: its requests are how a member
        // recovers a lost result unicast after the ring completes.
        maybe_start_ring(rank, seq);
    }

    void maybe_start_ring(uint32_t rank, uint32_t seq) {
        BlockSend& bs = members_[rank].block_state[seq];
        if (offset_of(rank, seq) != 1 || bs.fb_hop_pending || bs.fb_seen_hops.count(1))
            return;
        Payload own =
            spec_.inputs.block_slice(rank, blocks_[seq], spec_.elements_per_packet);
        bs.fb_seen_hops.insert(1);
        send_ring_hop(rank, seq, 1, make_payload(std::move(own)));
    }

    void send_ring_hop(uint32_t rank, uint32_t seq, uint32_t hop, PayloadPtr data) {
        BlockSend& bs = members_[rank].block_state[seq];
        bs.fb_hop_pending = true;
        bs.fb_hop = hop;
        bs.fb_data = data;
        bs.fb_dst_rank = rank_at_offset((hop + 1) % member_count(), seq);
        ++stats_.ring_hops;
        ControlMsg msg;
        msg.type = CtlType::RingHop;
        msg.block_seq = seq;
        msg.attempt = bs.fb_tag;
        msg.hop = hop;
        msg.requester = spec_.hosts[rank];
        msg.data = std::move(data);
        env_.send_control(spec_.hosts[rank], spec_.hosts[bs.fb_dst_rank], msg);
        ++bs.fb_timer_gen;
        env_.arm_timer(spec_.hosts[rank], HostTimerKind::RingResend, seq, bs.fb_timer_gen,
                       env_.now() + cfg_.retransmit_timeout);
    }

    void on_ring_resend(uint32_t rank, uint32_t seq, uint32_t gen) {
        BlockSend& bs = members_[rank].block_state[seq];
        if (!bs.fb_hop_pending || gen != bs.fb_timer_gen || bs.done) return;
        ControlMsg msg;
        msg.type = CtlType::RingHop;
        msg.block_seq = seq;
        msg.attempt = bs.fb_tag;
        msg.hop = bs.fb_hop;
        msg.requester = spec_.hosts[rank];
        msg.data = bs.fb_data;
        env_.send_control(spec_.hosts[rank], spec_.hosts[bs.fb_dst_rank], msg);
        ++bs.fb_timer_gen;
        env_.arm_timer(spec_.hosts[rank], HostTimerKind::RingResend, seq, bs.fb_timer_gen,
                       env_.now() + cfg_.retransmit_timeout);
    }

    void on_ring_hop(uint32_t rank, const ControlMsg& msg) {
        const uint32_t seq = msg.block_seq;
        BlockSend& bs = members_[rank].block_state[seq];
        // Always ack; the sender's copy may be a retransmission.
        ControlMsg ack;
        ack.type = CtlType::RingHopAck;
        ack.block_seq = seq;
        ack.attempt = msg.attempt;
        ack.hop = msg.hop;
        env_.send_control(spec_.hosts[rank], msg.requester, ack);

        if (!bs.fb_engaged || bs.fb_tag != msg.attempt)
            engage_member_fallback(rank, seq, msg.attempt);
        if (bs.fb_seen_hops.count(msg.hop + 1) || bs.done) return;
        bs.fb_seen_hops.insert(msg.hop + 1);

        const uint32_t my_offset = offset_of(rank, seq);
        if (my_offset != (msg.hop + 1) % member_count()) return; // misrouted duplicate
        Payload acc = *msg.data;
        const Payload own =
            spec_.inputs.block_slice(rank, blocks_[seq], spec_.elements_per_packet);
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += own[i];

        if (my_offset == 0) {
            // Leader closes the ring: result complete.
            LeaderBlock* lb = find_leader_block(rank, seq);
            if (!lb || lb->complete) return;
            lb->retained = make_payload(std::move(acc));
            lb->complete = true;
            ++lb->fb_refresh_gen; // stop re-advertising
            last_finalize_ = std::max(last_finalize_, env_.now());
            env_.leader_finalized(seq);
            for (uint32_t r = 0; r < member_count(); ++r) {
                if (r == rank) continue;
                ControlMsg out;
                out.type = CtlType::ResultUnicast;
                out.block_seq = seq;
                out.data = lb->retained;
                ++stats_.result_unicasts;
                env_.send_control(spec_.hosts[rank], spec_.hosts[r], out);
            }
            complete_block(rank, seq, *lb->retained);
            return;
        }
        send_ring_hop(rank, seq, msg.hop + 1, make_payload(std::move(acc)));
    }

    void on_ring_ack(uint32_t rank, const ControlMsg& msg) {
        BlockSend& bs = members_[rank].block_state[msg.block_seq];
        if (bs.fb_hop_pending && bs.fb_tag == msg.attempt && bs.fb_hop == msg.hop) {
            bs.fb_hop_pending = false;
            bs.fb_data.reset();
            ++bs.fb_timer_gen;
        }
    }

    // ---------- completion notification ----------
    void enter_barrier(uint32_t rank) {
        Member& m = members_[rank];
        m.in_barrier = true;
        if (member_count() == 1) {
            finish_member(rank);
            return;
        }
        if (rank == 0) {
            coordinator_mark_done(0);
            return;
        }
        send_done(rank);
    }

    void send_done(uint32_t rank) {
        Member& m = members_[rank];
        ControlMsg msg;
        msg.type = CtlType::Done;
        msg.requester = spec_.hosts[rank];
        env_.send_control(spec_.hosts[rank], spec_.hosts[0], msg);
        ++m.done_timer_gen;
        env_.arm_timer(spec_.hosts[rank], HostTimerKind::DoneResend, 0, m.done_timer_gen,
                       env_.now() + cfg_.retransmit_timeout);
    }

    void on_done_resend(uint32_t rank, uint32_t gen) {
        Member& m = members_[rank];
        if (m.released || gen != m.done_timer_gen) return;
        send_done(rank);
    }

    void coordinator_on_done(uint32_t rank, const ControlMsg& msg) {
        if (rank != 0) throw ProtocolError("Done delivered to non-coordinator");
        coordinator_mark_done(rank_of(msg.requester));
    }

    void coordinator_mark_done(uint32_t done_rank) {
        Member& c = members_[0];
        c.done_ranks.insert(done_rank);
        if (c.released) {
            // Release got lost on the way to this member; tell it again.
            if (done_rank != 0) send_release(done_rank);
            return;
        }
        if (c.done_ranks.size() == member_count()) {
            c.released = true;
            for (uint32_t r = 1; r < member_count(); ++r) send_release(r);
            on_release(0);
        }
    }

    void send_release(uint32_t rank) {
        ControlMsg msg;
        msg.type = CtlType::Release;
        env_.send_control(spec_.hosts[0], spec_.hosts[rank], msg);
    }

    void on_release(uint32_t rank) {
        Member& m = members_[rank];
        if (m.released && rank != 0) return;
        m.released = true;
        ++m.done_timer_gen;
        // Leaders may drop retained results now: every member has notified.
        for (auto& [seq, lb] : m.leader_blocks) {
            lb.retained.reset();
            lb.released = true;
        }
        finish_member(rank);
    }

    void finish_member(uint32_t rank) {
        Member& m = members_[rank];
        if (m.finished) return;
        m.finished = true;
        m.finish_time = env_.now();
        ++finished_members_;
        env_.job_finished(spec_.hosts[rank], env_.now());
    }

    JobSpec spec_;
    CanaryJobConfig cfg_;
    CanaryEnv& env_;
    std::vector<BlockRange> blocks_;
    std::vector<Member> members_;
    std::map<uint32_t, uint32_t> rank_of_host_;
    std::map<uint32_t, uint32_t> id_index_; // every attempt id -> block seq
    CanaryJobStats stats_;
    uint32_t fallback_tag_counter_ = 0;
    uint32_t finished_members_ = 0;
    SimTime last_finalize_ = 0;
};

} // namespace canary
