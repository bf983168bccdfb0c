#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <unordered_map>
#include <vector>

#include "canary/canary_job.hpp"
#include "canary/event_queue.hpp"
#include "canary/fabric.hpp"
#include "canary/ring.hpp"
#include "canary/static_tree.hpp"
#include "canary/switch_engine.hpp"
#include "canary/topology.hpp"
#include "canary/workload.hpp"

namespace canary {

enum class Algorithm { Canary, Ring, StaticTree };

// Everything one simulation run needs, fully resolved (placements drawn,
// seeds split, trees built).
struct ScenarioSpec {
    TopologyScale scale;
    int64_t bandwidth_bps = 100LL * 1000 * 1000 * 1000;
    SimTime hop_latency = nanoseconds(300);
    int64_t queue_capacity_bytes = 1024 * 1024;
    int64_t bg_admission_bytes = 128 * 1024;
    RoutingPolicy policy = RoutingPolicy::Adaptive;

    Algorithm algorithm = Algorithm::Canary;
    std::vector<JobSpec> jobs;
    std::vector<StaticTreeSet> trees_per_job; // static-tree runs
    uint32_t static_window = 256;

    std::vector<uint32_t> background_hosts;
    int64_t bg_flow_bytes = 64 * 1024;
    SimTime bg_reshuffle_period = microseconds(100);
    uint32_t bg_payload_elements = 256; // background frames sized like data frames

    SwitchConfig switch_cfg;
    CanaryJobConfig job_cfg;
    SimTime leader_latency = microseconds(1.0);

    double drop_rate = 0.0;
    double noise_probability = 0.0;
    SimTime noise_delay = microseconds(1.0);
    int fail_core = -1; // core switch index failed at fail_at (permanent)
    SimTime fail_at = 0;

    uint64_t seed = 1;
    SimTime horizon = 2 * kSecond;
    bool verify = true;
    bool track_block_stats = false;
};

struct BlockTrace {
    uint64_t collisions = 0;
    uint64_t bypass_packets = 0;
    uint64_t restoration_packets = 0;
};

struct SwitchBlockTrace {
    uint64_t received = 0;
    uint64_t emitted = 0;
};

struct JobResult {
    SimTime runtime = 0;        // slowest member
    SimTime last_finalize = 0;  // reduce completion at the leaders
    bool complete = false;
    bool correct = true;
    uint64_t blocks_delivered = 0;
    CanaryJobStats canary;
};

struct RunResult {
    std::vector<JobResult> jobs;
    SimTime end_time = 0;
    bool horizon_exceeded = false;
    FabricCounters fabric;
    std::vector<LinkStats> links;
    std::vector<std::string> link_names;
    // canary switch aggregates
    uint64_t collisions = 0, stragglers = 0, early_completions = 0;
    uint64_t timeout_emissions = 0, restorations_served = 0, broadcast_drops = 0;
    uint64_t stale_evictions = 0;
    int64_t peak_descriptor_bytes = 0;
    uint64_t events_processed = 0;
    std::map<uint64_t, BlockTrace> block_traces;            // (job<<32|seq)
    std::map<uint64_t, SwitchBlockTrace> switch_block_traces; // (node<<32|id)

    bool all_correct() const {
        for (const auto& j : jobs)
            if (!j.complete || !j.correct) return false;
        return true;
    }
};

// One discrete-event run: owns the event loop and interprets deliveries for
// whichever algorithm the scenario selects.
class Simulation : public CanaryEnv {
public:
    explicit Simulation(const ScenarioSpec& spec)
        : spec_(spec), topo_(spec.scale, spec.bandwidth_bps, spec.hop_latency),
          fabric_(topo_, fabric_config(spec), events_) {
        fabric_.on_host_nic_idle = [this](uint32_t host) { refill_background(host); };
        fabric_.on_host_packet_departed = [this](uint32_t host, const PacketPtr& p) {
            if (p->kind == PacketKind::Canary && !p->canary.multicast && !p->canary.bypass &&
                p->job >= 0)
                canary_jobs_[p->job]->on_contribution_departed(host, p->canary.id);
        };

        host_job_.assign(topo_.host_count(), -1);
        for (size_t j = 0; j < spec_.jobs.size(); ++j)
            for (uint32_t h : spec_.jobs[j].hosts) host_job_[h] = static_cast<int>(j);

        if (spec_.algorithm == Algorithm::Canary) init_canary();
        if (spec_.algorithm == Algorithm::StaticTree) init_static();
        if (spec_.algorithm == Algorithm::Ring) init_ring();
        init_background();

        if (spec_.fail_core >= 0)
            events_.push(spec_.fail_at, EvKind::FailSwitch,
                         topo_.core_node(static_cast<uint32_t>(spec_.fail_core)));
    }

    RunResult run() {
        start_jobs();
        while (!events_.empty()) {
            if (jobs_done_()) break;
            const Event ev = events_.pop();
            if (ev.t > spec_.horizon) {
                result_.horizon_exceeded = !jobs_done_();
                break;
            }
            now_ = ev.t;
            ++result_.events_processed;
            dispatch(ev);
        }
        if (!jobs_done_() && events_.empty()) result_.horizon_exceeded = true;
        finish_result();
        return result_;
    }

    // ---- CanaryEnv ----
    SimTime now() const override { return now_; }

    void send_canary(uint32_t src_host, CanaryPacket pkt) override {
        auto sp = std::make_shared<SimPacket>();
        sp->kind = PacketKind::Canary;
        sp->src_host = src_host;
        sp->dst_node = is_switch_destination(pkt.destination)
                           ? topo_.node_of_switch_address(
                                 static_cast<uint16_t>(pkt.destination & 0xFFFF))
                           : pkt.destination;
        sp->job = host_job_[src_host];
        sp->noise_eligible = true;
        sp->wire_bytes = canary_wire_bytes(pkt.data->size());
        sp->canary = std::move(pkt);
        fabric_.transmit(src_host, 0, std::move(sp), now_);
    }

    void send_control(uint32_t src_host, uint32_t dst_host, ControlMsg msg) override {
        auto sp = std::make_shared<SimPacket>();
        sp->kind = PacketKind::Control;
        sp->src_host = src_host;
        sp->dst_node = dst_host;
        sp->job = host_job_[src_host];
        sp->wire_bytes = control_wire_bytes(msg);
        sp->ctl = std::move(msg);
        fabric_.transmit(src_host, 0, std::move(sp), now_);
    }

    void arm_timer(uint32_t host, HostTimerKind kind, uint32_t block_seq, uint32_t gen,
                   SimTime at) override {
        const uint32_t job = static_cast<uint32_t>(host_job_[host]);
        const uint32_t key = (job << 27) | (static_cast<uint32_t>(kind) << 24) | block_seq;
        events_.push(at, EvKind::HostTimer, host, key, gen);
    }

    void block_delivered(uint32_t host, uint32_t block_seq, const Payload& result) override {
        const int job = host_job_[host];
        JobResult& jr = result_.jobs[job];
        ++jr.blocks_delivered;
        if (spec_.verify && !expected_matches(job, block_seq, result)) jr.correct = false;
    }

    void leader_finalized(uint32_t) override {}

    void attempt_registered(uint32_t block_seq, uint32_t id) override {
        // reissued ids join the registry; the app id names the owning job
        const uint64_t job = job_of_app_.at(static_cast<uint8_t>(id >> 24));
        id_registry_[id] = job | (static_cast<uint64_t>(block_seq) << 32);
    }

    void job_finished(uint32_t host, SimTime at) override {
        const int job = host_job_[host];
        JobResult& jr = result_.jobs[job];
        jr.runtime = std::max(jr.runtime, at);
        if (++finished_hosts_[job] == spec_.jobs[job].hosts.size()) {
            jr.complete = true;
            jr.last_finalize = canary_jobs_.empty()
                                   ? jr.last_finalize
                                   : canary_jobs_[job]->last_finalize_time();
            ++jobs_complete_;
        }
    }

    const Topology& topology() const { return topo_; }
    Fabric& fabric() { return fabric_; }
    const CanarySwitch& switch_engine(uint32_t sw_index) const {
        return *canary_switches_[sw_index];
    }

private:
    static FabricConfig fabric_config(const ScenarioSpec& s) {
        FabricConfig f;
        f.queue_capacity_bytes = s.queue_capacity_bytes;
        f.bg_admission_bytes = s.bg_admission_bytes;
        f.policy = s.policy;
        f.drop_rate = s.drop_rate;
        f.noise_probability = s.noise_probability;
        f.noise_delay = s.noise_delay;
        f.drop_seed = mix_seed(s.seed, 0xD509);
        f.noise_seed = mix_seed(s.seed, 0x4015E);
        return f;
    }

    bool jobs_done_() const { return jobs_complete_ == spec_.jobs.size(); }

    // ---------------- initialization ----------------
    void init_canary() {
        canary_switches_.reserve(topo_.switch_count());
        for (uint32_t s = 0; s < topo_.switch_count(); ++s) {
            SwitchConfig sc = spec_.switch_cfg;
            sc.address = static_cast<uint16_t>(s);
            sc.port_count = topo_.is_edge(topo_.host_count() + s) ? topo_.edge_port_count()
                                                                  : topo_.core_port_count();
            if (sc.port_count % sc.shard_count != 0) sc.shard_count = 1;
            canary_switches_.push_back(std::make_unique<CanarySwitch>(sc));
            // under concurrency the descriptor table is statically partitioned
            if (spec_.jobs.size() > 1) {
                const uint32_t share = sc.table_size / static_cast<uint32_t>(spec_.jobs.size());
                for (size_t j = 0; j < spec_.jobs.size(); ++j)
                    canary_switches_.back()->set_partition(
                        spec_.jobs[j].app_id, static_cast<uint32_t>(j) * share,
                        std::max(1u, share));
            }
        }
        for (size_t j = 0; j < spec_.jobs.size(); ++j) {
            if (!job_of_app_.emplace(spec_.jobs[j].app_id, j).second)
                throw ConfigError("concurrent jobs must use distinct app ids");
            canary_jobs_.push_back(
                std::make_unique<CanaryJob>(spec_.jobs[j], spec_.job_cfg, *this));
            for (const BlockRange& b : canary_jobs_.back()->blocks())
                id_registry_[b.id] = j | (static_cast<uint64_t>(b.sequence) << 32);
        }
        result_.jobs.resize(spec_.jobs.size());
        finished_hosts_.assign(spec_.jobs.size(), 0);
    }

    void init_static() {
        static_engines_.resize(topo_.switch_count());
        static_hosts_.resize(spec_.jobs.size());
        static_blocks_.resize(spec_.jobs.size());
        for (size_t j = 0; j < spec_.jobs.size(); ++j) {
            static_blocks_[j] = packetize(spec_.jobs[j].element_count, spec_.jobs[j].app_id,
                                          spec_.jobs[j].elements_per_packet);
            auto& per_rank = static_hosts_[j];
            per_rank.resize(spec_.jobs[j].hosts.size());
            for (auto& st : per_rank)
                st.block_done.assign(static_blocks_[j].size(), false);
        }
        result_.jobs.resize(spec_.jobs.size());
        finished_hosts_.assign(spec_.jobs.size(), 0);
    }

    void init_ring() {
        ring_hosts_.resize(spec_.jobs.size());
        for (size_t j = 0; j < spec_.jobs.size(); ++j)
            ring_hosts_[j].resize(spec_.jobs[j].hosts.size());
        result_.jobs.resize(spec_.jobs.size());
        finished_hosts_.assign(spec_.jobs.size(), 0);
    }

    void init_background() {
        if (spec_.background_hosts.size() >= 2) {
            bg_ = std::make_unique<CongestionWorkload>(spec_.background_hosts,
                                                       mix_seed(spec_.seed, 0xB6),
                                                       spec_.bg_flow_bytes,
                                                       spec_.bg_reshuffle_period);
            bg_index_of_host_.assign(topo_.host_count(), -1);
            for (size_t i = 0; i < spec_.background_hosts.size(); ++i)
                bg_index_of_host_[spec_.background_hosts[i]] = static_cast<int>(i);
            bg_remaining_.assign(spec_.background_hosts.size(), 0);
            bg_peer_.assign(spec_.background_hosts.size(), 0);
        }
    }

    void start_jobs() {
        if (spec_.algorithm == Algorithm::Canary)
            for (auto& cj : canary_jobs_) cj->start();
        if (spec_.algorithm == Algorithm::StaticTree)
            for (size_t j = 0; j < spec_.jobs.size(); ++j)
                for (uint32_t r = 0; r < spec_.jobs[j].hosts.size(); ++r)
                    static_pump(static_cast<uint32_t>(j), r);
        if (spec_.algorithm == Algorithm::Ring)
            for (size_t j = 0; j < spec_.jobs.size(); ++j)
                for (uint32_t r = 0; r < spec_.jobs[j].hosts.size(); ++r)
                    ring_start(static_cast<uint32_t>(j), r);
        if (bg_)
            for (uint32_t h : spec_.background_hosts) refill_background(h);
    }

    // ---------------- event dispatch ----------------
    void dispatch(const Event& ev) {
        switch (ev.kind) {
        case EvKind::Deliver:
            if (fabric_.absorb_if_dead(ev.a)) return;
            deliver(ev.a, ev.b, ev.c, ev.pkt);
            return;
        case EvKind::PortFree: fabric_.handle_port_free(ev.a, ev.b, now_); return;
        case EvKind::StartService: fabric_.handle_start_service(ev.a, ev.b, now_); return;
        case EvKind::SwitchTimer: on_switch_timer(ev.a, ev.b, ev.c); return;
        case EvKind::HostTimer: {
            const uint32_t job = ev.b >> 27;
            const auto kind = static_cast<HostTimerKind>((ev.b >> 24) & 0x7);
            const uint32_t seq = ev.b & 0xFFFFFF;
            if (spec_.algorithm == Algorithm::Canary)
                canary_jobs_[job]->on_timer(ev.a, kind, seq, ev.c);
            return;
        }
        case EvKind::FailSwitch: {
            fabric_.fail_switch(ev.a, now_);
            const uint32_t sw = ev.a - topo_.host_count();
            if (!canary_switches_.empty()) canary_switches_[sw]->clear_all_state();
            if (!static_engines_.empty()) static_engines_[sw] = StaticSwitchEngine{};
            return;
        }
        }
    }

    void deliver(uint32_t node, uint32_t in_port, uint32_t flags, const PacketPtr& pkt) {
        if (topo_.is_host(node)) deliver_to_host(node, flags, pkt);
        else deliver_to_switch(node, in_port, pkt);
    }

    // ---------------- hosts ----------------
    void deliver_to_host(uint32_t host, uint32_t flags, const PacketPtr& pkt) {
        switch (pkt->kind) {
        case PacketKind::Canary: {
            if (pkt->job < 0 || !canary_jobs_[pkt->job]->is_member(host)) return;
            // Crossing the leader's stack costs the per-packet leader latency.
            if (!pkt->canary.multicast && flags == 0 && spec_.leader_latency > 0) {
                events_.push(now_ + spec_.leader_latency, EvKind::Deliver, host, 0, 1, pkt);
                return;
            }
            canary_jobs_[pkt->job]->on_canary(host, pkt->canary);
            return;
        }
        case PacketKind::Control:
            if (pkt->ctl.type == CtlType::RingStepAck) ring_on_step_ack(host, pkt->ctl);
            else if (pkt->job >= 0 && spec_.algorithm == Algorithm::Canary)
                canary_jobs_[pkt->job]->on_control(host, pkt->ctl);
            return;
        case PacketKind::StaticBcast: static_host_result(host, pkt); return;
        case PacketKind::RingData: ring_receive(host, pkt); return;
        case PacketKind::StaticData:
        case PacketKind::Background: return; // sinks
        }
    }

    // ---------------- canary switches ----------------
    void deliver_to_switch(uint32_t node, uint32_t in_port, const PacketPtr& pkt) {
        switch (pkt->kind) {
        case PacketKind::Canary: canary_at_switch(node, in_port, pkt); return;
        case PacketKind::StaticData: static_data_at_switch(node, pkt); return;
        case PacketKind::StaticBcast: static_bcast_at_switch(node, pkt); return;
        case PacketKind::Control:
        case PacketKind::RingData:
        case PacketKind::Background: fabric_.route_and_transmit(node, pkt, now_); return;
        }
    }

    void canary_at_switch(uint32_t node, uint32_t in_port, const PacketPtr& pkt) {
        const uint32_t sw = node - topo_.host_count();
        CanarySwitch& eng = *canary_switches_[sw];
        const CanaryPacket& cp = pkt->canary;
#ifdef CANARY_TRACE_ID
        if (cp.id == CANARY_TRACE_ID)
            std::fprintf(stderr, "t=%.3fus sw=%s port=%u ctr=%u mc=%d byp=%d dst=%x\n",
                         to_us(now_), topo_.node_name(node).c_str(), in_port, cp.counter,
                         cp.multicast ? 1 : 0, cp.bypass ? 1 : 0, cp.destination);
#endif
        track_switch_block(node, cp.id, /*received=*/1, 0);

        if (is_switch_destination(cp.destination)) {
            if (pkt->dst_node == node) {
                auto emits = eng.on_restoration_packet(cp);
                track_block_restoration(cp.id);
                for (auto& e : emits) emit_canary(node, e, pkt->job);
                return;
            }
            fabric_.route_and_transmit(node, pkt, now_);
            track_switch_block(node, cp.id, 0, 1);
            return;
        }
        if (cp.bypass) {
            fabric_.route_and_transmit(node, pkt, now_);
            track_switch_block(node, cp.id, 0, 1);
            return;
        }
        if (cp.multicast) {
            auto res = eng.on_broadcast_packet(cp, now_);
            for (auto& e : res.emits) emit_canary(node, e, pkt->job);
            return;
        }
        auto res = eng.on_reduce_packet(cp, in_port, now_);
        if (res.outcome == ReduceOutcome::StoreNew) {
            const auto& d = eng.descriptor_at(res.slot);
            events_.push(eng.timer_deadline(d->created_at), EvKind::SwitchTimer, node,
                         res.slot, d->generation);
        }
        if (res.outcome == ReduceOutcome::Collision) track_block_collision(cp.id);
        for (auto& e : res.emits) emit_canary(node, e, pkt->job);
    }

    void on_switch_timer(uint32_t node, uint32_t slot, uint32_t gen) {
        if (!fabric_.node_alive(node)) return;
        const uint32_t sw = node - topo_.host_count();
        auto res = canary_switches_[sw]->on_timeout(slot, gen, now_);
        for (auto& e : res.emits) emit_canary(node, e, -2);
    }

    void emit_canary(uint32_t node, SwitchEmit& emit, int job_hint) {
        auto sp = std::make_shared<SimPacket>();
        sp->kind = PacketKind::Canary;
        sp->src_host = 0;
        sp->job = job_hint >= -1 ? job_hint : job_of_id(emit.pkt.id);
        sp->wire_bytes = canary_wire_bytes(emit.pkt.data->size());
        sp->dst_node = is_switch_destination(emit.pkt.destination)
                           ? topo_.node_of_switch_address(
                                 static_cast<uint16_t>(emit.pkt.destination & 0xFFFF))
                           : emit.pkt.destination;
        if (emit.pkt.bypass) track_block_bypass(emit.pkt.id);
        sp->canary = std::move(emit.pkt);
        track_switch_block(node, sp->canary.id, 0, 1);
        if (emit.out_port >= 0)
            fabric_.transmit(node, static_cast<uint32_t>(emit.out_port), std::move(sp), now_);
        else
            fabric_.route_and_transmit(node, std::move(sp), now_);
    }

    int job_of_id(uint32_t id) const {
        auto it = id_registry_.find(id);
        return it == id_registry_.end() ? -1 : static_cast<int>(it->second & 0xFFFFFFFF);
    }

    // ---------------- static tree ----------------
    struct StaticHostState {
        std::vector<bool> block_done;
        uint32_t next_unsent = 0;
        uint32_t outstanding = 0;
        uint32_t done = 0;
        bool finished = false;
    };

    void static_pump(uint32_t job, uint32_t rank) {
        auto& st = static_hosts_[job][rank];
        const auto& js = spec_.jobs[job];
        const uint32_t blocks = static_cast<uint32_t>(st.block_done.size());
        if (blocks == 0) {
            static_finish_rank(job, rank);
            return;
        }
        while (st.next_unsent < blocks && st.outstanding < spec_.static_window) {
            const uint32_t seq = st.next_unsent++;
            ++st.outstanding;
            const uint32_t tree = spec_.trees_per_job[job].tree_of_block(seq);
            auto sp = std::make_shared<SimPacket>();
            sp->kind = PacketKind::StaticData;
            sp->src_host = js.hosts[rank];
            sp->dst_node = topo_.core_node(spec_.trees_per_job[job].trees[tree].root_core);
            sp->job = static_cast<int>(job);
            sp->noise_eligible = true;
            sp->tree = tree;
            sp->block_seq = seq;
            sp->counter = 1;
            sp->wire_bytes = canary_wire_bytes(js.elements_per_packet);
            sp->data = make_payload(js.inputs.block_slice(rank, static_blocks_[job][seq],
                                                          js.elements_per_packet));
            fabric_.transmit(js.hosts[rank], 0, std::move(sp), now_);
        }
    }

    void static_data_at_switch(uint32_t node, const PacketPtr& pkt) {
        const uint32_t sw = node - topo_.host_count();
        const StaticTree& tree = spec_.trees_per_job[pkt->job].trees[pkt->tree];
        StaticSwitchEngine& eng = static_engines_[sw];
        const uint64_t key = static_block_key(pkt->job, pkt->tree, pkt->block_seq);
        std::vector<StaticSwitchEngine::Emit> emits;
        if (topo_.is_edge(node)) {
            const uint32_t e = topo_.edge_index(node);
            emits = eng.on_contribution(key, tree.edge_expected[e], pkt->counter, pkt->data,
                                        /*at_root=*/false,
                                        topo_.up_port_to_core(tree.root_core),
                                        /*child_ports=*/0);
        } else {
            emits = eng.on_contribution(key, tree.root_expected, pkt->counter, pkt->data,
                                        /*at_root=*/true, 0, tree.root_child_edges);
        }
        for (auto& em : emits) emit_static(node, *pkt, em);
    }

    void static_bcast_at_switch(uint32_t node, const PacketPtr& pkt) {
        const uint32_t sw = node - topo_.host_count();
        const StaticTree& tree = spec_.trees_per_job[pkt->job].trees[pkt->tree];
        if (!topo_.is_edge(node)) return; // only edges replicate downward
        const uint32_t e = topo_.edge_index(node);
        auto emits = static_engines_[sw].on_broadcast(tree.edge_child_ports[e], pkt->data);
        for (auto& em : emits) emit_static(node, *pkt, em);
    }

    void emit_static(uint32_t node, const SimPacket& in, StaticSwitchEngine::Emit& em) {
        auto sp = std::make_shared<SimPacket>();
        sp->kind = em.broadcast ? PacketKind::StaticBcast : PacketKind::StaticData;
        sp->src_host = in.src_host;
        sp->dst_node = 0;
        sp->job = in.job;
        sp->tree = in.tree;
        sp->block_seq = in.block_seq;
        sp->counter = em.counter;
        sp->wire_bytes = in.wire_bytes;
        sp->data = std::move(em.data);
        fabric_.transmit(node, em.port, std::move(sp), now_);
    }

    void static_host_result(uint32_t host, const PacketPtr& pkt) {
        const uint32_t job = static_cast<uint32_t>(pkt->job);
        const auto& js = spec_.jobs[job];
        uint32_t rank = 0;
        for (; rank < js.hosts.size(); ++rank)
            if (js.hosts[rank] == host) break;
        auto& st = static_hosts_[job][rank];
        if (st.block_done[pkt->block_seq]) return;
        st.block_done[pkt->block_seq] = true;
        ++st.done;
        --st.outstanding;
        block_delivered(host, pkt->block_seq, *pkt->data);
        static_pump(job, rank);
        if (st.done == st.block_done.size()) static_finish_rank(job, rank);
    }

    void static_finish_rank(uint32_t job, uint32_t rank) {
        auto& st = static_hosts_[job][rank];
        if (st.finished) return;
        st.finished = true;
        JobResult& jr = result_.jobs[job];
        jr.last_finalize = std::max(jr.last_finalize, now_);
        job_finished(spec_.jobs[job].hosts[rank], now_);
    }

    // ---------------- ring ----------------
    struct RingHostState {
        Payload vec;
        uint32_t global_step = 0;  // next step whose chunk we are waiting for
        uint32_t next_send = 0;    // next step whose chunk we may transmit
        uint32_t acked_below = 0;  // successor consumed our steps < this
        std::map<uint32_t, uint32_t> got;          // step -> packets received
        std::map<uint32_t, std::vector<PacketPtr>> buffered; // out-of-order steps
        bool finished = false;
    };

    uint32_t ring_n(uint32_t job) const {
        return static_cast<uint32_t>(spec_.jobs[job].hosts.size());
    }

    void ring_start(uint32_t job, uint32_t rank) {
        auto& rs = ring_hosts_[job][rank];
        const auto& js = spec_.jobs[job];
        rs.vec.resize(js.element_count);
        for (uint32_t i = 0; i < js.element_count; ++i)
            rs.vec[i] = js.inputs.element(rank, i);
        if (ring_n(job) == 1 || js.element_count == 0) {
            ring_finish(job, rank);
            return;
        }
        ring_try_send(job, rank);
    }

    // Double-buffered rendezvous: step g may leave once our receives cover
    // step g-1 and the successor consumed step g-2, so transfers pipeline but
    // at most two chunks ride one ring edge at a time.
    void ring_try_send(uint32_t job, uint32_t rank) {
        auto& rs = ring_hosts_[job][rank];
        const uint32_t total = 2 * (ring_n(job) - 1);
        while (rs.next_send < total && rs.next_send <= rs.global_step &&
               rs.acked_below + 1 >= rs.next_send) {
            ring_send_step(job, rank, rs.next_send);
            ++rs.next_send;
        }
    }

    uint32_t ring_send_chunk_index(uint32_t job, uint32_t rank, uint32_t g) const {
        const uint32_t n = ring_n(job);
        return g < n - 1 ? ring_rs_send_chunk(rank, g, n)
                         : ring_ag_send_chunk(rank, g - (n - 1), n);
    }

    void ring_send_step(uint32_t job, uint32_t rank, uint32_t g) {
        const auto& js = spec_.jobs[job];
        const uint32_t n = ring_n(job);
        const uint32_t chunk = ring_send_chunk_index(job, rank, g);
        const ChunkRange range = ring_chunk(chunk, n, js.element_count);
        const auto& vec = ring_hosts_[job][rank].vec;
        const uint32_t dst = js.hosts[(rank + 1) % n];
        const uint32_t E = js.elements_per_packet;
        const uint32_t pkts = std::max(1u, (range.count + E - 1) / E);
        for (uint32_t p = 0; p < pkts; ++p) {
            const uint32_t off = range.first + p * E;
            const uint32_t cnt = range.count == 0 ? 0 : std::min(E, range.first + range.count - off);
            auto sp = std::make_shared<SimPacket>();
            sp->kind = PacketKind::RingData;
            sp->src_host = js.hosts[rank];
            sp->dst_node = dst;
            sp->job = static_cast<int>(job);
            sp->noise_eligible = true;
            sp->ring_step = g;
            sp->elem_offset = off;
            sp->msg_packets = pkts;
            sp->wire_bytes = static_cast<int64_t>(kHeaderBytes) + 4 * cnt;
            Payload chunk_data(vec.begin() + off, vec.begin() + off + cnt);
            sp->data = make_payload(std::move(chunk_data));
            fabric_.transmit(js.hosts[rank], 0, std::move(sp), now_);
        }
    }

    void ring_receive(uint32_t host, const PacketPtr& pkt) {
        const uint32_t job = static_cast<uint32_t>(pkt->job);
        const auto& js = spec_.jobs[job];
        uint32_t rank = 0;
        for (; rank < js.hosts.size(); ++rank)
            if (js.hosts[rank] == host) break;
        auto& rs = ring_hosts_[job][rank];
        if (pkt->ring_step != rs.global_step) {
            rs.buffered[pkt->ring_step].push_back(pkt); // adaptive paths reorder
            return;
        }
        ring_apply(job, rank, pkt);
    }

    void ring_apply(uint32_t job, uint32_t rank, const PacketPtr& pkt) {
        auto& rs = ring_hosts_[job][rank];
        const uint32_t n = ring_n(job);
        const uint32_t g = pkt->ring_step;
        const bool reduce_phase = g < n - 1;
        for (size_t i = 0; i < pkt->data->size(); ++i) {
            if (reduce_phase) rs.vec[pkt->elem_offset + i] += (*pkt->data)[i];
            else rs.vec[pkt->elem_offset + i] = (*pkt->data)[i];
        }
        if (++rs.got[g] < pkt->msg_packets) return;

        // step complete: release the predecessor, advance, drain buffers
        const auto& js = spec_.jobs[job];
        const uint32_t pred = js.hosts[(rank + n - 1) % n];
        ControlMsg ack;
        ack.type = CtlType::RingStepAck;
        ack.hop = g;
        ack.requester = js.hosts[rank];
        send_control(js.hosts[rank], pred, ack);

        rs.global_step = g + 1;
        ring_try_send(job, rank); // a finishing rank still owes its last chunk
        if (g + 1 < 2 * (n - 1)) {
            auto it = rs.buffered.find(rs.global_step);
            if (it != rs.buffered.end()) {
                auto pkts = std::move(it->second);
                rs.buffered.erase(it);
                for (auto& p : pkts) ring_apply(job, rank, p);
            }
        } else {
            ring_finish(job, rank);
        }
    }

    void ring_on_step_ack(uint32_t host, const ControlMsg& msg) {
        const int job = host_job_[host];
        if (job < 0) return;
        const auto& js = spec_.jobs[job];
        uint32_t rank = 0;
        for (; rank < js.hosts.size(); ++rank)
            if (js.hosts[rank] == host) break;
        auto& rs = ring_hosts_[job][rank];
        rs.acked_below = std::max(rs.acked_below, msg.hop + 1);
        ring_try_send(job, rank);
    }

    void ring_finish(uint32_t job, uint32_t rank) {
        auto& rs = ring_hosts_[job][rank];
        if (rs.finished) return;
        rs.finished = true;
        if (spec_.verify && !ring_result_matches(job, rs.vec)) result_.jobs[job].correct = false;
        result_.jobs[job].last_finalize = std::max(result_.jobs[job].last_finalize, now_);
        job_finished(spec_.jobs[job].hosts[rank], now_);
    }

    // ---------------- background ----------------
    void refill_background(uint32_t host) {
        if (!bg_ || jobs_complete_ == spec_.jobs.size()) return;
        const int idx = bg_index_of_host_[host];
        if (idx < 0) return;
        // the NIC pulls one packet at a time: line-rate injection, no backlog
        if (bg_remaining_[idx] <= 0) {
            bg_peer_[idx] = bg_->next_peer(static_cast<size_t>(idx), now_);
            bg_remaining_[idx] = bg_->flow_bytes();
        }
        const int64_t payload = 4 * static_cast<int64_t>(spec_.bg_payload_elements);
        const int64_t carry = std::min<int64_t>(payload, bg_remaining_[idx]);
        auto sp = std::make_shared<SimPacket>();
        sp->kind = PacketKind::Background;
        sp->src_host = host;
        sp->dst_node = bg_peer_[idx];
        sp->job = -1;
        sp->wire_bytes = static_cast<int64_t>(kHeaderBytes) + carry;
        bg_remaining_[idx] -= carry;
        fabric_.transmit(host, 0, std::move(sp), now_);
    }

    // ---------------- verification ----------------
    bool expected_matches(int job, uint32_t seq, const Payload& got) {
        const Payload& exp = expected_block(job, seq);
        return exp == got;
    }

    const Payload& expected_block(int job, uint32_t seq) {
        const uint64_t key = (static_cast<uint64_t>(job) << 32) | seq;
        auto it = expected_cache_.find(key);
        if (it != expected_cache_.end()) return it->second;
        const auto& js = spec_.jobs[job];
        BlockRange b;
        b.sequence = seq;
        b.first_element = seq * js.elements_per_packet;
        b.element_count =
            std::min(js.elements_per_packet, js.element_count - b.first_element);
        Payload exp = js.inputs.expected_block(static_cast<uint32_t>(js.hosts.size()), b,
                                               js.elements_per_packet);
        return expected_cache_.emplace(key, std::move(exp)).first->second;
    }

    bool ring_result_matches(uint32_t job, const Payload& vec) {
        const auto& js = spec_.jobs[job];
        if (ring_expected_.size() <= job) ring_expected_.resize(job + 1);
        Payload& exp = ring_expected_[job];
        if (exp.empty() && js.element_count > 0) {
            exp.assign(js.element_count, 0);
            for (uint32_t r = 0; r < js.hosts.size(); ++r)
                for (uint32_t i = 0; i < js.element_count; ++i)
                    exp[i] += js.inputs.element(r, i);
        }
        return vec == exp;
    }

    // ---------------- block tracing ----------------
    void track_block_collision(uint32_t id) {
        if (!spec_.track_block_stats) return;
        ++result_.block_traces[trace_key(id)].collisions;
    }
    void track_block_bypass(uint32_t id) {
        if (!spec_.track_block_stats) return;
        ++result_.block_traces[trace_key(id)].bypass_packets;
    }
    void track_block_restoration(uint32_t id) {
        if (!spec_.track_block_stats) return;
        ++result_.block_traces[trace_key(id)].restoration_packets;
    }
    uint64_t trace_key(uint32_t id) {
        auto it = id_registry_.find(id);
        if (it == id_registry_.end()) return 0xFFFFFFFF00000000ULL | id;
        const uint32_t job = static_cast<uint32_t>(it->second & 0xFFFFFFFF);
        const uint32_t seq = static_cast<uint32_t>(it->second >> 32);
        return (static_cast<uint64_t>(job) << 32) | seq;
    }
    void track_switch_block(uint32_t node, uint32_t id, uint32_t recv, uint32_t emit) {
        if (!spec_.track_block_stats) return;
        auto& t = result_.switch_block_traces[(static_cast<uint64_t>(node) << 32) | id];
        t.received += recv;
        t.emitted += emit;
    }

    void finish_result() {
        result_.end_time = now_;
        result_.fabric = fabric_.counters();
        result_.links = fabric_.link_stats();
        result_.link_names = fabric_.link_names();
        for (auto& sw : canary_switches_) {
            const auto& st = sw->stats();
            result_.collisions += st.collisions;
            result_.stragglers += st.stragglers;
            result_.early_completions += st.early_completions;
            result_.timeout_emissions += st.timeout_emissions;
            result_.restorations_served += st.restorations_served;
            result_.broadcast_drops += st.broadcast_drops;
            result_.stale_evictions += st.stale_evictions;
            result_.peak_descriptor_bytes =
                std::max(result_.peak_descriptor_bytes, st.peak_descriptor_bytes);
        }
        for (size_t j = 0; j < canary_jobs_.size(); ++j)
            result_.jobs[j].canary = canary_jobs_[j]->stats();
    }

    ScenarioSpec spec_;
    Topology topo_;
    EventQueue events_;
    Fabric fabric_;
    SimTime now_ = 0;

    std::vector<int> host_job_;
    std::vector<std::unique_ptr<CanarySwitch>> canary_switches_;
    std::vector<std::unique_ptr<CanaryJob>> canary_jobs_;
    std::vector<StaticSwitchEngine> static_engines_;
    std::vector<std::vector<StaticHostState>> static_hosts_;
    std::vector<std::vector<BlockRange>> static_blocks_;
    std::vector<std::vector<RingHostState>> ring_hosts_;
    std::vector<Payload> ring_expected_;
    std::unique_ptr<CongestionWorkload> bg_;
    std::vector<int> bg_index_of_host_;
    std::vector<int64_t> bg_remaining_;
    std::vector<uint32_t> bg_peer_;

    std::unordered_map<uint32_t, uint64_t> id_registry_; // id -> job | seq<<32
    std::map<uint8_t, uint64_t> job_of_app_;
    std::unordered_map<uint64_t, Payload> expected_cache_;
    std::vector<uint32_t> finished_hosts_;
    uint32_t jobs_complete_ = 0;
    RunResult result_;
};

} // namespace canary
