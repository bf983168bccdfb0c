#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "canary/config.hpp"
#include "canary/metrics.hpp"
#include "canary/simulation.hpp"

namespace canary {

struct Placement {
    std::vector<std::vector<uint32_t>> job_hosts; // one list per concurrent job
    std::vector<uint32_t> background_hosts;
};

// Random disjoint host sets for one repetition: allreduce hosts first, then
// congestion hosts, leftovers idle. Identical for every algorithm under the
// same (seed, repetition), which keeps comparisons paired.
inline Placement draw_placement(const ExperimentConfig& cfg, uint32_t repetition) {
    const uint32_t hosts =
        cfg.topology_edge_switches * cfg.topology_hosts_per_edge;
    std::vector<uint32_t> order(hosts);
    for (uint32_t h = 0; h < hosts; ++h) order[h] = h;
    Rng rng(mix_seed(cfg.seed, 0x91ACE, repetition));
    for (uint32_t i = hosts; i > 1; --i)
        std::swap(order[i - 1], order[rng.next_below(i)]);

    const uint32_t n_allreduce =
        static_cast<uint32_t>(cfg.allreduce_host_fraction * hosts);
    const uint32_t n_congestion =
        static_cast<uint32_t>(cfg.congestion_host_fraction * hosts);

    Placement p;
    p.job_hosts.resize(cfg.concurrent_jobs);
    const uint32_t per_job = n_allreduce / cfg.concurrent_jobs;
    for (uint32_t j = 0; j < cfg.concurrent_jobs; ++j)
        for (uint32_t k = 0; k < per_job; ++k)
            p.job_hosts[j].push_back(order[j * per_job + k]);
    for (uint32_t k = 0; k < n_congestion; ++k)
        p.background_hosts.push_back(order[n_allreduce + k]);
    return p;
}

// Loss-detection default: twice a round trip measured through the aggregation
// path (per-hop latency, switch dwell, serialization) plus queueing slack.
inline SimTime derive_retransmit_timeout(const ExperimentConfig& cfg) {
    const Topology topo(cfg.scale(), cfg.bandwidth_bps(), nanoseconds(cfg.per_hop_latency_ns));
    const SimTime frame = serialization_time(
        canary_wire_bytes(cfg.elements_per_packet) + kFramingOverheadBytes,
        cfg.bandwidth_bps());
    const SimTime one_way = topo.diameter_hops() *
                            (topo.latency() + microseconds(cfg.switch_timeout_us) + frame);
    const SimTime rtt = 2 * one_way + microseconds(cfg.leader_latency_us);
    const SimTime drain =
        serialization_time(cfg.queue_capacity_bytes, cfg.bandwidth_bps());
    return 2 * rtt + 2 * drain;
}

inline ScenarioSpec build_scenario(const ExperimentConfig& cfg, uint32_t repetition) {
    ScenarioSpec s;
    s.scale = cfg.scale();
    s.bandwidth_bps = cfg.bandwidth_bps();
    s.hop_latency = nanoseconds(cfg.per_hop_latency_ns);
    s.queue_capacity_bytes = cfg.queue_capacity_bytes;
    s.bg_admission_bytes = cfg.bg_admission_bytes;
    s.policy = cfg.policy_enum();
    s.algorithm = cfg.algorithm_enum();
    s.static_window = cfg.static_window_blocks;
    s.bg_flow_bytes = cfg.flow_bytes;
    s.bg_reshuffle_period = microseconds(cfg.reshuffle_period_us);
    s.bg_payload_elements = cfg.elements_per_packet;
    s.leader_latency = microseconds(cfg.leader_latency_us);
    s.drop_rate = cfg.drop_rate;
    s.noise_probability = cfg.noise_probability;
    s.noise_delay = microseconds(cfg.noise_delay_us);
    s.fail_core = cfg.fail_core;
    s.fail_at = microseconds(cfg.fail_at_us);
    s.seed = mix_seed(cfg.seed, 0x5EED, repetition);
    s.horizon = microseconds(cfg.horizon_us);
    s.verify = cfg.verify;
    s.track_block_stats = cfg.track_block_stats;

    s.switch_cfg.table_size = cfg.table_size;
    s.switch_cfg.shard_count = cfg.shard_count;
    s.switch_cfg.timeout = microseconds(cfg.switch_timeout_us);
    s.switch_cfg.timer_granularity = microseconds(cfg.timer_granularity_us);
    s.switch_cfg.hash_seed = mix_seed(cfg.seed, 0xA5A5, repetition);
    s.switch_cfg.early_completion = cfg.early_completion;
    s.switch_cfg.stale_horizon = microseconds(cfg.stale_horizon_us);

    s.job_cfg.retransmit_timeout = cfg.retransmit_timeout_us > 0
                                       ? microseconds(cfg.retransmit_timeout_us)
                                       : derive_retransmit_timeout(cfg);
    s.job_cfg.reissue_cooldown = s.job_cfg.retransmit_timeout;
    s.job_cfg.max_retries = cfg.max_retries;
    s.job_cfg.window = cfg.max_outstanding_blocks;

    const Placement placement = draw_placement(cfg, repetition);
    s.background_hosts = placement.background_hosts;
    const Topology topo(s.scale, s.bandwidth_bps, s.hop_latency);
    for (uint32_t j = 0; j < cfg.concurrent_jobs; ++j) {
        JobSpec js;
        js.app_id = static_cast<uint8_t>(cfg.app_id + j);
        js.hosts = placement.job_hosts[j];
        js.element_count = static_cast<uint32_t>(cfg.allreduce_bytes / 4);
        js.elements_per_packet = cfg.elements_per_packet;
        js.fixed_leader_rank = cfg.fixed_leader_rank;
        js.inputs = InputModel(mix_seed(cfg.seed, 0x1295, repetition * 64 + j),
                               js.element_count);
        s.jobs.push_back(std::move(js));
        if (s.algorithm == Algorithm::StaticTree)
            s.trees_per_job.push_back(
                build_static_trees(topo, placement.job_hosts[j], cfg.static_tree_count,
                                   mix_seed(cfg.seed, 0x7265, repetition * 64 + j)));
    }
    return s;
}

struct RepetitionOutcome {
    RunResult result;
    double goodput_gbps = 0;     // mean per-job goodput
    double runtime_us = 0;       // slowest job
    double avg_utilization_pct = 0;
    uint32_t zero_links = 0;
};

inline RepetitionOutcome summarize_run(const ExperimentConfig& cfg, RunResult&& rr) {
    RepetitionOutcome o;
    o.result = std::move(rr);
    double goodput_sum = 0;
    for (const auto& j : o.result.jobs) {
        const double rt_us = to_us(j.runtime);
        o.runtime_us = std::max(o.runtime_us, rt_us);
        if (rt_us > 0)
            goodput_sum += 8.0 * static_cast<double>(cfg.allreduce_bytes) / (rt_us * 1000.0);
    }
    o.goodput_gbps = o.result.jobs.empty()
                         ? 0
                         : goodput_sum / static_cast<double>(o.result.jobs.size());
    std::vector<int64_t> bytes;
    bytes.reserve(o.result.links.size());
    for (const auto& l : o.result.links) bytes.push_back(l.sent_bytes);
    if (!bytes.empty() && o.result.end_time > 0) {
        const auto dist = link_utilization_distribution(
            bytes, static_cast<double>(cfg.bandwidth_bps()), to_s(o.result.end_time));
        o.avg_utilization_pct = dist.average_pct;
        o.zero_links = dist.zero_links;
    }
    return o;
}

// Run every repetition of a config and assemble the long-format table.
inline MetricsTable run_experiment(const ExperimentConfig& cfg,
                                   std::vector<RunResult>* keep_results = nullptr) {
    MetricsTable table;
    for (uint32_t rep = 0; rep < cfg.repetitions; ++rep) {
        Simulation sim(build_scenario(cfg, rep));
        RepetitionOutcome o = summarize_run(cfg, sim.run());
        const std::string label = std::to_string(rep);
        table.add(label, "goodput_gbps", o.goodput_gbps);
        table.add(label, "runtime_us", o.runtime_us);
        table.add(label, "reduce_runtime_us",
                  o.result.jobs.empty() ? 0 : to_us(o.result.jobs[0].last_finalize));
        table.add(label, "avg_link_utilization_pct", o.avg_utilization_pct);
        table.add(label, "zero_util_links", o.zero_links);
        table.add(label, "all_correct", o.result.all_correct() ? 1 : 0);
        table.add(label, "complete", o.result.horizon_exceeded ? 0 : 1);
        if (o.result.jobs.size() > 1)
            for (size_t j = 0; j < o.result.jobs.size(); ++j)
                table.add(label, "goodput_gbps_job" + std::to_string(j),
                          o.result.jobs[j].runtime > 0
                              ? 8.0 * static_cast<double>(cfg.allreduce_bytes) /
                                    (to_us(o.result.jobs[j].runtime) * 1000.0)
                              : 0);
        uint64_t retx = 0, reissues = 0, fallbacks = 0, unicasts = 0;
        for (const auto& j : o.result.jobs) {
            retx += j.canary.retransmission_requests;
            reissues += j.canary.reissues;
            fallbacks += j.canary.fallbacks;
            unicasts += j.canary.result_unicasts;
        }
        table.add(label, "retransmission_requests", static_cast<double>(retx));
        table.add(label, "reissues", static_cast<double>(reissues));
        table.add(label, "fallbacks", static_cast<double>(fallbacks));
        table.add(label, "result_unicasts", static_cast<double>(unicasts));
        table.add(label, "collisions", static_cast<double>(o.result.collisions));
        table.add(label, "stragglers", static_cast<double>(o.result.stragglers));
        table.add(label, "early_completions",
                  static_cast<double>(o.result.early_completions));
        table.add(label, "timeout_emissions",
                  static_cast<double>(o.result.timeout_emissions));
        table.add(label, "restoration_packets",
                  static_cast<double>(o.result.restorations_served));
        table.add(label, "broadcast_drops", static_cast<double>(o.result.broadcast_drops));
        table.add(label, "stale_evictions", static_cast<double>(o.result.stale_evictions));
        table.add(label, "injected_drops",
                  static_cast<double>(o.result.fabric.injected_drops));
        table.add(label, "tail_drops", static_cast<double>(o.result.fabric.tail_drops));
        table.add(label, "tail_drops_job",
                  static_cast<double>(o.result.fabric.tail_drops_job));
        table.add(label, "routing_violations",
                  static_cast<double>(o.result.fabric.routing_violations));
        table.add(label, "peak_descriptor_bytes",
                  static_cast<double>(o.result.peak_descriptor_bytes));
        if (cfg.emit_per_link && o.result.end_time > 0) {
            for (size_t l = 0; l < o.result.links.size(); ++l) {
                const double pct = 100.0 * static_cast<double>(o.result.links[l].sent_bytes) *
                                   8.0 /
                                   (static_cast<double>(cfg.bandwidth_bps()) *
                                    to_s(o.result.end_time));
                table.add(label, "link_util_pct:" + o.result.link_names[l], pct);
            }
        }
        if (keep_results) keep_results->push_back(std::move(o.result));
    }
    table.append_aggregates();
    return table;
}

// Axis sweep: one full experiment per value, columns keyed by value.
inline std::string apply_axis(ExperimentConfig& cfg, const std::string& axis,
                              const std::string& value) {
    if (axis == "timeout") cfg.switch_timeout_us = std::stod(value);
    else if (axis == "noise_prob") cfg.noise_probability = std::stod(value);
    else if (axis == "concurrency") cfg.concurrent_jobs = static_cast<uint32_t>(std::stoul(value));
    else if (axis == "host_fraction") cfg.allreduce_host_fraction = std::stod(value);
    else if (axis == "size") cfg.allreduce_bytes = std::stoll(value);
    else throw ConfigError("unknown sweep axis: " + axis);
    return value;
}

inline std::string sweep(const ExperimentConfig& base, const std::string& axis,
                         const std::vector<std::string>& values) {
    std::vector<MetricsTable> tables;
    for (const auto& v : values) {
        ExperimentConfig cfg = base;
        apply_axis(cfg, axis, v);
        tables.push_back(run_experiment(cfg));
    }
    return sweep_to_csv(axis, values, tables);
}

struct OracleOutcome {
    uint32_t repetitions = 0;
    uint32_t correct = 0;
    bool all_correct() const { return correct == repetitions; }
};

// Host-based sum check: every host of every job must end with the element-wise
// wrapping sum of all inputs.
inline OracleOutcome run_oracle(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.verify = true;
    OracleOutcome out;
    out.repetitions = c.repetitions;
    for (uint32_t rep = 0; rep < c.repetitions; ++rep) {
        Simulation sim(build_scenario(c, rep));
        if (sim.run().all_correct()) ++out.correct;
    }
    return out;
}

struct CalibrationOutcome {
    double sim_gbps = 0;
    double analytic_gbps = 0;
    double relative_error = 0;
};

// Two hosts inject into one edge switch, which aggregates and forwards the
// combined stream toward a leader behind the core. Line-rate aggregation
// means goodput == payload share of the frame.
inline CalibrationOutcome run_calibration(int64_t allreduce_bytes = 4 * 1024 * 1024) {
    ExperimentConfig cfg;
    cfg.topology_edge_switches = 2;
    cfg.topology_up_ports = 1;
    cfg.topology_hosts_per_edge = 2;
    cfg.allreduce_bytes = allreduce_bytes;
    cfg.allreduce_host_fraction = 0.76; // hosts 0,1 send; host 2 leads
    cfg.congestion_host_fraction = 0;
    cfg.elements_per_packet = 32;
    cfg.fixed_leader_rank = 2;
    cfg.repetitions = 1;
    cfg.seed = 7;

    ScenarioSpec spec = build_scenario(cfg, 0);
    // pin the roles: senders on edge 0, leader on edge 1
    spec.jobs[0].hosts = {0, 1, 2};
    Simulation sim(spec);
    RunResult rr = sim.run();

    CalibrationOutcome out;
    const double reduce_s = to_s(rr.jobs[0].last_finalize);
    out.sim_gbps = 8.0 * static_cast<double>(allreduce_bytes) / reduce_s / 1e9;
    const double frame =
        static_cast<double>(canary_wire_bytes(cfg.elements_per_packet) +
                            kFramingOverheadBytes);
    out.analytic_gbps = cfg.link_bandwidth_gbps * (4.0 * cfg.elements_per_packet) / frame;
    out.relative_error = std::abs(out.sim_gbps - out.analytic_gbps) / out.analytic_gbps;
    return out;
}

} // namespace canary
