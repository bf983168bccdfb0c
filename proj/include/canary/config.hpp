#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "canary/errors.hpp"
#include "canary/simulation.hpp"

namespace canary {

// Flat key = value experiment description. '#' starts a comment; unknown keys
// are rejected so typos fail loudly.
struct ExperimentConfig {
    // topology
    uint32_t topology_edge_switches = 8;
    uint32_t topology_up_ports = 8;
    uint32_t topology_hosts_per_edge = 8;
    double link_bandwidth_gbps = 100.0;
    double per_hop_latency_ns = 300.0;
    int64_t queue_capacity_bytes = 1024 * 1024;
    int64_t bg_admission_bytes = 128 * 1024;
    std::string routing_policy = "adaptive";

    // workload
    std::string algorithm = "canary"; // canary | ring | static_tree
    uint32_t static_tree_count = 1;
    int64_t allreduce_bytes = 4 * 1024 * 1024;
    double allreduce_host_fraction = 0.5;
    double congestion_host_fraction = 0.0;
    uint32_t concurrent_jobs = 1;
    uint32_t elements_per_packet = 256;
    int64_t flow_bytes = 64 * 1024;
    double reshuffle_period_us = 100.0;

    // canary protocol
    double switch_timeout_us = 1.0;
    double timer_granularity_us = 0.0;
    uint32_t table_size = 32768;
    uint32_t shard_count = 2;
    double leader_latency_us = 1.0;
    bool early_completion = true;
    double retransmit_timeout_us = 0.0; // 0: derived from the topology
    uint32_t max_retries = 3;
    uint32_t max_outstanding_blocks = 0; // canary send window; 0 = unlimited
    uint32_t static_window_blocks = 256;
    double stale_horizon_us = 1000.0;

    // perturbations
    double noise_probability = 0.0;
    double noise_delay_us = 1.0;
    double drop_rate = 0.0;
    int32_t fail_core = -1;
    double fail_at_us = 0.0;

    // harness
    uint64_t seed = 42;
    uint32_t repetitions = 5;
    bool verify = true;
    bool track_block_stats = false;
    double horizon_us = 2e6;
    int32_t fixed_leader_rank = -1;
    uint32_t app_id = 1;
    bool emit_per_link = false;

    Algorithm algorithm_enum() const {
        if (algorithm == "canary") return Algorithm::Canary;
        if (algorithm == "ring") return Algorithm::Ring;
        if (algorithm == "static_tree") return Algorithm::StaticTree;
        throw ConfigError("unknown algorithm: " + algorithm);
    }
    RoutingPolicy policy_enum() const {
        if (routing_policy == "adaptive") return RoutingPolicy::Adaptive;
        if (routing_policy == "static_hash") return RoutingPolicy::StaticHash;
        throw ConfigError("unknown routing_policy: " + routing_policy);
    }
    int64_t bandwidth_bps() const {
        return static_cast<int64_t>(link_bandwidth_gbps * 1e9);
    }
    TopologyScale scale() const {
        return {topology_edge_switches, topology_up_ports, topology_hosts_per_edge};
    }
};

namespace detail {
inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("expected a boolean, got '" + v + "'");
}
} // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const size_t a = s.find_first_not_of(" \t\r");
            const size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    auto take = [&](const char* key, auto setter) {
        auto it = kv.find(key);
        if (it != kv.end()) {
            setter(it->second);
            kv.erase(it);
        }
    };
    auto as_u32 = [](const std::string& v) { return static_cast<uint32_t>(std::stoul(v)); };
    auto as_i32 = [](const std::string& v) { return static_cast<int32_t>(std::stol(v)); };
    auto as_i64 = [](const std::string& v) { return static_cast<int64_t>(std::stoll(v)); };
    auto as_u64 = [](const std::string& v) { return static_cast<uint64_t>(std::stoull(v)); };
    auto as_f = [](const std::string& v) { return std::stod(v); };

    take("topology_edge_switches", [&](auto& v) { cfg.topology_edge_switches = as_u32(v); });
    take("topology_up_ports", [&](auto& v) { cfg.topology_up_ports = as_u32(v); });
    take("topology_hosts_per_edge", [&](auto& v) { cfg.topology_hosts_per_edge = as_u32(v); });
    take("link_bandwidth_gbps", [&](auto& v) { cfg.link_bandwidth_gbps = as_f(v); });
    take("per_hop_latency_ns", [&](auto& v) { cfg.per_hop_latency_ns = as_f(v); });
    take("queue_capacity_bytes", [&](auto& v) { cfg.queue_capacity_bytes = as_i64(v); });
    take("bg_admission_bytes", [&](auto& v) { cfg.bg_admission_bytes = as_i64(v); });
    take("routing_policy", [&](auto& v) { cfg.routing_policy = v; });
    take("algorithm", [&](auto& v) { cfg.algorithm = v; });
    take("static_tree_count", [&](auto& v) { cfg.static_tree_count = as_u32(v); });
    take("allreduce_bytes", [&](auto& v) { cfg.allreduce_bytes = as_i64(v); });
    take("allreduce_host_fraction", [&](auto& v) { cfg.allreduce_host_fraction = as_f(v); });
    take("congestion_host_fraction", [&](auto& v) { cfg.congestion_host_fraction = as_f(v); });
    take("concurrent_jobs", [&](auto& v) { cfg.concurrent_jobs = as_u32(v); });
    take("elements_per_packet", [&](auto& v) { cfg.elements_per_packet = as_u32(v); });
    take("flow_bytes", [&](auto& v) { cfg.flow_bytes = as_i64(v); });
    take("reshuffle_period_us", [&](auto& v) { cfg.reshuffle_period_us = as_f(v); });
    take("switch_timeout_us", [&](auto& v) { cfg.switch_timeout_us = as_f(v); });
    take("timer_granularity_us", [&](auto& v) { cfg.timer_granularity_us = as_f(v); });
    take("table_size", [&](auto& v) { cfg.table_size = as_u32(v); });
    take("shard_count", [&](auto& v) { cfg.shard_count = as_u32(v); });
    take("leader_latency_us", [&](auto& v) { cfg.leader_latency_us = as_f(v); });
    take("early_completion", [&](auto& v) { cfg.early_completion = detail::parse_bool(v); });
    take("retransmit_timeout_us", [&](auto& v) { cfg.retransmit_timeout_us = as_f(v); });
    take("max_retries", [&](auto& v) { cfg.max_retries = as_u32(v); });
    take("max_outstanding_blocks", [&](auto& v) { cfg.max_outstanding_blocks = as_u32(v); });
    take("static_window_blocks", [&](auto& v) { cfg.static_window_blocks = as_u32(v); });
    take("stale_horizon_us", [&](auto& v) { cfg.stale_horizon_us = as_f(v); });
    take("noise_probability", [&](auto& v) { cfg.noise_probability = as_f(v); });
    take("noise_delay_us", [&](auto& v) { cfg.noise_delay_us = as_f(v); });
    take("drop_rate", [&](auto& v) { cfg.drop_rate = as_f(v); });
    take("fail_core", [&](auto& v) { cfg.fail_core = as_i32(v); });
    take("fail_at_us", [&](auto& v) { cfg.fail_at_us = as_f(v); });
    take("seed", [&](auto& v) { cfg.seed = as_u64(v); });
    take("repetitions", [&](auto& v) { cfg.repetitions = as_u32(v); });
    take("verify", [&](auto& v) { cfg.verify = detail::parse_bool(v); });
    take("track_block_stats", [&](auto& v) { cfg.track_block_stats = detail::parse_bool(v); });
    take("horizon_us", [&](auto& v) { cfg.horizon_us = as_f(v); });
    take("fixed_leader_rank", [&](auto& v) { cfg.fixed_leader_rank = as_i32(v); });
    take("app_id", [&](auto& v) { cfg.app_id = as_u32(v); });
    take("emit_per_link", [&](auto& v) { cfg.emit_per_link = detail::parse_bool(v); });

    if (!kv.empty()) throw ConfigError("unknown config key: " + kv.begin()->first);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// Config lint; empty result means runnable.
inline std::vector<std::string> validate_config(const ExperimentConfig& c) {
    std::vector<std::string> issues;
    auto bad = [&](const std::string& m) { issues.push_back(m); };
    if (c.topology_edge_switches == 0 || c.topology_up_ports == 0 ||
        c.topology_hosts_per_edge == 0)
        bad("topology scale parameters must be positive");
    if (c.link_bandwidth_gbps <= 0) bad("link_bandwidth_gbps must be positive");
    if (c.allreduce_host_fraction < 0 || c.congestion_host_fraction < 0 ||
        c.allreduce_host_fraction + c.congestion_host_fraction > 1.0 + 1e-9)
        bad("host fractions must be nonnegative and sum to at most 1");
    if (c.elements_per_packet == 0) bad("elements_per_packet must be >= 1");
    if (c.allreduce_bytes % 4 != 0) bad("allreduce_bytes must be a multiple of 4");
    if (c.table_size == 0) bad("table_size must be >= 1");
    if (c.shard_count == 0) bad("shard_count must be >= 1");
    else {
        const uint32_t p = c.topology_hosts_per_edge + c.topology_up_ports;
        if (p % c.shard_count != 0)
            bad("shard_count must divide the edge switch port count");
    }
    if (c.drop_rate < 0 || c.drop_rate >= 1.0) bad("drop_rate must be in [0, 1)");
    if (c.noise_probability < 0 || c.noise_probability > 1.0)
        bad("noise_probability must be in [0, 1]");
    if (c.concurrent_jobs == 0) bad("concurrent_jobs must be >= 1");
    if (c.repetitions == 0) bad("repetitions must be >= 1");
    try {
        c.algorithm_enum();
    } catch (const ConfigError& e) {
        bad(e.what());
    }
    try {
        c.policy_enum();
    } catch (const ConfigError& e) {
        bad(e.what());
    }
    if (c.algorithm != "canary" && (c.drop_rate > 0 || c.fail_core >= 0))
        bad("loss and failure injection apply to canary runs only");
    if (c.algorithm == "static_tree" &&
        c.static_tree_count > c.topology_up_ports)
        bad("static_tree_count exceeds the number of core switches");
    if (c.fail_core >= static_cast<int32_t>(c.topology_up_ports))
        bad("fail_core is not a valid core switch index");
    if (c.concurrent_jobs > 32) bad("at most 32 concurrent jobs are supported");
    if (c.app_id + c.concurrent_jobs > 256) bad("app ids must fit in 8 bits");
    const uint64_t hosts =
        static_cast<uint64_t>(c.topology_edge_switches) * c.topology_hosts_per_edge;
    const uint64_t job_hosts =
        static_cast<uint64_t>(c.allreduce_host_fraction * static_cast<double>(hosts));
    if (job_hosts < c.concurrent_jobs)
        bad("not enough allreduce hosts for the requested concurrent jobs");
    return issues;
}

} // namespace canary
