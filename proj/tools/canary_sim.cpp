// Experiment driver for the Canary allreduce simulator.
//
//   canary_sim run --config exp.cfg [--out results.csv]
//   canary_sim sweep --config exp.cfg --axis timeout --values 1,2,3
//   canary_sim validate --config exp.cfg
//   canary_sim oracle --config exp.cfg
//   canary_sim calibrate
//   canary_sim shards --ports 8 --shards 2 --bitmap 0x2d

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "canary/canary.hpp"

namespace {

void write_output(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw canary::ConfigError("cannot write output file: " + path);
    out << text;
}

std::vector<std::string> split_values(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Canary congestion-aware in-network allreduce simulator"};
    app.require_subcommand(1);

    std::string config_path, out_path, axis, values_csv;
    uint32_t shard_ports = 8, shard_count = 2;
    std::string bitmap_str = "0x2d";

    auto* run_cmd = app.add_subcommand("run", "run one experiment, emit CSV metrics");
    run_cmd->add_option("--config", config_path, "experiment config file")->required();
    run_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

    auto* sweep_cmd = app.add_subcommand("sweep", "sweep one config axis");
    sweep_cmd->add_option("--config", config_path)->required();
    sweep_cmd->add_option("--axis", axis,
                          "timeout | noise_prob | concurrency | host_fraction | size")
        ->required();
    sweep_cmd->add_option("--values", values_csv, "comma-separated axis values")->required();
    sweep_cmd->add_option("--out", out_path);

    auto* validate_cmd = app.add_subcommand("validate", "lint a config file");
    validate_cmd->add_option("--config", config_path)->required();

    auto* oracle_cmd =
        app.add_subcommand("oracle", "check results against the host-based sum");
    oracle_cmd->add_option("--config", config_path)->required();

    auto* calibrate_cmd = app.add_subcommand(
        "calibrate", "two-host single-switch aggregation goodput check");

    auto* shards_cmd = app.add_subcommand("shards", "print multicast shard rules");
    shards_cmd->add_option("--ports", shard_ports);
    shards_cmd->add_option("--shards", shard_count);
    shards_cmd->add_option("--bitmap", bitmap_str, "children bitmap (hex or decimal)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const auto cfg = canary::load_config(config_path);
            const auto issues = canary::validate_config(cfg);
            if (!issues.empty()) {
                for (const auto& i : issues) std::cerr << "config error: " << i << "\n";
                return 2;
            }
            write_output(canary::run_experiment(cfg).to_csv(), out_path);
            return 0;
        }
        if (sweep_cmd->parsed()) {
            const auto cfg = canary::load_config(config_path);
            const auto issues = canary::validate_config(cfg);
            if (!issues.empty()) {
                for (const auto& i : issues) std::cerr << "config error: " << i << "\n";
                return 2;
            }
            write_output(canary::sweep(cfg, axis, split_values(values_csv)), out_path);
            return 0;
        }
        if (validate_cmd->parsed()) {
            const auto cfg = canary::load_config(config_path);
            const auto issues = canary::validate_config(cfg);
            if (issues.empty()) {
                std::cout << "ok\n";
                return 0;
            }
            for (const auto& i : issues) std::cout << "error: " << i << "\n";
            return 2;
        }
        if (oracle_cmd->parsed()) {
            const auto cfg = canary::load_config(config_path);
            const auto issues = canary::validate_config(cfg);
            if (!issues.empty()) {
                for (const auto& i : issues) std::cerr << "config error: " << i << "\n";
                return 2;
            }
            const auto out = canary::run_oracle(cfg);
            std::cout << (out.all_correct() ? "PASS" : "FAIL") << ": " << out.correct << "/"
                      << out.repetitions << " repetitions match the host-based sum\n";
            return out.all_correct() ? 0 : 1;
        }
        if (calibrate_cmd->parsed()) {
            const auto out = canary::run_calibration();
            std::cout << "simulated " << out.sim_gbps << " Gbps, analytic "
                      << out.analytic_gbps << " Gbps, relative error "
                      << out.relative_error * 100.0 << "%\n";
            return out.relative_error <= 0.10 ? 0 : 1;
        }
        if (shards_cmd->parsed()) {
            const uint64_t bitmap = std::stoull(bitmap_str, nullptr, 0);
            std::cout << canary::shard_rules_text(bitmap, shard_ports, shard_count);
            std::cout << "key space: " << canary::shard_key_space(shard_ports, shard_count)
                      << " entries\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
