#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "canary/errors.hpp"

namespace canary {

// Little's-Law estimate of per-switch descriptor memory for one allreduce:
// (b/8) * (2*d*(l+t) + r) bytes. Independent of data size and host count;
// the MTU-sized descriptor cancels against the packet rate.
inline uint64_t memory_occupancy_model(double bandwidth_bps, double diameter_hops,
                                       double hop_latency_s, double timeout_s,
                                       double leader_latency_s) {
    if (bandwidth_bps < 0 || diameter_hops < 0 || hop_latency_s < 0 || timeout_s < 0 ||
        leader_latency_s < 0)
        throw ConfigError("memory_occupancy_model: negative parameter");
    const double bytes =
        bandwidth_bps / 8.0 *
        (2.0 * diameter_hops * (hop_latency_s + timeout_s) + leader_latency_s);
    return static_cast<uint64_t>(std::llround(bytes));
}

struct UtilizationDistribution {
    std::vector<double> samples_pct; // one per link
    double average_pct = 0.0;
    uint32_t zero_links = 0;
};

// Per-link utilization over a window: bytes*8 / (bandwidth * window).
inline UtilizationDistribution link_utilization_distribution(
    const std::vector<int64_t>& link_bytes, double bandwidth_bps, double window_s) {
    if (link_bytes.empty() || window_s <= 0)
        throw ConfigError("link_utilization_distribution: empty trace or window");
    UtilizationDistribution d;
    d.samples_pct.reserve(link_bytes.size());
    double sum = 0;
    for (int64_t b : link_bytes) {
        const double pct = 100.0 * static_cast<double>(b) * 8.0 / (bandwidth_bps * window_s);
        d.samples_pct.push_back(pct);
        sum += pct;
        if (b == 0) ++d.zero_links;
    }
    d.average_pct = sum / static_cast<double>(link_bytes.size());
    return d;
}

inline std::string format_metric_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// Long-format results: one row per (run, metric). Aggregate mean/stddev rows
// are appended per metric and recomputable from the raw rows.
class MetricsTable {
public:
    void add(const std::string& run_label, const std::string& metric, double value) {
        rows_.push_back({run_label, metric, value});
    }

    void append_aggregates() {
        // insertion-ordered metric list over numeric runs
        std::vector<std::string> order;
        std::map<std::string, std::vector<double>> values;
        for (const auto& r : rows_) {
            if (!is_numeric_label(r.run)) continue;
            if (!values.count(r.metric)) order.push_back(r.metric);
            values[r.metric].push_back(r.value);
        }
        for (const auto& m : order) {
            const auto& v = values[m];
            double mean = 0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0;
            for (double x : v) var += (x - mean) * (x - mean);
            const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1))
                                           : 0.0;
            rows_.push_back({"mean", m, mean});
            rows_.push_back({"stddev", m, sd});
        }
    }

    std::string to_csv() const {
        std::string out = "run,metric,value\n";
        for (const auto& r : rows_) {
            out += r.run;
            out += ',';
            out += r.metric;
            out += ',';
            out += format_metric_value(r.value);
            out += '\n';
        }
        return out;
    }

    // All values of a metric across numeric runs.
    std::vector<double> metric_values(const std::string& metric) const {
        std::vector<double> v;
        for (const auto& r : rows_)
            if (r.metric == metric && is_numeric_label(r.run)) v.push_back(r.value);
        return v;
    }

    double aggregate(const std::string& run_label, const std::string& metric) const {
        for (const auto& r : rows_)
            if (r.run == run_label && r.metric == metric) return r.value;
        throw SimError("metric not found: " + run_label + "/" + metric);
    }

    double mean(const std::string& metric) const { return aggregate("mean", metric); }

    struct Row {
        std::string run;
        std::string metric;
        double value;
    };
    const std::vector<Row>& rows() const { return rows_; }

private:
    static bool is_numeric_label(const std::string& s) {
        return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
    }
    std::vector<Row> rows_;
};

// Sweep output: rows keyed by (run, metric), one value column per axis point.
inline std::string sweep_to_csv(const std::string& axis,
                                const std::vector<std::string>& axis_values,
                                const std::vector<MetricsTable>& tables) {
    std::string out = "run,metric";
    for (const auto& v : axis_values) out += "," + axis + "=" + v;
    out += '\n';
    if (tables.empty()) return out;
    // row identity from the first table; all tables share the shape
    for (const auto& row : tables[0].rows()) {
        out += row.run + "," + row.metric;
        for (const auto& t : tables) {
            bool found = false;
            for (const auto& r2 : t.rows()) {
                if (r2.run == row.run && r2.metric == row.metric) {
                    out += ',' + format_metric_value(r2.value);
                    found = true;
                    break;
                }
            }
            if (!found) out += ",";
        }
        out += '\n';
    }
    return out;
}

} // namespace canary
