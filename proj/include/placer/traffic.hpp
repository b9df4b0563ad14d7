#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "placer/rng.hpp"
#include "placer/topology.hpp"

namespace placer {

enum class Protocol { TCP, UDP };

struct FlowSpec {
    int id = 0;
    int src = 0;
    int dst = 0;
    std::int64_t size_bytes = 0;  // payload
    double start_ms = 0.0;
    Protocol protocol = Protocol::TCP;
    double udp_rate_mbps = 0.0;  // UDP only
};

struct TrafficSequence {
    std::uint64_t seed = 0;
    double horizon_ms = 0.0;
    std::vector<FlowSpec> flows;  // sorted by start_ms

    std::int64_t total_bytes() const {
        std::int64_t sum = 0;
        for (const FlowSpec& f : flows) sum += f.size_bytes;
        return sum;
    }
};

struct TrafficConfig {
    double load_factor = 1.5;        // demand target as multiple of pair capacity
    double tcp_fraction = 0.8;
    double udp_rate_mbps = 5.0;
    double size_median_bytes = 20000.0;
    double size_sigma = 1.8;         // log-space
    double horizon_ms = 2000.0;
    // When non-empty, flows are drawn only between these ordered pairs and
    // demand is calibrated to their capacity. Empty = all distinct pairs.
    std::vector<std::pair<int, int>> hot_pairs;
};

// Capacity of the binding node pair: the smallest max-flow over the candidate
// src/dst pairs that traffic can be drawn between.
inline double demand_capacity_mbps(const Topology& topo, const std::vector<std::pair<int, int>>& pairs = {}) {
    double cap = std::numeric_limits<double>::infinity();
    if (pairs.empty()) {
        for (int s = 0; s < topo.num_nodes(); ++s)
            for (int t = 0; t < topo.num_nodes(); ++t)
                if (s != t) cap = std::min(cap, max_flow_mbps(topo, s, t));
    } else {
        for (const auto& [s, t] : pairs) cap = std::min(cap, max_flow_mbps(topo, s, t));
    }
    return cap;
}

inline TrafficSequence generate_traffic(const Topology& topo, std::uint64_t seed, const TrafficConfig& cfg) {
    if (!(cfg.load_factor > 0.0)) throw std::invalid_argument("traffic config: load_factor must be > 0");
    if (cfg.tcp_fraction < 0.0 || cfg.tcp_fraction > 1.0)
        throw std::invalid_argument("traffic config: tcp_fraction must be in [0,1]");
    if (!(cfg.udp_rate_mbps > 0.0)) throw std::invalid_argument("traffic config: udp_rate_mbps must be > 0");
    if (!(cfg.size_median_bytes > 0.0)) throw std::invalid_argument("traffic config: size_median_bytes must be > 0");
    if (cfg.size_sigma < 0.0) throw std::invalid_argument("traffic config: size_sigma must be >= 0");
    if (!(cfg.horizon_ms > 0.0)) throw std::invalid_argument("traffic config: horizon_ms must be > 0");
    for (const auto& [s, t] : cfg.hot_pairs) {
        if (s < 0 || s >= topo.num_nodes() || t < 0 || t >= topo.num_nodes() || s == t)
            throw std::invalid_argument("traffic config: invalid hot pair " + link_name(s, t));
    }

    const double capacity_mbps = demand_capacity_mbps(topo, cfg.hot_pairs);
    const double target_mbps = cfg.load_factor * capacity_mbps;
    const double mean_size_bytes = cfg.size_median_bytes * std::exp(0.5 * cfg.size_sigma * cfg.size_sigma);
    // flows per ms so that E[arrivals] × E[size] meets the demand target
    const double arrival_rate = target_mbps * 1000.0 / (mean_size_bytes * 8.0);
    const double mu_log = std::log(cfg.size_median_bytes);

    TrafficSequence seq;
    seq.seed = seed;
    seq.horizon_ms = cfg.horizon_ms;
    Rng rng(derive_seed(seed, 0x7261666669633031ULL));
    double t = 0.0;
    int id = 0;
    for (;;) {
        t += rng.exponential(arrival_rate);
        if (!(t < cfg.horizon_ms)) break;
        FlowSpec f;
        f.id = id++;
        f.start_ms = t;
        if (cfg.hot_pairs.empty()) {
            f.src = rng.uniform_int(topo.num_nodes());
            int other = rng.uniform_int(topo.num_nodes() - 1);
            f.dst = other + (other >= f.src ? 1 : 0);
        } else {
            const auto& [s, d] = cfg.hot_pairs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cfg.hot_pairs.size())))];
            f.src = s;
            f.dst = d;
        }
        double size = cfg.size_median_bytes * std::exp(cfg.size_sigma * rng.normal());
        f.size_bytes = std::max<std::int64_t>(1, std::llround(size));
        f.protocol = rng.uniform() < cfg.tcp_fraction ? Protocol::TCP : Protocol::UDP;
        f.udp_rate_mbps = f.protocol == Protocol::UDP ? cfg.udp_rate_mbps : 0.0;
        seq.flows.push_back(f);
    }
    return seq;
}

// Demand rate, not delivery: Σ sizes × 8 bits over the horizon.
inline double offered_load_mbps(const TrafficSequence& seq, double horizon_ms) {
    if (!(horizon_ms > 0.0)) throw std::invalid_argument("offered_load: horizon must be > 0");
    return static_cast<double>(seq.total_bytes()) * 8.0 / (horizon_ms * 1000.0);
}

// key=value file with keys: seed, load_factor, tcp_fraction, udp_rate_mbps,
// size_median_bytes, size_sigma. Returns (seed, config).
inline std::pair<std::uint64_t, TrafficConfig> load_traffic_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("traffic config not found: " + path);
    std::uint64_t seed = 0;
    TrafficConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("traffic config: missing '=' on line " + std::to_string(lineno));
        std::string key = line.substr(first, eq - first);
        key.erase(key.find_last_not_of(" \t") + 1);
        std::istringstream val(line.substr(eq + 1));
        bool ok = true;
        if (key == "seed") ok = static_cast<bool>(val >> seed);
        else if (key == "load_factor") ok = static_cast<bool>(val >> cfg.load_factor);
        else if (key == "tcp_fraction") ok = static_cast<bool>(val >> cfg.tcp_fraction);
        else if (key == "udp_rate_mbps") ok = static_cast<bool>(val >> cfg.udp_rate_mbps);
        else if (key == "size_median_bytes") ok = static_cast<bool>(val >> cfg.size_median_bytes);
        else if (key == "size_sigma") ok = static_cast<bool>(val >> cfg.size_sigma);
        else throw std::invalid_argument("traffic config: unknown key '" + key + "' on line " + std::to_string(lineno));
        if (!ok) throw std::invalid_argument("traffic config: bad value for '" + key + "' on line " + std::to_string(lineno));
    }
    return {seed, cfg};
}

}  // namespace placer
