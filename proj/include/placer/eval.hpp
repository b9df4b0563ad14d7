#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "placer/geometry.hpp"
#include "placer/mpn.hpp"
#include "placer/ppo.hpp"
#include "placer/sim.hpp"
#include "placer/state_graph.hpp"
#include "placer/traffic.hpp"

namespace placer {

struct Metrics {
    double goodput_mb = 0.0;
    double avg_delay_ms = 0.0;
    double drop_pct = 0.0;
    double fluctuation_pct = 0.0;
};

// Held-out traffic: a seed stream disjoint from the training streams.
inline std::vector<TrafficSequence> eval_sequences(const Topology& topo, std::uint64_t seed, int n_episodes,
                                                   TrafficConfig cfg, double horizon_ms) {
    if (n_episodes < 1) throw std::invalid_argument("eval_sequences: need at least one episode");
    cfg.horizon_ms = horizon_ms;
    std::vector<TrafficSequence> out;
    out.reserve(n_episodes);
    for (int i = 0; i < n_episodes; ++i)
        out.push_back(generate_traffic(topo, derive_seed(seed, STREAM_EVAL_TRAFFIC, i), cfg));
    return out;
}

// Greedy decoding (no sampling): per step, encode the telemetry state graph
// and install the argmin-Δ² tables.
inline Metrics eval_policy_episode(ParamStore& store, const Topology& topo, const TrafficSequence& seq, int horizon,
                                   double step_ms, bool zero_telemetry = false,
                                   std::vector<RoutingTables>* tables_out = nullptr) {
    if (horizon < 1) throw std::invalid_argument("eval_policy_episode: horizon must be positive");
    Simulator sim(topo, seq);
    StateGraphOptions opt;
    opt.mean_injected_bytes = static_cast<double>(seq.total_bytes()) / horizon;
    opt.zero_telemetry = zero_telemetry;
    Telemetry tel = sim.collect_telemetry();
    std::vector<RoutingTables> tabs;
    tabs.reserve(horizon);
    for (int t = 0; t < horizon; ++t) {
        const StateGraph sg = build_state_graph(topo, tel, t, horizon, opt);
        RoutingTables tab = greedy_tables(pairwise_sq_dist(decompose(encode(store, sg))), topo);
        sim.install_routing(tab);
        tel = sim.simulate_step(step_ms).first;
        tabs.push_back(std::move(tab));
    }
    const EpisodeMetrics em = sim.episode_metrics();
    Metrics m{em.goodput_mb, em.avg_delay_ms, em.drop_pct, tabs.size() >= 2 ? fluctuation_pct(tabs) : 0.0};
    if (tables_out) *tables_out = std::move(tabs);
    return m;
}

// Fixed tables for the whole episode; fluctuation is exactly 0.
inline Metrics eval_static_episode(const RoutingTables& tables, const Topology& topo, const TrafficSequence& seq,
                                   int horizon, double step_ms) {
    if (horizon < 1) throw std::invalid_argument("eval_static_episode: horizon must be positive");
    Simulator sim(topo, seq);
    sim.install_routing(tables);
    for (int t = 0; t < horizon; ++t) sim.simulate_step(step_ms);
    const EpisodeMetrics em = sim.episode_metrics();
    return {em.goodput_mb, em.avg_delay_ms, em.drop_pct, 0.0};
}

inline std::vector<Metrics> run_eval_policy(ParamStore& store, const Topology& topo,
                                            const std::vector<TrafficSequence>& sequences, int horizon, double step_ms,
                                            bool zero_telemetry = false) {
    std::vector<Metrics> out;
    out.reserve(sequences.size());
    for (const TrafficSequence& seq : sequences)
        out.push_back(eval_policy_episode(store, topo, seq, horizon, step_ms, zero_telemetry));
    return out;
}

inline std::vector<Metrics> run_eval_static(const RoutingTables& tables, const Topology& topo,
                                            const std::vector<TrafficSequence>& sequences, int horizon,
                                            double step_ms) {
    std::vector<Metrics> out;
    out.reserve(sequences.size());
    for (const TrafficSequence& seq : sequences) out.push_back(eval_static_episode(tables, topo, seq, horizon, step_ms));
    return out;
}

// Interquartile mean: drop floor(n/4) values at each end, average the rest.
inline double aggregate_iqm(std::vector<double> values) {
    if (values.size() < 4) throw std::invalid_argument("aggregate_iqm: need at least 4 values");
    std::sort(values.begin(), values.end());
    const std::size_t trim = values.size() / 4;
    double sum = 0.0;
    for (std::size_t i = trim; i < values.size() - trim; ++i) sum += values[i];
    return sum / static_cast<double>(values.size() - 2 * trim);
}

// FNV-1a over a canonical rendering of the run configuration, so reports can
// state exactly which knobs produced their rows.
inline std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t config_fingerprint(const std::string& canonical_config) { return fnv1a_hash(canonical_config); }

}  // namespace placer
