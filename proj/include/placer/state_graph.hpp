#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "placer/sim.hpp"
#include "placer/tensor.hpp"
#include "placer/topology.hpp"

namespace placer {

constexpr int NODE_FEATURES = 3;
constexpr int EDGE_FEATURES = 5;
constexpr int GLOBAL_FEATURES = 2;

// MaxScale: static per-topology quantities, divided by the topology maximum.
// ClampUnit: dynamic ratios, clamped to [0,1] (overload saturates at 1).
// Both are idempotent.
enum class NormScheme { MaxScale, ClampUnit };

inline double normalize_feature(double raw, NormScheme scheme, double max_value = 1.0) {
    if (!std::isfinite(raw)) throw std::invalid_argument("normalize_features: non-finite input");
    switch (scheme) {
        case NormScheme::MaxScale:
            if (!std::isfinite(max_value) || max_value < 0.0)
                throw std::invalid_argument("normalize_features: bad max");
            return max_value > 0.0 ? raw / max_value : 0.0;
        case NormScheme::ClampUnit:
            return std::clamp(raw, 0.0, 1.0);
    }
    return raw;
}

inline std::vector<double> normalize_features(const std::vector<double>& raw, NormScheme scheme) {
    std::vector<double> out(raw.size());
    if (scheme == NormScheme::MaxScale) {
        double mx = 0.0;
        for (double x : raw) {
            if (!std::isfinite(x)) throw std::invalid_argument("normalize_features: non-finite input");
            mx = std::max(mx, std::fabs(x));
        }
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = normalize_feature(raw[i], scheme, mx);
    } else {
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = normalize_feature(raw[i], scheme);
    }
    return out;
}

// Attributed directed graph fed to the encoder. Edge rows are index-aligned
// with the topology's link list, so slots are stable across steps.
struct StateGraph {
    int num_nodes = 0;
    std::vector<std::pair<int, int>> edges;  // (src, dst) per link
    Tensor node_features;                    // |V| × 3
    Tensor edge_features;                    // |E| × 5
    Tensor global_features;                  // 1 × 2
};

struct StateGraphOptions {
    // reference for the global injected-ratio feature: mean injected payload
    // bytes per step over the episode (offered demand / steps)
    double mean_injected_bytes = 0.0;
    // zero out all telemetry-derived features, leaving only static topology
    bool zero_telemetry = false;
};

inline StateGraph build_state_graph(const Topology& topo, const Telemetry& tel, int step_index, int horizon,
                                    const StateGraphOptions& opt = {}) {
    const int V = topo.num_nodes();
    const int E = topo.num_links();
    if (static_cast<int>(tel.bytes_tx.size()) != E || static_cast<int>(tel.pkts_dropped.size()) != E ||
        static_cast<int>(tel.queue_fill.size()) != E || static_cast<int>(tel.node_delivered_bytes.size()) != V)
        throw std::invalid_argument("build_state_graph: telemetry/topology shape mismatch");
    if (horizon <= 0) throw std::invalid_argument("build_state_graph: horizon must be positive");

    StateGraph g;
    g.num_nodes = V;
    g.edges.reserve(E);
    for (const Link& l : topo.links()) g.edges.emplace_back(l.src, l.dst);
    g.node_features = Tensor::zeros({V, NODE_FEATURES});
    g.edge_features = Tensor::zeros({E, EDGE_FEATURES});
    g.global_features = Tensor::zeros({1, GLOBAL_FEATURES});

    const double max_rate = topo.max_data_rate();
    const double max_delay = topo.max_prop_delay();
    std::vector<double> load(E, 0.0), fill(E, 0.0);
    for (int e = 0; e < E; ++e) {
        const Link& l = topo.link(e);
        if (!opt.zero_telemetry && tel.window_ms > 0.0) {
            load[e] = normalize_feature(
                static_cast<double>(tel.bytes_tx[e]) * 8.0 / (l.data_rate_mbps * 1000.0 * tel.window_ms),
                NormScheme::ClampUnit);
            fill[e] = normalize_feature(tel.queue_fill[e], NormScheme::ClampUnit);
        }
        g.edge_features.at(e, 0) = normalize_feature(l.data_rate_mbps, NormScheme::MaxScale, max_rate);
        g.edge_features.at(e, 1) = normalize_feature(l.prop_delay_ms, NormScheme::MaxScale, max_delay);
        g.edge_features.at(e, 2) = load[e];
        g.edge_features.at(e, 3) = fill[e];
        g.edge_features.at(e, 4) =
            opt.zero_telemetry
                ? 0.0
                : normalize_feature(static_cast<double>(tel.pkts_dropped[e]) / l.buffer_pkts, NormScheme::ClampUnit);
    }

    for (int v = 0; v < V; ++v) {
        double load_sum = 0.0, fill_max = 0.0;
        int incident = 0;
        for (int e = 0; e < E; ++e) {
            const Link& l = topo.link(e);
            if (l.src != v && l.dst != v) continue;
            load_sum += load[e];
            fill_max = std::max(fill_max, fill[e]);
            ++incident;
        }
        g.node_features.at(v, 0) = incident > 0 ? load_sum / incident : 0.0;
        g.node_features.at(v, 1) = fill_max;
        g.node_features.at(v, 2) =
            opt.zero_telemetry || tel.injected_bytes <= 0
                ? 0.0
                : normalize_feature(static_cast<double>(tel.node_delivered_bytes[v]) / static_cast<double>(tel.injected_bytes),
                                    NormScheme::ClampUnit);
    }

    g.global_features.at(0, 0) =
        normalize_feature(static_cast<double>(step_index) / static_cast<double>(horizon), NormScheme::ClampUnit);
    g.global_features.at(0, 1) =
        opt.zero_telemetry || opt.mean_injected_bytes <= 0.0
            ? 0.0
            : normalize_feature(static_cast<double>(tel.injected_bytes) / opt.mean_injected_bytes, NormScheme::ClampUnit);

    check_finite(g.node_features, "state graph node features");
    check_finite(g.edge_features, "state graph edge features");
    check_finite(g.global_features, "state graph global features");
    return g;
}

// CSV blocks, one per call: node rows, edge rows, one global row.
inline void dump_state_csv(std::ostream& out, const StateGraph& g, int step_index) {
    char buf[256];
    out << "# step " << step_index << "\n";
    for (int v = 0; v < g.num_nodes; ++v) {
        std::snprintf(buf, sizeof(buf), "node,%d,%.9g,%.9g,%.9g\n", v, g.node_features.at(v, 0),
                      g.node_features.at(v, 1), g.node_features.at(v, 2));
        out << buf;
    }
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "edge,%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", g.edges[e].first, g.edges[e].second,
                      g.edge_features.at(static_cast<int>(e), 0), g.edge_features.at(static_cast<int>(e), 1),
                      g.edge_features.at(static_cast<int>(e), 2), g.edge_features.at(static_cast<int>(e), 3),
                      g.edge_features.at(static_cast<int>(e), 4));
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "global,%.9g,%.9g\n", g.global_features.at(0, 0), g.global_features.at(0, 1));
    out << buf;
}

}  // namespace placer
