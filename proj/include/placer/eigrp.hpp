#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "placer/routing.hpp"
#include "placer/topology.hpp"

namespace placer {

// Composite metric with default K values: bandwidth term 10^7/kbps plus
// delay in tens of microseconds, scaled by 256. Applied per link and summed
// along paths (Dijkstra-compatible simplification of the classic
// path-minimum-bandwidth form).
inline std::int64_t eigrp_link_metric(double data_rate_mbps, double prop_delay_ms) {
    if (!(data_rate_mbps > 0.0)) throw std::invalid_argument("eigrp metric: data_rate must be > 0");
    const double bw_term = 1e7 / (data_rate_mbps * 1000.0);
    const double delay_term = prop_delay_ms * 1000.0 / 10.0;
    const std::int64_t cost = std::llround(256.0 * (bw_term + delay_term));
    return cost < 1 ? 1 : cost;
}

// Per-destination shortest-path trees over summed link metrics.
// next_hop(u,z) = smallest-id neighbor on a least-cost path.
inline RoutingTables shortest_path_tables(const Topology& topo) {
    const int V = topo.num_nodes();
    constexpr std::int64_t INF = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> metric(topo.num_links());
    for (int e = 0; e < topo.num_links(); ++e)
        metric[e] = eigrp_link_metric(topo.link(e).data_rate_mbps, topo.link(e).prop_delay_ms);

    RoutingTables tables(V);
    std::vector<std::int64_t> dist(V);
    std::vector<bool> done(V);
    for (int z = 0; z < V; ++z) {
        // Dijkstra from z over reversed links: dist[u] = cost of u's best path to z
        dist.assign(V, INF);
        done.assign(V, false);
        dist[z] = 0;
        for (int it = 0; it < V; ++it) {
            int u = -1;
            for (int k = 0; k < V; ++k)
                if (!done[k] && (u < 0 || dist[k] < dist[u])) u = k;
            if (dist[u] >= INF) break;
            done[u] = true;
            for (int e = 0; e < topo.num_links(); ++e) {
                const Link& l = topo.link(e);
                if (l.dst != u) continue;
                if (dist[u] + metric[e] < dist[l.src]) dist[l.src] = dist[u] + metric[e];
            }
        }
        for (int u = 0; u < V; ++u) {
            if (u == z) continue;
            if (dist[u] >= INF)
                throw std::invalid_argument("shortest_path_tables: destination " + std::to_string(z) +
                                            " unreachable from " + std::to_string(u));
            for (int v : topo.neighbors(u)) {  // sorted: first match = smallest id
                const int e = topo.link_index(u, v);
                if (metric[e] + dist[v] == dist[u]) {
                    tables.set(u, z, v);
                    break;
                }
            }
        }
    }
    return tables;
}

}  // namespace placer
