#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "placer/topology.hpp"

namespace placer {

// next_hop[u][z] = neighbor of u on the route to z; -1 on the diagonal.
struct RoutingTables {
    int num_nodes = 0;
    std::vector<std::vector<int>> next_hop;

    RoutingTables() = default;
    explicit RoutingTables(int n) : num_nodes(n), next_hop(n, std::vector<int>(n, -1)) {}

    int at(int u, int z) const { return next_hop[u][z]; }
    void set(int u, int z, int v) { next_hop[u][z] = v; }
};

// Every off-diagonal entry must name a direct neighbor of the row node.
inline void validate_routing(const Topology& topo, const RoutingTables& tables) {
    if (tables.num_nodes != topo.num_nodes())
        throw std::invalid_argument("routing tables: node count mismatch");
    for (int u = 0; u < tables.num_nodes; ++u) {
        if (static_cast<int>(tables.next_hop[u].size()) != tables.num_nodes)
            throw std::invalid_argument("routing tables: row " + std::to_string(u) + " has wrong size");
        for (int z = 0; z < tables.num_nodes; ++z) {
            int v = tables.next_hop[u][z];
            if (u == z) {
                if (v != -1)
                    throw std::invalid_argument("routing tables: diagonal entry (" + std::to_string(u) + "," +
                                                std::to_string(z) + ") must be -1");
                continue;
            }
            if (v < 0 || topo.link_index(u, v) < 0)
                throw std::invalid_argument("routing tables: entry (" + std::to_string(u) + "," + std::to_string(z) +
                                            ") = " + std::to_string(v) + " is not a neighbor of " + std::to_string(u));
        }
    }
}

}  // namespace placer
