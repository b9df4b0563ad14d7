#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "placer/rng.hpp"
#include "placer/routing.hpp"
#include "placer/tensor.hpp"
#include "placer/topology.hpp"

namespace placer {

// Largest double below 1. Soft radii are clamped here so every embedded
// point stays strictly inside the unit ball even where tanh rounds to 1.
constexpr double RHO_MAX = 0x1.fffffffffffffp-1;

// Supremum of the squared chord of a ball with radius RHO_MAX; < 4 strictly.
constexpr double DELTA_SQ_MAX = 4.0 * RHO_MAX * RHO_MAX;

// r = ‖x‖, u = x/r (first basis vector for x = 0), ρ = tanh(r) clamped.
// Shared by the value-level geometry and the autodiff forward pass so both
// produce bit-identical distances.
inline void polar_row(const double* x, int d, double& r, double& rho, double* u) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += x[k] * x[k];
    r = std::sqrt(s);
    if (r > 0.0) {
        for (int k = 0; k < d; ++k) u[k] = x[k] / r;
    } else {
        u[0] = 1.0;
        for (int k = 1; k < d; ++k) u[k] = 0.0;
    }
    rho = std::min(std::tanh(r), RHO_MAX);
}

// Chord form of the polar law of cosines: ‖ρ_i·u_i − ρ_j·u_j‖². The sum of
// squares is nonnegative and mirror-exact by construction, identical rows
// land on 0 exactly, and the top clamp pins the supremum strictly below 4.
inline double sq_dist_entry(double rho_i, const double* ui, double rho_j, const double* uj, int d) {
    double v = 0.0;
    for (int k = 0; k < d; ++k) {
        const double t = rho_i * ui[k] - rho_j * uj[k];
        v += t * t;
    }
    return v < DELTA_SQ_MAX ? v : DELTA_SQ_MAX;
}

// Log-softmax over logits −dz[k]/τ; logp[k] ≤ 0 holds exactly.
inline void pair_log_probs(const double* dz, int n, double tau, double* logp) {
    double m = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) m = std::max(m, -dz[k] / tau);
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += std::exp(-dz[k] / tau - m);
    const double log_z = m + std::log(s);
    for (int k = 0; k < n; ++k) logp[k] = -dz[k] / tau - log_z;
}

inline double entropy_from_log_probs(const double* logp, int n) {
    double h = 0.0;
    for (int k = 0; k < n; ++k) {
        const double p = std::exp(logp[k]);
        if (p > 0.0) h -= p * logp[k];
    }
    return h;
}

struct PolarDecomposition {
    std::vector<double> radii;  // r_i = ‖x_i‖
    std::vector<double> soft;   // ρ_i ∈ [0, 1)
    Tensor dirs;                // |V|×d, unit rows
};

using DistanceMatrix = Tensor;  // |V|×|V|, symmetric, zero diagonal, [0,4)

inline PolarDecomposition decompose(const Tensor& emb) {
    check_finite(emb, "decompose input");
    const int V = emb.rows();
    const int d = emb.cols();
    PolarDecomposition dec;
    dec.radii.resize(V);
    dec.soft.resize(V);
    dec.dirs = Tensor::zeros({V, d});
    for (int i = 0; i < V; ++i)
        polar_row(&emb.v[static_cast<std::size_t>(i) * d], d, dec.radii[i], dec.soft[i],
                  &dec.dirs.v[static_cast<std::size_t>(i) * d]);
    return dec;
}

inline DistanceMatrix pairwise_sq_dist(const PolarDecomposition& dec) {
    const int V = static_cast<int>(dec.radii.size());
    const int d = dec.dirs.cols();
    Tensor D = Tensor::zeros({V, V});
    for (int i = 0; i < V; ++i)
        for (int j = i + 1; j < V; ++j) {
            const double v = sq_dist_entry(dec.soft[i], &dec.dirs.v[static_cast<std::size_t>(i) * d], dec.soft[j],
                                           &dec.dirs.v[static_cast<std::size_t>(j) * d], d);
            D.at(i, j) = v;
            D.at(j, i) = v;  // exact mirror
        }
    return D;
}

// argmin over neighbors; ties broken by smallest node id (neighbors sorted).
inline RoutingTables greedy_tables(const DistanceMatrix& dist, const Topology& topo) {
    const int V = topo.num_nodes();
    if (dist.rows() != V || dist.cols() != V)
        throw std::invalid_argument("greedy_tables: distance matrix dimension mismatch");
    RoutingTables t(V);
    for (int u = 0; u < V; ++u) {
        const std::vector<int>& nb = topo.neighbors(u);
        if (nb.empty()) throw std::invalid_argument("greedy_tables: node " + std::to_string(u) + " has no neighbors");
        for (int z = 0; z < V; ++z) {
            if (u == z) continue;
            int best = nb[0];
            double best_d = dist.at(nb[0], z);
            for (std::size_t k = 1; k < nb.size(); ++k)
                if (dist.at(nb[k], z) < best_d) {
                    best = nb[k];
                    best_d = dist.at(nb[k], z);
                }
            t.set(u, z, best);
        }
    }
    return t;
}

struct PolicySample {
    RoutingTables tables;
    double log_prob = 0.0;  // joint over all (u,z) pairs
    double entropy = 0.0;   // sum of per-pair entropies
};

/// Per (u,z): categorical over 𝒩_u with probabilities softmax(−Δ²(v,z)/τ).
inline PolicySample boltzmann_sample(const DistanceMatrix& dist, const Topology& topo, double tau, Rng& rng) {
    if (!(tau > 0.0)) throw std::invalid_argument("boltzmann_sample: temperature must be > 0");
    const int V = topo.num_nodes();
    if (dist.rows() != V || dist.cols() != V)
        throw std::invalid_argument("boltzmann_sample: distance matrix dimension mismatch");
    PolicySample out;
    out.tables = RoutingTables(V);
    std::vector<double> dz, logp;
    for (int u = 0; u < V; ++u) {
        const std::vector<int>& nb = topo.neighbors(u);
        for (int z = 0; z < V; ++z) {
            if (u == z) continue;
            dz.resize(nb.size());
            logp.resize(nb.size());
            for (std::size_t k = 0; k < nb.size(); ++k) dz[k] = dist.at(nb[k], z);
            pair_log_probs(dz.data(), static_cast<int>(nb.size()), tau, logp.data());
            const double draw = rng.uniform();
            double cum = 0.0;
            std::size_t pick = nb.size() - 1;
            for (std::size_t k = 0; k < nb.size(); ++k) {
                cum += std::exp(logp[k]);
                if (draw < cum) {
                    pick = k;
                    break;
                }
            }
            out.tables.set(u, z, nb[pick]);
            out.log_prob += logp[pick];
            out.entropy += entropy_from_log_probs(logp.data(), static_cast<int>(nb.size()));
        }
    }
    return out;
}

// True iff every (u,z) pair has a neighbor strictly closer to z than u is.
inline bool is_greedy_embedding(const DistanceMatrix& dist, const Topology& topo) {
    const int V = topo.num_nodes();
    for (int u = 0; u < V; ++u)
        for (int z = 0; z < V; ++z) {
            if (u == z) continue;
            bool decreases = false;
            for (int v : topo.neighbors(u))
                if (dist.at(v, z) < dist.at(u, z)) {
                    decreases = true;
                    break;
                }
            if (!decreases) return false;
        }
    return true;
}

// (u,z) pairs whose next-hop walk fails to reach z within |V| hops.
inline std::vector<std::pair<int, int>> detect_loops(const RoutingTables& tables, const Topology& topo) {
    const int V = topo.num_nodes();
    std::vector<std::pair<int, int>> bad;
    for (int u = 0; u < V; ++u)
        for (int z = 0; z < V; ++z) {
            if (u == z) continue;
            int w = u;
            bool reached = false;
            for (int hop = 0; hop < V; ++hop) {
                w = tables.at(w, z);
                if (w == z) {
                    reached = true;
                    break;
                }
            }
            if (!reached) bad.emplace_back(u, z);
        }
    return bad;
}

// Mean over consecutive table pairs of (changed entries / total entries) × 100.
inline double fluctuation_pct(const std::vector<RoutingTables>& steps) {
    if (steps.size() < 2) throw std::invalid_argument("fluctuation: needs at least 2 table snapshots");
    const int V = steps[0].num_nodes;
    double sum_pct = 0.0;
    for (std::size_t s = 1; s < steps.size(); ++s) {
        if (steps[s].num_nodes != V) throw std::invalid_argument("fluctuation: table dimension mismatch");
        long changed = 0;
        for (int u = 0; u < V; ++u)
            for (int z = 0; z < V; ++z) {
                if (u == z) continue;
                if (steps[s].at(u, z) != steps[s - 1].at(u, z)) ++changed;
            }
        sum_pct += static_cast<double>(changed) * 100.0 / static_cast<double>(V * (V - 1));
    }
    return sum_pct / static_cast<double>(steps.size() - 1);
}

// rows: u, z, next_hop, delta_sq
inline void write_tables_csv(std::ostream& out, const DistanceMatrix& dist, const RoutingTables& tables) {
    out << "u,z,next_hop,delta_sq\n";
    char buf[128];
    for (int u = 0; u < tables.num_nodes; ++u)
        for (int z = 0; z < tables.num_nodes; ++z) {
            if (u == z) continue;
            std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.12g\n", u, z, tables.at(u, z), dist.at(u, z));
            out << buf;
        }
}

}  // namespace placer
