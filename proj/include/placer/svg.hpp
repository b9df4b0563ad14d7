#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "placer/eval.hpp"
#include "placer/geometry.hpp"
#include "placer/mpn.hpp"
#include "placer/sim.hpp"
#include "placer/state_graph.hpp"

namespace placer {

namespace detail {

// Principal axes of the point cloud about the origin (not the centroid), so
// projected points keep ‖p‖ ≤ ρ < 1 and stay inside the unit circle.
inline void principal_plane(const std::vector<std::vector<double>>& pts, int d, std::vector<double>& axis0,
                            std::vector<double>& axis1) {
    std::vector<double> c(static_cast<std::size_t>(d) * d, 0.0);
    for (const std::vector<double>& p : pts)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) c[static_cast<std::size_t>(i) * d + j] += p[i] * p[j];
    // Cyclic Jacobi sweeps; the matrix is symmetric PSD and tiny (d ≤ 64).
    std::vector<double> v(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i) * d + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += c[static_cast<std::size_t>(p) * d + q] * c[static_cast<std::size_t>(p) * d + q];
        if (off < 1e-24) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                const double apq = c[static_cast<std::size_t>(p) * d + q];
                if (std::fabs(apq) < 1e-18) continue;
                const double app = c[static_cast<std::size_t>(p) * d + p];
                const double aqq = c[static_cast<std::size_t>(q) * d + q];
                const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
                const double s = std::sin(theta), co = std::cos(theta);
                for (int k = 0; k < d; ++k) {
                    const double ckp = c[static_cast<std::size_t>(k) * d + p];
                    const double ckq = c[static_cast<std::size_t>(k) * d + q];
                    c[static_cast<std::size_t>(k) * d + p] = co * ckp - s * ckq;
                    c[static_cast<std::size_t>(k) * d + q] = s * ckp + co * ckq;
                }
                for (int k = 0; k < d; ++k) {
                    const double cpk = c[static_cast<std::size_t>(p) * d + k];
                    const double cqk = c[static_cast<std::size_t>(q) * d + k];
                    c[static_cast<std::size_t>(p) * d + k] = co * cpk - s * cqk;
                    c[static_cast<std::size_t>(q) * d + k] = s * cpk + co * cqk;
                }
                for (int k = 0; k < d; ++k) {
                    const double vkp = v[static_cast<std::size_t>(k) * d + p];
                    const double vkq = v[static_cast<std::size_t>(k) * d + q];
                    v[static_cast<std::size_t>(k) * d + p] = co * vkp - s * vkq;
                    v[static_cast<std::size_t>(k) * d + q] = s * vkp + co * vkq;
                }
            }
    }
    int best0 = 0, best1 = 1;
    double e0 = -1.0, e1 = -1.0;
    for (int i = 0; i < d; ++i) {
        const double ev = c[static_cast<std::size_t>(i) * d + i];
        if (ev > e0) {
            e1 = e0;
            best1 = best0;
            e0 = ev;
            best0 = i;
        } else if (ev > e1) {
            e1 = ev;
            best1 = i;
        }
    }
    axis0.assign(d, 0.0);
    axis1.assign(d, 0.0);
    for (int k = 0; k < d; ++k) {
        axis0[k] = v[static_cast<std::size_t>(k) * d + best0];
        axis1[k] = v[static_cast<std::size_t>(k) * d + best1];
    }
}

}  // namespace detail

// Replays a greedy episode to the requested step, encodes that step's state
// graph, and draws ρ_i·u_i inside the unit circle with topology edges.
inline void export_embeddings_svg(std::ostream& out, ParamStore& store, const Topology& topo,
                                  std::uint64_t traffic_seed, int step_index, int horizon, double step_ms,
                                  TrafficConfig tc = {}) {
    if (step_index < 0 || step_index >= horizon)
        throw std::invalid_argument("export_embeddings_svg: step index outside episode horizon");
    tc.horizon_ms = horizon * step_ms;
    const TrafficSequence seq = generate_traffic(topo, derive_seed(traffic_seed, STREAM_EVAL_TRAFFIC, 0), tc);
    Simulator sim(topo, seq);
    StateGraphOptions opt;
    opt.mean_injected_bytes = static_cast<double>(seq.total_bytes()) / horizon;
    Telemetry tel = sim.collect_telemetry();
    Tensor emb;
    for (int t = 0; t <= step_index; ++t) {
        const StateGraph sg = build_state_graph(topo, tel, t, horizon, opt);
        emb = encode(store, sg);
        if (t == step_index) break;
        sim.install_routing(greedy_tables(pairwise_sq_dist(decompose(emb)), topo));
        tel = sim.simulate_step(step_ms).first;
    }

    const PolarDecomposition dec = decompose(emb);
    const int V = topo.num_nodes();
    const int d = emb.cols();
    std::vector<std::vector<double>> pts(V, std::vector<double>(d, 0.0));
    for (int i = 0; i < V; ++i)
        for (int k = 0; k < d; ++k) pts[static_cast<std::size_t>(i)][k] = dec.soft[i] * dec.dirs.at(i, k);

    std::vector<double> px(V, 0.0), py(V, 0.0);
    if (d == 1) {
        for (int i = 0; i < V; ++i) px[i] = pts[static_cast<std::size_t>(i)][0];
    } else if (d == 2) {
        for (int i = 0; i < V; ++i) {
            px[i] = pts[static_cast<std::size_t>(i)][0];
            py[i] = pts[static_cast<std::size_t>(i)][1];
        }
    } else {
        std::vector<double> a0, a1;
        detail::principal_plane(pts, d, a0, a1);
        for (int i = 0; i < V; ++i)
            for (int k = 0; k < d; ++k) {
                px[i] += pts[static_cast<std::size_t>(i)][k] * a0[k];
                py[i] += pts[static_cast<std::size_t>(i)][k] * a1[k];
            }
    }

    const double cx = 300.0, cy = 300.0, scale = 280.0;
    char buf[256];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
    out << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.4f\" cy=\"%.4f\" r=\"%.4f\" fill=\"none\" stroke=\"#999\" stroke-width=\"1\"/>\n", cx,
                  cy, scale);
    out << buf;
    for (const Link& l : topo.links()) {
        if (l.src >= l.dst) continue;  // one line per undirected pair
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%.4f\" y1=\"%.4f\" x2=\"%.4f\" y2=\"%.4f\" stroke=\"#bbb\" stroke-width=\"1\"/>\n",
                      cx + scale * px[l.src], cy - scale * py[l.src], cx + scale * px[l.dst],
                      cy - scale * py[l.dst]);
        out << buf;
    }
    for (int i = 0; i < V; ++i) {
        std::snprintf(buf, sizeof(buf), "<circle cx=\"%.4f\" cy=\"%.4f\" r=\"6\" fill=\"#1f77b4\"/>\n",
                      cx + scale * px[i], cy - scale * py[i]);
        out << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.4f\" y=\"%.4f\" font-family=\"monospace\" font-size=\"14\">%d</text>\n",
                      cx + scale * px[i] + 8.0, cy - scale * py[i] - 8.0, i);
        out << buf;
    }
    out << "</svg>\n";
}

}  // namespace placer
