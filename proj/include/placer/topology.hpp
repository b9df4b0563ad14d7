#pragma once

#include <algorithm>
#include <deque>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace placer {

struct Link {
    int src = 0;
    int dst = 0;
    double data_rate_mbps = 0.0;
    double prop_delay_ms = 0.0;
    int buffer_pkts = 0;
};

inline std::string link_name(int a, int b) {
    return std::to_string(a) + "->" + std::to_string(b);
}

// Static network description. Links are directed; every cable is expanded to
// both directions. Node ids are dense 0..n-1.
class Topology {
public:
    Topology() = default;
    Topology(int num_nodes, std::vector<Link> links) : num_nodes_(num_nodes), links_(std::move(links)) {
        validate();
        build_index();
    }

    int num_nodes() const { return num_nodes_; }
    int num_links() const { return static_cast<int>(links_.size()); }
    const std::vector<Link>& links() const { return links_; }
    const Link& link(int i) const { return links_[i]; }

    // sorted neighbor ids of u
    const std::vector<int>& neighbors(int u) const { return neighbors_[u]; }

    // index of directed link u->v, or -1
    int link_index(int u, int v) const {
        for (int li : out_links_[u])
            if (links_[li].dst == v) return li;
        return -1;
    }

    const std::vector<int>& out_links(int u) const { return out_links_[u]; }

    double max_data_rate() const { return max_rate_; }
    double max_prop_delay() const { return max_delay_; }

private:
    void validate() {
        if (num_nodes_ < 2) throw std::invalid_argument("topology: needs at least 2 nodes");
        std::vector<std::vector<bool>> seen(num_nodes_, std::vector<bool>(num_nodes_, false));
        for (const Link& l : links_) {
            const std::string name = "link " + link_name(l.src, l.dst);
            if (l.src < 0 || l.src >= num_nodes_ || l.dst < 0 || l.dst >= num_nodes_)
                throw std::invalid_argument(name + ": node id out of range");
            if (l.src == l.dst) throw std::invalid_argument(name + ": self-loop");
            if (seen[l.src][l.dst]) throw std::invalid_argument(name + ": duplicate link");
            seen[l.src][l.dst] = true;
            if (!(l.data_rate_mbps > 0.0)) throw std::invalid_argument(name + ": data_rate must be > 0");
            if (l.prop_delay_ms < 0.0) throw std::invalid_argument(name + ": prop_delay must be >= 0");
            if (l.buffer_pkts < 1) throw std::invalid_argument(name + ": buffer must be >= 1");
        }
        for (const Link& l : links_)
            if (!seen[l.dst][l.src])
                throw std::invalid_argument("link " + link_name(l.src, l.dst) + ": missing reverse direction");
        // connectivity (undirected view; reverse links guaranteed above)
        std::vector<bool> vis(num_nodes_, false);
        std::deque<int> q{0};
        vis[0] = true;
        int count = 1;
        while (!q.empty()) {
            int u = q.front();
            q.pop_front();
            for (const Link& l : links_)
                if (l.src == u && !vis[l.dst]) {
                    vis[l.dst] = true;
                    ++count;
                    q.push_back(l.dst);
                }
        }
        if (count != num_nodes_) throw std::invalid_argument("topology: graph is not connected");
    }

    void build_index() {
        neighbors_.assign(num_nodes_, {});
        out_links_.assign(num_nodes_, {});
        for (int i = 0; i < num_links(); ++i) {
            neighbors_[links_[i].src].push_back(links_[i].dst);
            out_links_[links_[i].src].push_back(i);
        }
        for (int u = 0; u < num_nodes_; ++u) {
            std::sort(neighbors_[u].begin(), neighbors_[u].end());
            std::sort(out_links_[u].begin(), out_links_[u].end(),
                      [&](int a, int b) { return links_[a].dst < links_[b].dst; });
        }
        max_rate_ = 0.0;
        max_delay_ = 0.0;
        for (const Link& l : links_) {
            max_rate_ = std::max(max_rate_, l.data_rate_mbps);
            max_delay_ = std::max(max_delay_, l.prop_delay_ms);
        }
    }

    int num_nodes_ = 0;
    std::vector<Link> links_;
    std::vector<std::vector<int>> neighbors_;
    std::vector<std::vector<int>> out_links_;
    double max_rate_ = 0.0;
    double max_delay_ = 0.0;
};

struct Cable {
    int a = 0, b = 0;
    double rate_mbps = 0.0;
    double delay_ms = 0.0;
    int buffer_pkts = 0;
};

// Expands undirected cables to a directed topology.
inline Topology make_topology(int num_nodes, const std::vector<Cable>& cables) {
    std::vector<Link> links;
    links.reserve(cables.size() * 2);
    for (const Cable& c : cables) {
        links.push_back({c.a, c.b, c.rate_mbps, c.delay_ms, c.buffer_pkts});
        links.push_back({c.b, c.a, c.rate_mbps, c.delay_ms, c.buffer_pkts});
    }
    return Topology(num_nodes, std::move(links));
}

// Line-oriented topology format:
//   nodes N
//   link <a> <b> <rate_mbps> <delay_ms> <buffer_pkts>   (one line per cable)
inline Topology parse_topology(std::istream& in) {
    int num_nodes = -1;
    std::vector<Cable> cables;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string trimmed = line.substr(line.find_first_not_of(" \t") == std::string::npos
                                              ? line.size()
                                              : line.find_first_not_of(" \t"));
        if (trimmed.empty() || trimmed[0] == '#') continue;
        std::istringstream ss(trimmed);
        std::string kw;
        ss >> kw;
        if (kw == "nodes") {
            if (!(ss >> num_nodes)) throw std::invalid_argument("topology file: bad nodes line " + std::to_string(lineno));
        } else if (kw == "link") {
            Cable c;
            if (!(ss >> c.a >> c.b >> c.rate_mbps >> c.delay_ms >> c.buffer_pkts))
                throw std::invalid_argument("topology file: bad link line " + std::to_string(lineno));
            cables.push_back(c);
        } else {
            throw std::invalid_argument("topology file: unknown keyword '" + kw + "' on line " + std::to_string(lineno));
        }
    }
    if (num_nodes < 0) throw std::invalid_argument("topology file: missing 'nodes' header");
    return make_topology(num_nodes, cables);
}

inline Topology load_topology(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("topology file not found: " + path);
    return parse_topology(in);
}

// Max-flow between a node pair over link data rates (Edmonds-Karp).
inline double max_flow_mbps(const Topology& topo, int s, int t) {
    int n = topo.num_nodes();
    std::vector<std::vector<double>> cap(n, std::vector<double>(n, 0.0));
    for (const Link& l : topo.links()) cap[l.src][l.dst] += l.data_rate_mbps;
    double flow = 0.0;
    for (;;) {
        std::vector<int> parent(n, -1);
        parent[s] = s;
        std::deque<int> q{s};
        while (!q.empty() && parent[t] < 0) {
            int u = q.front();
            q.pop_front();
            for (int v = 0; v < n; ++v)
                if (parent[v] < 0 && cap[u][v] > 1e-12) {
                    parent[v] = u;
                    q.push_back(v);
                }
        }
        if (parent[t] < 0) break;
        double push = std::numeric_limits<double>::infinity();
        for (int v = t; v != s; v = parent[v]) push = std::min(push, cap[parent[v]][v]);
        for (int v = t; v != s; v = parent[v]) {
            cap[parent[v]][v] -= push;
            cap[v][parent[v]] += push;
        }
        flow += push;
    }
    return flow;
}

}  // namespace placer
