#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "placer/params.hpp"
#include "placer/rng.hpp"
#include "placer/state_graph.hpp"
#include "placer/tape.hpp"

namespace placer {

struct MpnConfig {
    int d = 2;  // embedding output dimension; 1, 2 and 32 mirror the ablations
    int hidden = 32;
    int layers = 4;
    int f_v = NODE_FEATURES;
    int f_e = EDGE_FEATURES;
    int f_g = GLOBAL_FEATURES;
    // critic gets its own message-passing trunk instead of sharing the
    // embedding trunk (heads are always separate)
    bool separate_critic_trunk = false;
};

inline void validate_mpn_config(const MpnConfig& cfg) {
    if (cfg.d < 1 || cfg.hidden < 1 || cfg.layers < 1 || cfg.f_v < 1 || cfg.f_e < 1 || cfg.f_g < 1)
        throw std::invalid_argument("mpn config: all dimensions must be >= 1");
}

namespace detail {

inline void add_dense_params(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
    store.add(name + ".W", glorot_uniform(in, out, rng));
    store.add(name + ".b", Tensor::zeros({1, out}));
}

inline void add_trunk_params(ParamStore& store, const std::string& prefix, const MpnConfig& cfg, Rng& rng) {
    const int h = cfg.hidden;
    add_dense_params(store, prefix + "in", cfg.f_v, h, rng);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + "l" + std::to_string(l) + ".";
        add_dense_params(store, lp + "msg1", 2 * h + cfg.f_e, h, rng);
        add_dense_params(store, lp + "msg2", h, h, rng);
        add_dense_params(store, lp + "upd1", 2 * h, h, rng);
        add_dense_params(store, lp + "upd2", h, h, rng);
    }
}

}  // namespace detail

inline ParamStore init_mpn_params(const MpnConfig& cfg, std::uint64_t seed) {
    validate_mpn_config(cfg);
    Rng rng(derive_seed(seed, 0x6d706e2d696e6974ULL));
    ParamStore store;
    detail::add_trunk_params(store, "enc.", cfg, rng);
    detail::add_dense_params(store, "enc.out", cfg.hidden, cfg.d, rng);
    if (cfg.separate_critic_trunk) detail::add_trunk_params(store, "crit.", cfg, rng);
    detail::add_dense_params(store, "val.h1", cfg.hidden + cfg.f_g, cfg.hidden, rng);
    detail::add_dense_params(store, "val.h2", cfg.hidden, 1, rng);
    store.add("meta.config",
              Tensor({7}, {static_cast<double>(cfg.d), static_cast<double>(cfg.hidden), static_cast<double>(cfg.layers),
                           static_cast<double>(cfg.f_v), static_cast<double>(cfg.f_e), static_cast<double>(cfg.f_g),
                           cfg.separate_critic_trunk ? 1.0 : 0.0}));
    return store;
}

inline MpnConfig mpn_config_from_store(const ParamStore& store) {
    if (!store.has("meta.config")) throw std::runtime_error("checkpoint: missing meta.config tensor");
    const Tensor& c = store.value("meta.config");
    if (c.numel() != 7) throw std::runtime_error("checkpoint: meta.config has unexpected size");
    MpnConfig cfg;
    cfg.d = static_cast<int>(c.v[0]);
    cfg.hidden = static_cast<int>(c.v[1]);
    cfg.layers = static_cast<int>(c.v[2]);
    cfg.f_v = static_cast<int>(c.v[3]);
    cfg.f_e = static_cast<int>(c.v[4]);
    cfg.f_g = static_cast<int>(c.v[5]);
    cfg.separate_critic_trunk = c.v[6] != 0.0;
    validate_mpn_config(cfg);
    return cfg;
}

struct EncodeNodes {
    int emb = -1;      // |V|×d embeddings
    int h_final = -1;  // |V|×hidden, pre-head node states
};

// Node encoder, then `layers` rounds of: per-edge message MLP over
// [h_src ‖ h_dst ‖ edge_feats], mean-aggregated at the edge's head node,
// residual node update MLP over [h ‖ agg]. Returns the |V|×hidden states.
inline int build_trunk(Tape& t, const StateGraph& g, const MpnConfig& cfg, const std::string& prefix) {
    if (g.node_features.cols() != cfg.f_v || g.edge_features.cols() != cfg.f_e ||
        g.global_features.cols() != cfg.f_g)
        throw std::invalid_argument("encode: state graph feature dimensions do not match parameters");
    if (static_cast<int>(g.edges.size()) != g.edge_features.rows())
        throw std::invalid_argument("encode: edge list and edge features disagree");
    std::vector<int> src, dst;
    src.reserve(g.edges.size());
    dst.reserve(g.edges.size());
    for (const auto& [s, d2] : g.edges) {
        src.push_back(s);
        dst.push_back(d2);
    }
    const int ef = t.input(g.edge_features);
    int h = t.dense(t.input(g.node_features), t.param(prefix + "in.W"), t.param(prefix + "in.b"), Act::Linear);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + "l" + std::to_string(l) + ".";
        const int mi = t.concat_cols({t.gather_rows(h, src), t.gather_rows(h, dst), ef});
        const int m1 = t.dense(mi, t.param(lp + "msg1.W"), t.param(lp + "msg1.b"), Act::LeakyRelu);
        const int m2 = t.dense(m1, t.param(lp + "msg2.W"), t.param(lp + "msg2.b"), Act::LeakyRelu);
        const int agg = t.scatter_mean(m2, dst, g.num_nodes);
        const int u1 = t.dense(t.concat_cols({h, agg}), t.param(lp + "upd1.W"), t.param(lp + "upd1.b"), Act::LeakyRelu);
        const int u2 = t.dense(u1, t.param(lp + "upd2.W"), t.param(lp + "upd2.b"), Act::LeakyRelu);
        h = t.add(h, u2);
    }
    return h;
}

// Trunk plus the linear hidden→d embedding head.
inline EncodeNodes build_encode(Tape& t, const StateGraph& g, const MpnConfig& cfg,
                                const std::string& prefix = "enc.") {
    const int h = build_trunk(t, g, cfg, prefix);
    const int emb = t.dense(h, t.param(prefix + "out.W"), t.param(prefix + "out.b"), Act::Linear);
    return {emb, h};
}

// Mean-pooled final node states ‖ global features → MLP → scalar. The value
// path never touches the embedding head; with a separate critic trunk it
// shares no encoder parameters at all.
inline int build_value(Tape& t, const StateGraph& g, const MpnConfig& cfg, const EncodeNodes& enc) {
    int pooled;
    if (cfg.separate_critic_trunk)
        pooled = t.mean_rows(build_trunk(t, g, cfg, "crit."));
    else
        pooled = t.mean_rows(enc.h_final);
    const int vin = t.concat_cols({pooled, t.input(g.global_features)});
    const int v1 = t.dense(vin, t.param("val.h1.W"), t.param("val.h1.b"), Act::LeakyRelu);
    return t.dense(v1, t.param("val.h2.W"), t.param("val.h2.b"), Act::Linear);
}

inline Tensor encode(ParamStore& store, const StateGraph& g) {
    Tape t(&store);
    return t.val(build_encode(t, g, mpn_config_from_store(store)).emb);
}

inline double value_head(ParamStore& store, const StateGraph& g) {
    Tape t(&store);
    const MpnConfig cfg = mpn_config_from_store(store);
    const EncodeNodes enc = build_encode(t, g, cfg);
    return t.val(build_value(t, g, cfg, enc)).v[0];
}

}  // namespace placer
