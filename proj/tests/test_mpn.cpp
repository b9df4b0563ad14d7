#include <catch2/catch_amalgamated.hpp>
#include <placer/mpn.hpp>
#include <placer/rng.hpp>

using namespace placer;

namespace {

StateGraph random_graph(Rng& rng, int n, int f_v = NODE_FEATURES, int f_e = EDGE_FEATURES,
                        int f_g = GLOBAL_FEATURES) {
    StateGraph g;
    g.num_nodes = n;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (a != b && rng.uniform() < 0.6) g.edges.emplace_back(a, b);
    if (g.edges.empty()) g.edges.emplace_back(0, n - 1);
    g.node_features = Tensor::zeros({n, f_v});
    g.edge_features = Tensor::zeros({static_cast<int>(g.edges.size()), f_e});
    g.global_features = Tensor::zeros({1, f_g});
    for (double& x : g.node_features.v) x = rng.uniform(0.0, 1.0);
    for (double& x : g.edge_features.v) x = rng.uniform(0.0, 1.0);
    for (double& x : g.global_features.v) x = rng.uniform(0.0, 1.0);
    return g;
}

StateGraph permute_graph(const StateGraph& g, const std::vector<int>& perm) {
    StateGraph p;
    p.num_nodes = g.num_nodes;
    for (const auto& [s, d] : g.edges) p.edges.emplace_back(perm[s], perm[d]);
    p.node_features = Tensor::zeros(g.node_features.shape);
    for (int v = 0; v < g.num_nodes; ++v)
        for (int k = 0; k < g.node_features.cols(); ++k) p.node_features.at(perm[v], k) = g.node_features.at(v, k);
    p.edge_features = g.edge_features;
    p.global_features = g.global_features;
    return p;
}

MpnConfig small_cfg() {
    MpnConfig cfg;
    cfg.d = 2;
    cfg.hidden = 8;
    cfg.layers = 2;
    return cfg;
}

}  // namespace

TEST_CASE("parameter store carries the documented tensor shapes") {
    MpnConfig cfg;  // paper-sized: 4 layers, hidden 32
    const ParamStore store = init_mpn_params(cfg, 5);
    REQUIRE(store.value("enc.in.W").shape == std::vector<int>{3, 32});
    REQUIRE(store.value("enc.l0.msg1.W").shape == std::vector<int>{69, 32});  // 32 + 32 + 5
    REQUIRE(store.value("enc.l3.upd1.W").shape == std::vector<int>{64, 32});
    REQUIRE(store.value("enc.out.W").shape == std::vector<int>{32, 2});
    REQUIRE(store.value("val.h1.W").shape == std::vector<int>{34, 32});  // 32 + 2 globals
    REQUIRE(store.value("val.h2.W").shape == std::vector<int>{32, 1});
    REQUIRE(store.value("meta.config").numel() == 7);
    REQUIRE_FALSE(store.has("crit.in.W"));

    const MpnConfig back = mpn_config_from_store(store);
    REQUIRE(back.d == cfg.d);
    REQUIRE(back.hidden == 32);
    REQUIRE(back.layers == 4);
    REQUIRE_FALSE(back.separate_critic_trunk);

    MpnConfig split = cfg;
    split.separate_critic_trunk = true;
    const ParamStore store2 = init_mpn_params(split, 5);
    REQUIRE(store2.has("crit.in.W"));
    REQUIRE(mpn_config_from_store(store2).separate_critic_trunk);
}

TEST_CASE("same seed reproduces identical parameters") {
    const ParamStore a = init_mpn_params(small_cfg(), 123);
    const ParamStore b = init_mpn_params(small_cfg(), 123);
    REQUIRE(a.names() == b.names());
    for (const std::string& n : a.names()) REQUIRE(a.value(n).v == b.value(n).v);
    const ParamStore c = init_mpn_params(small_cfg(), 124);
    REQUIRE(a.value("enc.in.W").v != c.value("enc.in.W").v);
}

TEST_CASE("encode returns deterministic |V|xd embeddings") {
    Rng rng(9);
    ParamStore store = init_mpn_params(small_cfg(), 1);
    const StateGraph g = random_graph(rng, 6);
    const Tensor e1 = encode(store, g);
    const Tensor e2 = encode(store, g);
    REQUIRE(e1.rows() == 6);
    REQUIRE(e1.cols() == 2);
    REQUIRE(e1.v == e2.v);
}

TEST_CASE("encode is permutation equivariant") {
    Rng rng(77);
    ParamStore store = init_mpn_params(small_cfg(), 2);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 4 + rng.uniform_int(5);  // up to 8 nodes
        const StateGraph g = random_graph(rng, n);
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);

        const Tensor base = encode(store, g);
        const Tensor permuted = encode(store, permute_graph(g, perm));
        for (int v = 0; v < n; ++v)
            for (int k = 0; k < 2; ++k) REQUIRE(permuted.at(perm[v], k) == base.at(v, k));
    }
}

TEST_CASE("value head is permutation invariant") {
    Rng rng(88);
    ParamStore store = init_mpn_params(small_cfg(), 3);
    const int n = 6;
    const StateGraph g = random_graph(rng, n);
    std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    const double v1 = value_head(store, g);
    const double v2 = value_head(store, permute_graph(g, perm));
    REQUIRE(std::isfinite(v1));
    REQUIRE(v1 == Catch::Approx(v2).epsilon(1e-12));
}

TEST_CASE("symmetric two-node graphs embed both nodes identically") {
    ParamStore store = init_mpn_params(small_cfg(), 4);
    StateGraph g;
    g.num_nodes = 2;
    g.edges = {{0, 1}, {1, 0}};
    g.node_features = Tensor({2, 3}, {0.3, 0.6, 0.1, 0.3, 0.6, 0.1});
    g.edge_features = Tensor({2, 5}, {0.2, 0.4, 0.9, 0.0, 0.5, 0.2, 0.4, 0.9, 0.0, 0.5});
    g.global_features = Tensor({1, 2}, {0.1, 0.7});
    const Tensor emb = encode(store, g);
    for (int k = 0; k < 2; ++k) REQUIRE(emb.at(0, k) == emb.at(1, k));
}

TEST_CASE("embeddings ignore everything but node and edge features") {
    // the value head sees globals; the embedding trunk must not
    Rng rng(99);
    ParamStore store = init_mpn_params(small_cfg(), 6);
    StateGraph g = random_graph(rng, 5);
    StateGraph g2 = g;
    g2.global_features.at(0, 0) = 0.99;
    g2.global_features.at(0, 1) = 0.01;
    REQUIRE(encode(store, g).v == encode(store, g2).v);
    REQUIRE(value_head(store, g) != value_head(store, g2));
}

TEST_CASE("feature dimension mismatches are rejected") {
    Rng rng(111);
    ParamStore store = init_mpn_params(small_cfg(), 7);
    const StateGraph bad = random_graph(rng, 4, 2);  // f_v = 2, parameters expect 3
    REQUIRE_THROWS_AS(encode(store, bad), std::invalid_argument);
}

TEST_CASE("separate critic trunk splits value and embedding parameters") {
    Rng rng(131);
    MpnConfig cfg = small_cfg();
    cfg.separate_critic_trunk = true;
    ParamStore store = init_mpn_params(cfg, 8);
    const StateGraph g = random_graph(rng, 5);
    // value flows only through crit.* and val.*; embeddings only through enc.*
    Tape t(&store);
    const EncodeNodes enc = build_encode(t, g, cfg);
    const int value = build_value(t, g, cfg, enc);
    t.backward(value);
    bool enc_all_zero = true;
    for (double x : store.grad("enc.out.W").v) enc_all_zero = enc_all_zero && x == 0.0;
    for (double x : store.grad("enc.in.W").v) enc_all_zero = enc_all_zero && x == 0.0;
    REQUIRE(enc_all_zero);
    bool crit_nonzero = false;
    for (double x : store.grad("crit.in.W").v) crit_nonzero = crit_nonzero || x != 0.0;
    REQUIRE(crit_nonzero);
}
