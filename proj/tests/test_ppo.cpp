#include <catch2/catch_amalgamated.hpp>
#include <placer/eigrp.hpp>
#include <placer/ppo.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

using namespace placer;

namespace {

Topology line3() {
    return make_topology(3, {{0, 1, 100.0, 1.0, 20}, {1, 2, 100.0, 1.0, 20}});
}

Topology twopath() {
    return make_topology(4, {{0, 1, 100.0, 1.0, 20},
                             {0, 2, 50.0, 1.0, 20},
                             {1, 3, 100.0, 1.0, 20},
                             {2, 3, 50.0, 1.0, 20}});
}

TrainConfig tiny_cfg() {
    TrainConfig cfg;
    cfg.iterations = 2;
    cfg.episodes_per_iter = 2;
    cfg.unique_sequences = 2;
    cfg.repeats = 1;
    cfg.horizon = 8;
    cfg.step_ms = 5.0;
    cfg.minibatch_episodes = 2;
    cfg.mpn.d = 2;
    cfg.mpn.hidden = 8;
    cfg.mpn.layers = 2;
    return cfg;
}

Rollout fake_rollout(const std::vector<double>& rewards, const std::vector<double>& values,
                     const std::vector<bool>& dones) {
    Rollout ro;
    ro.horizon = static_cast<int>(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        Transition tr;
        tr.reward = rewards[i];
        tr.value = values[i];
        tr.done = dones[i];
        ro.transitions.push_back(std::move(tr));
    }
    return ro;
}

Rollout small_collected(ParamStore& store, const Topology& topo, const TrainConfig& cfg,
                        std::uint64_t traffic_seed, std::uint64_t sample_seed, int episodes = 1) {
    TrafficConfig tc = cfg.traffic;
    tc.horizon_ms = cfg.horizon * cfg.step_ms;
    std::vector<TrafficSequence> seqs;
    for (int e = 0; e < episodes; ++e) seqs.push_back(generate_traffic(topo, traffic_seed + e, tc));
    return collect_rollout(store, topo, seqs, cfg, sample_seed);
}

}  // namespace

TEST_CASE("gae single terminal step") {
    Rollout ro = fake_rollout({1.0}, {0.0}, {true});
    compute_gae(ro, 1.0, 1.0);
    REQUIRE(ro.advantages == std::vector<double>{1.0});
    REQUIRE(ro.returns == std::vector<double>{1.0});
}

TEST_CASE("gae two-step recursion by hand") {
    // delta_0 = 0, delta_1 = 1, A_0 = gamma * A_1 = 0.5
    Rollout ro = fake_rollout({0.0, 1.0}, {0.0, 0.0}, {false, true});
    compute_gae(ro, 0.5, 1.0);
    REQUIRE(ro.advantages == std::vector<double>{0.5, 1.0});
    REQUIRE(ro.returns == std::vector<double>{0.5, 1.0});
}

TEST_CASE("gae with gamma=lambda=1 telescopes to monte carlo") {
    const std::vector<double> r = {0.25, -1.0, 2.0, 0.5, 1.5};
    const std::vector<double> v = {0.3, -0.2, 0.9, 0.1, -0.4};
    Rollout ro = fake_rollout(r, v, {false, false, false, false, true});
    compute_gae(ro, 1.0, 1.0);
    double tail = 0.0;
    for (int i = 4; i >= 0; --i) {
        tail += r[i];
        REQUIRE(ro.advantages[i] == Catch::Approx(tail - v[i]).margin(1e-12));
        REQUIRE(ro.returns[i] == Catch::Approx(tail).margin(1e-12));
    }
}

TEST_CASE("gae resets at episode boundaries") {
    // two one-step episodes; the second must not leak into the first
    Rollout ro = fake_rollout({1.0, 100.0}, {0.3, 0.0}, {true, true});
    ro.horizon = 1;
    compute_gae(ro, 0.9, 0.9);
    REQUIRE(ro.advantages[0] == Catch::Approx(0.7).margin(1e-12));
    REQUIRE(ro.advantages[1] == Catch::Approx(100.0).margin(1e-12));
}

TEST_CASE("a critic that matches the return zeroes the advantages") {
    const std::vector<double> r = {1.0, 2.0, 4.0};
    const std::vector<double> v = {7.0, 6.0, 4.0};  // exact suffix sums
    Rollout ro = fake_rollout(r, v, {false, false, true});
    compute_gae(ro, 1.0, 0.7);
    for (double a : ro.advantages) REQUIRE(a == 0.0);
}

TEST_CASE("advantage normalization is zero-mean unit-variance with a guard") {
    const std::vector<double> n = detail::normalize_advantages({1.0, 2.0, 3.0});
    REQUIRE(n[0] == Catch::Approx(-1.2247448).margin(1e-6));
    REQUIRE(n[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(n[2] == Catch::Approx(1.2247448).margin(1e-6));
    for (double x : detail::normalize_advantages({0.0, 0.0, 0.0, 0.0})) REQUIRE(x == 0.0);
}

TEST_CASE("collected rollouts are episode-aligned and internally consistent") {
    const Topology topo = line3();
    TrainConfig cfg = tiny_cfg();
    ParamStore store = init_mpn_params(cfg.mpn, 11);
    const Rollout ro = small_collected(store, topo, cfg, 500, 600, 2);

    REQUIRE(ro.transitions.size() == 2u * cfg.horizon);
    REQUIRE(ro.episodes.size() == 2u);
    REQUIRE(ro.topo == &topo);
    for (std::size_t i = 0; i < ro.transitions.size(); ++i) {
        const Transition& tr = ro.transitions[i];
        REQUIRE(tr.done == (i % cfg.horizon == static_cast<std::size_t>(cfg.horizon) - 1));
        REQUIRE(tr.actions.size() == 9u);  // V² entries, -1 on the diagonal
        for (int u = 0; u < 3; ++u)
            for (int z = 0; z < 3; ++z) {
                if (u == z)
                    REQUIRE(tr.actions[static_cast<std::size_t>(u) * 3 + z] == -1);
                else
                    REQUIRE(tr.actions[static_cast<std::size_t>(u) * 3 + z] >= 0);
            }
        REQUIRE(std::isfinite(tr.log_prob));
        REQUIRE(tr.log_prob <= 0.0);
        REQUIRE(std::isfinite(tr.value));
        REQUIRE(tr.reward >= 0.0);
    }
    for (int e = 0; e < 2; ++e) {
        double sum = 0.0;
        for (int t = 0; t < cfg.horizon; ++t) sum += ro.transitions[e * cfg.horizon + t].reward;
        REQUIRE(sum == ro.episodes[e].goodput_mb);  // same additions in the same order
    }
}

TEST_CASE("collection is deterministic in the seeds") {
    const Topology topo = line3();
    TrainConfig cfg = tiny_cfg();
    ParamStore s1 = init_mpn_params(cfg.mpn, 11);
    ParamStore s2 = init_mpn_params(cfg.mpn, 11);
    const Rollout a = small_collected(s1, topo, cfg, 500, 600);
    const Rollout b = small_collected(s2, topo, cfg, 500, 600);
    REQUIRE(a.transitions.size() == b.transitions.size());
    for (std::size_t i = 0; i < a.transitions.size(); ++i) {
        REQUIRE(a.transitions[i].actions == b.transitions[i].actions);
        REQUIRE(a.transitions[i].log_prob == b.transitions[i].log_prob);
        REQUIRE(a.transitions[i].value == b.transitions[i].value);
        REQUIRE(a.transitions[i].reward == b.transitions[i].reward);
    }
    ParamStore s3 = init_mpn_params(cfg.mpn, 11);
    const Rollout c = small_collected(s3, topo, cfg, 500, 601);
    bool same = true;
    for (std::size_t i = 0; i < a.transitions.size(); ++i)
        same = same && a.transitions[i].actions == c.transitions[i].actions;
    REQUIRE_FALSE(same);
}

TEST_CASE("probability ratios are exactly one before any update") {
    const Topology topo = line3();
    TrainConfig cfg = tiny_cfg();
    ParamStore store = init_mpn_params(cfg.mpn, 21);
    Rollout ro = small_collected(store, topo, cfg, 700, 800);
    compute_gae(ro, cfg.gamma, cfg.lambda_gae);
    const std::vector<double> adv = detail::normalize_advantages(ro.advantages);

    Tape tape(&store);
    const detail::LossNodes loss = detail::build_ppo_loss(tape, ro, cfg, adv, 0, ro.transitions.size());
    for (double r : tape.val(loss.ratio).v) REQUIRE(r == 1.0);  // stored log-prob replayed bitwise
}

TEST_CASE("clipping bounds the surrogate on both sides") {
    const Topology topo = line3();
    TrainConfig cfg = tiny_cfg();
    cfg.horizon = 2;
    ParamStore store = init_mpn_params(cfg.mpn, 31);
    Rollout ro = small_collected(store, topo, cfg, 900, 1000);
    compute_gae(ro, cfg.gamma, cfg.lambda_gae);
    // make the replayed policy 1.5x more likely than the stored one
    for (Transition& tr : ro.transitions) tr.log_prob -= std::log(1.5);

    Tape t1(&store);
    const detail::LossNodes up = detail::build_ppo_loss(t1, ro, cfg, {1.0, 1.0}, 0, 2);
    for (double r : t1.val(up.ratio).v) REQUIRE(r == Catch::Approx(1.5).epsilon(1e-12));
    REQUIRE(t1.val(up.policy).v[0] == Catch::Approx(-1.2).epsilon(1e-12));  // clipped at 1 + 0.2

    Tape t2(&store);
    const detail::LossNodes down = detail::build_ppo_loss(t2, ro, cfg, {-1.0, -1.0}, 0, 2);
    REQUIRE(t2.val(down.policy).v[0] == Catch::Approx(1.5).epsilon(1e-12));  // min keeps the worse side
}

TEST_CASE("total loss gradient matches finite differences") {
    const Topology topo = line3();
    TrainConfig cfg = tiny_cfg();
    cfg.horizon = 2;
    ParamStore store = init_mpn_params(cfg.mpn, 41);
    Rollout ro = small_collected(store, topo, cfg, 1100, 1200);
    compute_gae(ro, cfg.gamma, cfg.lambda_gae);
    const std::vector<double> adv = detail::normalize_advantages(ro.advantages);

    auto loss_at = [&]() {
        Tape t(&store);
        return t.val(detail::build_ppo_loss(t, ro, cfg, adv, 0, 2).total).v[0];
    };
    Tape t(&store);
    t.backward(detail::build_ppo_loss(t, ro, cfg, adv, 0, 2).total);

    const double h = 1e-5;
    const std::vector<std::pair<std::string, int>> probes = {
        {"enc.in.W", 5}, {"enc.l0.msg1.W", 23}, {"enc.out.W", 3}, {"val.h1.W", 11}, {"val.h2.b", 1}};
    for (const auto& [name, stride] : probes) {
        const Tensor analytic = store.grad(name);
        Tensor& Wv = store.value(name);
        for (int i = 0; i < Wv.numel(); i += stride) {
            const double keep = Wv.v[i];
            Wv.v[i] = keep + h;
            const double up = loss_at();
            Wv.v[i] = keep - h;
            const double dn = loss_at();
            Wv.v[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double g = analytic.v[i];
            const double rel = std::fabs(fd - g) / std::max({std::fabs(fd), std::fabs(g), 1e-6});
            INFO(name << "[" << i << "] fd=" << fd << " grad=" << g);
            REQUIRE(rel <= 1e-4);
        }
    }
}

TEST_CASE("zero advantages leave the embedding head untouched") {
    const Topology topo = line3();
    TrainConfig cfg = tiny_cfg();
    cfg.entropy_coef = 0.0;
    ParamStore store = init_mpn_params(cfg.mpn, 51);
    Rollout ro = small_collected(store, topo, cfg, 1300, 1400);
    compute_gae(ro, cfg.gamma, cfg.lambda_gae);
    ro.advantages.assign(ro.advantages.size(), 0.0);

    const Tensor out_w = store.value("enc.out.W");
    const Tensor out_b = store.value("enc.out.b");
    const Tensor trunk_w = store.value("enc.l0.msg1.W");
    const Tensor val_w = store.value("val.h2.W");
    ppo_update(store, ro, cfg);
    REQUIRE(store.value("enc.out.W").v == out_w.v);  // bitwise: Adam never saw a gradient here
    REQUIRE(store.value("enc.out.b").v == out_b.v);
    REQUIRE(store.value("enc.l0.msg1.W").v != trunk_w.v);  // value loss still trains the shared trunk
    REQUIRE(store.value("val.h2.W").v != val_w.v);
}

TEST_CASE("ppo update rejects malformed rollouts") {
    const Topology topo = line3();
    TrainConfig cfg = tiny_cfg();
    ParamStore store = init_mpn_params(cfg.mpn, 61);
    Rollout empty;
    REQUIRE_THROWS_AS(ppo_update(store, empty, cfg), std::invalid_argument);

    Rollout ro = small_collected(store, topo, cfg, 1500, 1600);
    REQUIRE_THROWS_AS(ppo_update(store, ro, cfg), std::invalid_argument);  // gae not computed
    compute_gae(ro, cfg.gamma, cfg.lambda_gae);
    ro.horizon = 3;  // 8 transitions no longer episode-aligned
    REQUIRE_THROWS_AS(ppo_update(store, ro, cfg), std::invalid_argument);
}

TEST_CASE("train config validation") {
    TrainConfig cfg = tiny_cfg();
    cfg.repeats = 3;  // 2 != 2 * 3
    REQUIRE_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
    cfg = tiny_cfg();
    cfg.gamma = 1.5;
    REQUIRE_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
    cfg = tiny_cfg();
    cfg.tau = 0.0;
    REQUIRE_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
    REQUIRE_NOTHROW(validate_train_config(tiny_cfg()));
}

TEST_CASE("training runs end to end and is seed-deterministic") {
    const Topology topo = twopath();
    const TrainConfig cfg = tiny_cfg();
    const TrainResult a = train(topo, cfg, 9001);
    const TrainResult b = train(topo, cfg, 9001);

    REQUIRE(a.curve.size() == 2u);
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        const CurveRow &ra = a.curve[i], &rb = b.curve[i];
        REQUIRE(ra.iteration == static_cast<int>(i));
        REQUIRE(std::isfinite(ra.policy_loss));
        REQUIRE(std::isfinite(ra.value_loss));
        REQUIRE(ra.entropy >= 0.0);
        REQUIRE(ra.clip_frac >= 0.0);
        REQUIRE(ra.clip_frac <= 1.0);
        REQUIRE(ra.mean_goodput_mb == rb.mean_goodput_mb);
        REQUIRE(ra.policy_loss == rb.policy_loss);
        REQUIRE(ra.value_loss == rb.value_loss);
        REQUIRE(ra.entropy == rb.entropy);
        REQUIRE(ra.fluctuation_pct == rb.fluctuation_pct);
    }
    for (const std::string& n : a.store.names()) REQUIRE(a.store.value(n).v == b.store.value(n).v);

    const TrainResult c = train(topo, cfg, 9002);
    REQUIRE(a.store.value("enc.out.W").v != c.store.value("enc.out.W").v);
}
