#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "placer/geometry.hpp"
#include "placer/mpn.hpp"
#include "placer/sim.hpp"
#include "placer/state_graph.hpp"
#include "placer/tape.hpp"
#include "placer/traffic.hpp"

namespace placer {

// Independent deterministic RNG streams derived from the run seed.
constexpr std::uint64_t STREAM_INIT = 0x696e697400ULL;
constexpr std::uint64_t STREAM_TRAIN_TRAFFIC = 0x7472616600ULL;
constexpr std::uint64_t STREAM_SAMPLER = 0x73616d7000ULL;
constexpr std::uint64_t STREAM_EVAL_TRAFFIC = 0x6576616c00ULL;  // disjoint from training traffic

struct TrainConfig {
    int iterations = 40;
    int episodes_per_iter = 16;
    int unique_sequences = 4;  // distinct traffic sequences per iteration
    int repeats = 4;           // times each sequence is replayed
    int horizon = 400;         // steps per episode
    double step_ms = 5.0;
    double gamma = 0.99;
    double lambda_gae = 0.95;
    double clip_eps = 0.2;
    int epochs = 5;
    int minibatch_episodes = 4;
    double lr = 3e-4;
    double entropy_coef = 1e-3;
    double value_coef = 0.5;
    double tau = 1.0;  // Boltzmann temperature during collection
    MpnConfig mpn;
    TrafficConfig traffic;  // horizon_ms is overridden to horizon × step_ms
};

inline void validate_train_config(const TrainConfig& cfg) {
    if (cfg.iterations < 1 || cfg.episodes_per_iter < 1 || cfg.unique_sequences < 1 || cfg.repeats < 1 ||
        cfg.horizon < 1 || cfg.epochs < 1 || cfg.minibatch_episodes < 1)
        throw std::invalid_argument("train config: counts must be positive");
    if (cfg.episodes_per_iter != cfg.unique_sequences * cfg.repeats)
        throw std::invalid_argument("train config: episodes_per_iter must equal unique_sequences × repeats");
    if (!(cfg.step_ms > 0.0) || !(cfg.lr > 0.0) || !(cfg.tau > 0.0) || !(cfg.clip_eps > 0.0))
        throw std::invalid_argument("train config: step_ms, lr, tau, clip_eps must be positive");
    if (cfg.gamma < 0.0 || cfg.gamma > 1.0 || cfg.lambda_gae < 0.0 || cfg.lambda_gae > 1.0)
        throw std::invalid_argument("train config: gamma and lambda must lie in [0,1]");
    validate_mpn_config(cfg.mpn);
}

struct Transition {
    StateGraph state;
    std::vector<int> actions;  // flattened next-hop indices, action_indices() encoding
    double log_prob = 0.0;     // stored at collection; never recomputed for the ratio's denominator
    double value = 0.0;
    double reward = 0.0;  // goodput MB of the step
    bool done = false;
};

struct EpisodeStat {
    double goodput_mb = 0.0;
    double avg_delay_ms = 0.0;
    double drop_pct = 0.0;
    double fluctuation_pct = 0.0;
};

struct Rollout {
    const Topology* topo = nullptr;
    int horizon = 0;  // transitions per episode
    std::vector<Transition> transitions;
    std::vector<EpisodeStat> episodes;
    std::vector<double> advantages;  // raw GAE; normalized inside ppo_update
    std::vector<double> returns;
};

namespace detail {

struct StepNodes {
    int dist = -1;
    int value = -1;
};

// Shared forward subgraph for collection and update so both see bit-identical
// distances and values at equal parameters.
inline StepNodes build_step_graph(Tape& tape, const StateGraph& sg, const MpnConfig& mpn) {
    const EncodeNodes enc = build_encode(tape, sg, mpn);
    StepNodes out;
    out.dist = tape.embed_distances(enc.emb);
    out.value = build_value(tape, sg, mpn, enc);
    return out;
}

struct LossNodes {
    int total = -1;
    int policy = -1;
    int value = -1;
    int entropy = -1;
    int ratio = -1;
};

// Clipped-surrogate + value + entropy loss over transitions [first, last).
// norm_adv indexes the full rollout; the minibatch reads its own slice.
inline LossNodes build_ppo_loss(Tape& tape, const Rollout& rollout, const TrainConfig& cfg,
                                const std::vector<double>& norm_adv, std::size_t first, std::size_t last) {
    const int count = static_cast<int>(last - first);
    std::vector<int> lp_nodes, v_nodes, ent_nodes;
    Tensor neg_old = Tensor::zeros({count, 1});
    Tensor adv_t = Tensor::zeros({count, 1});
    Tensor neg_ret = Tensor::zeros({count, 1});
    for (std::size_t i = first; i < last; ++i) {
        const Transition& tr = rollout.transitions[i];
        const StepNodes nodes = build_step_graph(tape, tr.state, cfg.mpn);
        lp_nodes.push_back(tape.policy_log_prob(nodes.dist, rollout.topo, tr.actions, cfg.tau));
        ent_nodes.push_back(tape.policy_entropy(nodes.dist, rollout.topo, cfg.tau));
        v_nodes.push_back(nodes.value);
        neg_old.v[i - first] = -tr.log_prob;
        adv_t.v[i - first] = norm_adv[i];
        neg_ret.v[i - first] = -rollout.returns[i];
    }
    LossNodes out;
    const int lp = tape.stack_scalars(lp_nodes);
    out.ratio = tape.exp_op(tape.add(lp, tape.input(neg_old)));
    const int adv_node = tape.input(adv_t);
    const int surr1 = tape.mul(out.ratio, adv_node);
    const int surr2 = tape.mul(tape.clamp_op(out.ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_node);
    out.policy = tape.mul_const(tape.mean_all(tape.minimum(surr1, surr2)), -1.0);
    const int v_err = tape.add(tape.stack_scalars(v_nodes), tape.input(neg_ret));
    out.value = tape.mean_all(tape.square(v_err));
    out.entropy = tape.mean_all(tape.stack_scalars(ent_nodes));
    out.total =
        tape.add(out.policy, tape.add(tape.mul_const(out.value, cfg.value_coef),
                                      tape.mul_const(out.entropy, -cfg.entropy_coef)));
    return out;
}

// Zero-mean, unit-variance with an ε guard against constant batches.
inline std::vector<double> normalize_advantages(const std::vector<double>& adv) {
    std::vector<double> out = adv;
    double mean = 0.0;
    for (double x : out) mean += x;
    mean /= static_cast<double>(out.size());
    double var = 0.0;
    for (double x : out) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(out.size()));
    for (double& x : out) x = (x - mean) / (sd + 1e-8);
    return out;
}

}  // namespace detail

// One episode per traffic sequence: state graph → embeddings → Δ² →
// Boltzmann-sampled tables → simulate, recording PPO transitions.
inline Rollout collect_rollout(ParamStore& store, const Topology& topo, const std::vector<TrafficSequence>& sequences,
                               const TrainConfig& cfg, std::uint64_t sample_seed) {
    if (sequences.empty()) throw std::invalid_argument("collect_rollout: no traffic sequences");
    Rollout out;
    out.topo = &topo;
    out.horizon = cfg.horizon;
    out.transitions.reserve(sequences.size() * static_cast<std::size_t>(cfg.horizon));
    for (std::size_t e = 0; e < sequences.size(); ++e) {
        Simulator sim(topo, sequences[e]);
        Rng sampler(derive_seed(sample_seed, STREAM_SAMPLER, e));
        StateGraphOptions opt;
        opt.mean_injected_bytes = static_cast<double>(sequences[e].total_bytes()) / cfg.horizon;
        std::vector<RoutingTables> tables_seq;
        tables_seq.reserve(cfg.horizon);
        Telemetry tel = sim.collect_telemetry();  // all-zero window before the first step
        for (int t = 0; t < cfg.horizon; ++t) {
            StateGraph sg = build_state_graph(topo, tel, t, cfg.horizon, opt);
            Tape tape(&store);
            const detail::StepNodes nodes = detail::build_step_graph(tape, sg, cfg.mpn);
            PolicySample ps = boltzmann_sample(tape.val(nodes.dist), topo, cfg.tau, sampler);
            sim.install_routing(ps.tables);
            auto [tel_next, reward] = sim.simulate_step(cfg.step_ms);
            Transition tr;
            tr.state = std::move(sg);
            tr.actions = action_indices(ps.tables, topo);
            tr.log_prob = ps.log_prob;
            tr.value = tape.val(nodes.value).v[0];
            tr.reward = reward.goodput_mb;
            tr.done = t + 1 == cfg.horizon;
            out.transitions.push_back(std::move(tr));
            tables_seq.push_back(std::move(ps.tables));
            tel = std::move(tel_next);
        }
        const EpisodeMetrics em = sim.episode_metrics();
        EpisodeStat st;
        st.goodput_mb = em.goodput_mb;
        st.avg_delay_ms = em.avg_delay_ms;
        st.drop_pct = em.drop_pct;
        st.fluctuation_pct = tables_seq.size() >= 2 ? fluctuation_pct(tables_seq) : 0.0;
        out.episodes.push_back(st);
    }
    return out;
}

// δ_t = r_t + γV_{t+1} − V_t; A_t = δ_t + γλA_{t+1}; terminal bootstrap 0.
// Fills raw (unnormalized) advantages and returns = A + V.
inline void compute_gae(Rollout& rollout, double gamma, double lambda) {
    if (rollout.transitions.empty()) throw std::invalid_argument("compute_gae: empty rollout");
    const std::size_t n = rollout.transitions.size();
    rollout.advantages.assign(n, 0.0);
    rollout.returns.assign(n, 0.0);
    double a = 0.0, v_next = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        const Transition& tr = rollout.transitions[i];
        if (tr.done) {
            a = 0.0;
            v_next = 0.0;
        }
        const double delta = tr.reward + gamma * v_next - tr.value;
        a = delta + gamma * lambda * a;
        rollout.advantages[i] = a;
        rollout.returns[i] = a + tr.value;
        v_next = tr.value;
    }
}

struct PpoStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_frac = 0.0;
    double mean_ratio = 0.0;
};

// Clipped-surrogate updates over minibatches of whole episodes, repeated for
// cfg.epochs passes. Advantages are normalized once per batch.
inline PpoStats ppo_update(ParamStore& store, const Rollout& rollout, const TrainConfig& cfg) {
    const std::size_t n = rollout.transitions.size();
    if (n == 0 || rollout.advantages.size() != n || rollout.returns.size() != n)
        throw std::invalid_argument("ppo_update: advantages not computed");
    if (rollout.horizon < 1 || n % static_cast<std::size_t>(rollout.horizon) != 0)
        throw std::invalid_argument("ppo_update: rollout not episode-aligned");
    if (rollout.topo == nullptr) throw std::invalid_argument("ppo_update: rollout has no topology");

    const std::vector<double> adv = detail::normalize_advantages(rollout.advantages);

    const int episodes = static_cast<int>(n) / rollout.horizon;
    const int mb_count = (episodes + cfg.minibatch_episodes - 1) / cfg.minibatch_episodes;
    PpoStats stats;
    int updates = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int mb = 0; mb < mb_count; ++mb) {
            const std::size_t first = static_cast<std::size_t>(mb) * cfg.minibatch_episodes * rollout.horizon;
            const std::size_t last =
                std::min(n, first + static_cast<std::size_t>(cfg.minibatch_episodes) * rollout.horizon);
            const int count = static_cast<int>(last - first);
            Tape tape(&store);
            const detail::LossNodes loss = detail::build_ppo_loss(tape, rollout, cfg, adv, first, last);

            stats.policy_loss += tape.val(loss.policy).v[0];
            stats.value_loss += tape.val(loss.value).v[0];
            stats.entropy += tape.val(loss.entropy).v[0];
            const Tensor& rv = tape.val(loss.ratio);
            int clipped = 0;
            double ratio_sum = 0.0;
            for (double r : rv.v) {
                ratio_sum += r;
                if (std::fabs(r - 1.0) > cfg.clip_eps) ++clipped;
            }
            stats.clip_frac += static_cast<double>(clipped) / static_cast<double>(count);
            stats.mean_ratio += ratio_sum / static_cast<double>(count);

            tape.backward(loss.total);
            store.adam_step(cfg.lr);
            ++updates;
        }
    }
    stats.policy_loss /= updates;
    stats.value_loss /= updates;
    stats.entropy /= updates;
    stats.clip_frac /= updates;
    stats.mean_ratio /= updates;
    return stats;
}

struct CurveRow {
    int iteration = 0;
    double mean_goodput_mb = 0.0;
    double mean_delay_ms = 0.0;
    double drop_pct = 0.0;
    double fluctuation_pct = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_frac = 0.0;
};

struct TrainResult {
    ParamStore store;
    std::vector<CurveRow> curve;
};

// Per iteration: draw unique traffic sequences, replay each `repeats` times,
// collect with Boltzmann exploration, update with PPO.
inline TrainResult train(const Topology& topo, const TrainConfig& cfg, std::uint64_t seed) {
    validate_train_config(cfg);
    TrainResult res{init_mpn_params(cfg.mpn, derive_seed(seed, STREAM_INIT)), {}};
    TrafficConfig tc = cfg.traffic;
    tc.horizon_ms = cfg.horizon * cfg.step_ms;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        std::vector<TrafficSequence> seqs;
        seqs.reserve(cfg.episodes_per_iter);
        for (int k = 0; k < cfg.unique_sequences; ++k) {
            const std::uint64_t tseed =
                derive_seed(seed, STREAM_TRAIN_TRAFFIC, static_cast<std::uint64_t>(iter) * cfg.unique_sequences + k);
            TrafficSequence s = generate_traffic(topo, tseed, tc);
            for (int rep = 0; rep < cfg.repeats; ++rep) seqs.push_back(s);
        }
        Rollout ro = collect_rollout(res.store, topo, seqs, cfg, derive_seed(seed, STREAM_SAMPLER, iter));
        compute_gae(ro, cfg.gamma, cfg.lambda_gae);
        const PpoStats st = ppo_update(res.store, ro, cfg);
        CurveRow row;
        row.iteration = iter;
        for (const EpisodeStat& ep : ro.episodes) {
            row.mean_goodput_mb += ep.goodput_mb;
            row.mean_delay_ms += ep.avg_delay_ms;
            row.drop_pct += ep.drop_pct;
            row.fluctuation_pct += ep.fluctuation_pct;
        }
        const double ne = static_cast<double>(ro.episodes.size());
        row.mean_goodput_mb /= ne;
        row.mean_delay_ms /= ne;
        row.drop_pct /= ne;
        row.fluctuation_pct /= ne;
        row.policy_loss = st.policy_loss;
        row.value_loss = st.value_loss;
        row.entropy = st.entropy;
        row.clip_frac = st.clip_frac;
        res.curve.push_back(row);
    }
    return res;
}

}  // namespace placer
