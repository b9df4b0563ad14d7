#include <CLI11.hpp>
#include <placer.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fs = std::filesystem;
using namespace placer;

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string csv(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

std::string hex_fingerprint(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t file_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a_hash(ss.str());
}

struct TrafficFlags {
    double load_factor = 1.5;
    double tcp_fraction = 0.8;
    double udp_rate_mbps = 5.0;
    std::vector<std::string> hot_pairs;

    void attach(CLI::App* cmd) {
        cmd->add_option("--load-factor", load_factor, "offered demand as a multiple of pair capacity");
        cmd->add_option("--tcp-fraction", tcp_fraction, "fraction of TCP flows, rest UDP");
        cmd->add_option("--udp-rate", udp_rate_mbps, "UDP send rate in Mb/s");
        cmd->add_option("--hot-pair", hot_pairs, "restrict traffic to ordered src,dst pairs (repeatable)");
    }

    TrafficConfig to_config() const {
        TrafficConfig tc;
        tc.load_factor = load_factor;
        tc.tcp_fraction = tcp_fraction;
        tc.udp_rate_mbps = udp_rate_mbps;
        for (const std::string& s : hot_pairs) {
            int a = -1, b = -1;
            if (std::sscanf(s.c_str(), "%d,%d", &a, &b) != 2)
                throw CLI::ValidationError("--hot-pair", "expected src,dst but got '" + s + "'");
            tc.hot_pairs.emplace_back(a, b);
        }
        return tc;
    }

    std::string canon() const {
        std::string s = "load_factor=" + fmt(load_factor) + ";tcp_fraction=" + fmt(tcp_fraction) +
                        ";udp_rate=" + fmt(udp_rate_mbps) + ";hot_pairs=";
        for (std::size_t i = 0; i < hot_pairs.size(); ++i) s += (i ? "|" : "") + hot_pairs[i];
        return s;
    }
};

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

// Mirror of the library's greedy/static evaluation loop with optional
// per-step artifacts; metrics match the plain evaluation bit for bit.
Metrics eval_episode_artifacts(ParamStore* store, const RoutingTables* static_tables, const Topology& topo,
                               const TrafficSequence& seq, int horizon, double step_ms, bool zero_telemetry,
                               std::ostream* trace, std::ostream* dump) {
    Simulator sim(topo, seq);
    StateGraphOptions opt;
    opt.mean_injected_bytes = static_cast<double>(seq.total_bytes()) / horizon;
    opt.zero_telemetry = zero_telemetry;
    Telemetry tel = sim.collect_telemetry();
    std::vector<RoutingTables> tabs;
    if (trace) *trace << "step,src,dst,bytes_tx,pkts_dropped,queue_fill\n";
    for (int t = 0; t < horizon; ++t) {
        RoutingTables tab;
        if (!static_tables || dump) {
            const StateGraph sg = build_state_graph(topo, tel, t, horizon, opt);
            if (dump) dump_state_csv(*dump, sg, t);
            if (!static_tables) tab = greedy_tables(pairwise_sq_dist(decompose(encode(*store, sg))), topo);
        }
        if (static_tables) tab = *static_tables;
        sim.install_routing(tab);
        tel = sim.simulate_step(step_ms).first;
        if (trace)
            for (int e = 0; e < topo.num_links(); ++e) {
                const Link& l = topo.link(e);
                *trace << t << ',' << l.src << ',' << l.dst << ',' << tel.bytes_tx[e] << ',' << tel.pkts_dropped[e]
                       << ',' << csv(tel.queue_fill[e]) << "\n";
            }
        if (!static_tables) tabs.push_back(std::move(tab));
    }
    const EpisodeMetrics em = sim.episode_metrics();
    const double fluct = !static_tables && tabs.size() >= 2 ? fluctuation_pct(tabs) : 0.0;
    return {em.goodput_mb, em.avg_delay_ms, em.drop_pct, fluct};
}

void write_eval_csv(const fs::path& path, const std::vector<Metrics>& rows, std::uint64_t fingerprint) {
    std::ofstream out = open_out(path);
    out << "# config_fingerprint=" << hex_fingerprint(fingerprint) << "\n";
    out << "episode,goodput_mb,avg_delay_ms,drop_pct,fluctuation_pct\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
        out << i << ',' << csv(rows[i].goodput_mb) << ',' << csv(rows[i].avg_delay_ms) << ',' << csv(rows[i].drop_pct)
            << ',' << csv(rows[i].fluctuation_pct) << "\n";
    if (rows.size() >= 4) {
        std::vector<double> g, d, p, f;
        for (const Metrics& m : rows) {
            g.push_back(m.goodput_mb);
            d.push_back(m.avg_delay_ms);
            p.push_back(m.drop_pct);
            f.push_back(m.fluctuation_pct);
        }
        out << "iqm," << csv(aggregate_iqm(g)) << ',' << csv(aggregate_iqm(d)) << ',' << csv(aggregate_iqm(p)) << ','
            << csv(aggregate_iqm(f)) << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"telemetry-aware greedy routing on latent node embeddings"};
    app.require_subcommand(1);

    // ---- train ----------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train a routing policy with PPO");
    std::string topology, out_dir = "out";
    std::uint64_t seed = 1;
    TrainConfig tcfg;
    TrafficFlags traffic;
    train_cmd->add_option("--topology", topology, "topology file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--seed", seed, "run seed");
    train_cmd->add_option("--d", tcfg.mpn.d, "embedding dimension");
    train_cmd->add_option("--hidden", tcfg.mpn.hidden, "hidden width");
    train_cmd->add_option("--layers", tcfg.mpn.layers, "message-passing rounds");
    train_cmd->add_flag("--separate-critic-trunk", tcfg.mpn.separate_critic_trunk,
                        "give the critic its own message-passing trunk");
    train_cmd->add_option("--iterations", tcfg.iterations, "PPO iterations");
    train_cmd->add_option("--episodes", tcfg.episodes_per_iter, "episodes per iteration");
    train_cmd->add_option("--unique", tcfg.unique_sequences, "distinct traffic sequences per iteration");
    train_cmd->add_option("--horizon", tcfg.horizon, "steps per episode");
    train_cmd->add_option("--step-ms", tcfg.step_ms, "simulated step length in ms");
    train_cmd->add_option("--gamma", tcfg.gamma, "discount");
    train_cmd->add_option("--lambda", tcfg.lambda_gae, "GAE lambda");
    train_cmd->add_option("--clip-eps", tcfg.clip_eps, "PPO clip width");
    train_cmd->add_option("--epochs", tcfg.epochs, "update epochs per iteration");
    train_cmd->add_option("--minibatch", tcfg.minibatch_episodes, "episodes per minibatch");
    train_cmd->add_option("--lr", tcfg.lr, "Adam learning rate");
    train_cmd->add_option("--entropy-coef", tcfg.entropy_coef, "entropy bonus weight");
    train_cmd->add_option("--value-coef", tcfg.value_coef, "value loss weight");
    train_cmd->add_option("--tau", tcfg.tau, "Boltzmann temperature during collection");
    train_cmd->add_option("--out", out_dir, "output directory");
    traffic.attach(train_cmd);
    train_cmd->callback([&]() {
        const Topology topo = load_topology(topology);
        tcfg.traffic = traffic.to_config();
        if (tcfg.episodes_per_iter % tcfg.unique_sequences != 0)
            throw CLI::ValidationError("--episodes", "must be a multiple of --unique");
        tcfg.repeats = tcfg.episodes_per_iter / tcfg.unique_sequences;

        const std::string canon =
            "cmd=train;topology=" + fs::path(topology).filename().string() + ";seed=" + std::to_string(seed) +
            ";d=" + std::to_string(tcfg.mpn.d) + ";hidden=" + std::to_string(tcfg.mpn.hidden) +
            ";layers=" + std::to_string(tcfg.mpn.layers) +
            ";separate_critic=" + std::to_string(tcfg.mpn.separate_critic_trunk ? 1 : 0) +
            ";iterations=" + std::to_string(tcfg.iterations) + ";episodes=" + std::to_string(tcfg.episodes_per_iter) +
            ";unique=" + std::to_string(tcfg.unique_sequences) + ";horizon=" + std::to_string(tcfg.horizon) +
            ";step_ms=" + fmt(tcfg.step_ms) + ";gamma=" + fmt(tcfg.gamma) + ";lambda=" + fmt(tcfg.lambda_gae) +
            ";clip_eps=" + fmt(tcfg.clip_eps) + ";epochs=" + std::to_string(tcfg.epochs) +
            ";minibatch=" + std::to_string(tcfg.minibatch_episodes) + ";lr=" + fmt(tcfg.lr) +
            ";entropy_coef=" + fmt(tcfg.entropy_coef) + ";value_coef=" + fmt(tcfg.value_coef) +
            ";tau=" + fmt(tcfg.tau) + ";" + traffic.canon();
        const std::uint64_t fp = config_fingerprint(canon);

        const TrainResult res = train(topo, tcfg, seed);

        fs::create_directories(out_dir);
        std::ofstream curve = open_out(fs::path(out_dir) / "curve.csv");
        curve << "# config_fingerprint=" << hex_fingerprint(fp) << "\n";
        curve << "iteration,mean_goodput_mb,mean_delay_ms,drop_pct,fluctuation_pct,policy_loss,value_loss,entropy,"
                 "clip_frac\n";
        for (const CurveRow& r : res.curve)
            curve << r.iteration << ',' << csv(r.mean_goodput_mb) << ',' << csv(r.mean_delay_ms) << ','
                  << csv(r.drop_pct) << ',' << csv(r.fluctuation_pct) << ',' << csv(r.policy_loss) << ','
                  << csv(r.value_loss) << ',' << csv(r.entropy) << ',' << csv(r.clip_frac) << "\n";
        curve.close();
        res.store.save((fs::path(out_dir) / "checkpoint.bin").string());

        const CurveRow& last = res.curve.back();
        std::cout << "config_fingerprint=" << hex_fingerprint(fp) << "\n";
        std::cout << "trained " << tcfg.iterations << " iterations; final mean goodput " << csv(last.mean_goodput_mb)
                  << " MB, fluctuation " << csv(last.fluctuation_pct) << "%\n";
        std::cout << "wrote " << (fs::path(out_dir) / "curve.csv").string() << " and "
                  << (fs::path(out_dir) / "checkpoint.bin").string() << "\n";
    });

    // ---- eval -----------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or the EIGRP baseline on held-out traffic");
    std::string checkpoint, baseline, trace_path, dump_path;
    int episodes = 30, horizon = 400;
    double step_ms = 5.0;
    bool zero_telemetry = false;
    eval_cmd->add_option("--topology", topology, "topology file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--checkpoint", checkpoint, "trained parameter file")->check(CLI::ExistingFile);
    eval_cmd->add_option("--baseline", baseline, "baseline name")->check(CLI::IsMember({"eigrp"}));
    eval_cmd->add_option("--seed", seed, "held-out traffic seed");
    eval_cmd->add_option("--episodes", episodes, "number of held-out sequences")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--horizon", horizon, "steps per episode")->check(CLI::PositiveNumber);
    eval_cmd->add_option("--step-ms", step_ms, "simulated step length in ms");
    eval_cmd->add_flag("--zero-telemetry", zero_telemetry, "zero all telemetry-derived features");
    eval_cmd->add_option("--trace", trace_path, "per-step link counters CSV (first episode)");
    eval_cmd->add_option("--dump-state", dump_path, "per-step state graph CSV (first episode)");
    eval_cmd->add_option("--out", out_dir, "output directory");
    traffic.attach(eval_cmd);
    eval_cmd->callback([&]() {
        if (checkpoint.empty() == baseline.empty())
            throw CLI::ValidationError("eval", "pass exactly one of --checkpoint or --baseline");
        const Topology topo = load_topology(topology);
        const TrafficConfig tc = traffic.to_config();
        const std::vector<TrafficSequence> seqs = eval_sequences(topo, seed, episodes, tc, horizon * step_ms);

        std::string canon = "cmd=eval;topology=" + fs::path(topology).filename().string() +
                            ";seed=" + std::to_string(seed) + ";episodes=" + std::to_string(episodes) +
                            ";horizon=" + std::to_string(horizon) + ";step_ms=" + fmt(step_ms) +
                            ";zero_telemetry=" + std::to_string(zero_telemetry ? 1 : 0) + ";" + traffic.canon();

        ParamStore store;
        RoutingTables eigrp;
        const bool use_policy = !checkpoint.empty();
        if (use_policy) {
            store = ParamStore::load(checkpoint);
            canon += ";checkpoint=" + hex_fingerprint(file_fingerprint(checkpoint));
        } else {
            eigrp = shortest_path_tables(topo);
            canon += ";baseline=eigrp";
        }
        const std::uint64_t fp = config_fingerprint(canon);

        std::ofstream trace_file, dump_file;
        if (!trace_path.empty()) trace_file = open_out(trace_path);
        if (!dump_path.empty()) dump_file = open_out(dump_path);

        std::vector<Metrics> rows;
        rows.reserve(seqs.size());
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            std::ostream* tr = i == 0 && trace_file.is_open() ? &trace_file : nullptr;
            std::ostream* du = i == 0 && dump_file.is_open() ? &dump_file : nullptr;
            rows.push_back(eval_episode_artifacts(use_policy ? &store : nullptr, use_policy ? nullptr : &eigrp, topo,
                                                  seqs[i], horizon, step_ms, zero_telemetry, tr, du));
        }
        write_eval_csv(fs::path(out_dir) / "eval.csv", rows, fp);

        std::cout << "config_fingerprint=" << hex_fingerprint(fp) << "\n";
        if (rows.size() >= 4) {
            std::vector<double> g, f;
            for (const Metrics& m : rows) {
                g.push_back(m.goodput_mb);
                f.push_back(m.fluctuation_pct);
            }
            std::cout << (use_policy ? "policy" : "eigrp") << " IQM goodput " << csv(aggregate_iqm(g))
                      << " MB, IQM fluctuation " << csv(aggregate_iqm(f)) << "% over " << rows.size()
                      << " episodes\n";
        }
        std::cout << "wrote " << (fs::path(out_dir) / "eval.csv").string() << "\n";
    });

    // ---- baseline eigrp -------------------------------------------------
    auto* baseline_cmd = app.add_subcommand("baseline", "static baselines");
    auto* eigrp_cmd = baseline_cmd->add_subcommand("eigrp", "composite-metric shortest-path tables");
    eigrp_cmd->add_option("--topology", topology, "topology file")->required()->check(CLI::ExistingFile);
    eigrp_cmd->add_option("--out", out_dir, "output directory");
    eigrp_cmd->callback([&]() {
        const Topology topo = load_topology(topology);
        const RoutingTables tables = shortest_path_tables(topo);
        std::ofstream out = open_out(fs::path(out_dir) / "eigrp_tables.csv");
        out << "u,z,next_hop\n";
        for (int u = 0; u < tables.num_nodes; ++u)
            for (int z = 0; z < tables.num_nodes; ++z)
                if (u != z) out << u << ',' << z << ',' << tables.at(u, z) << "\n";
        std::cout << "wrote " << (fs::path(out_dir) / "eigrp_tables.csv").string() << "\n";
    });

    // ---- export-embeddings ----------------------------------------------
    auto* svg_cmd = app.add_subcommand("export-embeddings", "draw the latent embedding inside the unit circle");
    int step_index = 0;
    svg_cmd->add_option("--topology", topology, "topology file")->required()->check(CLI::ExistingFile);
    svg_cmd->add_option("--checkpoint", checkpoint, "trained parameter file")->required()->check(CLI::ExistingFile);
    svg_cmd->add_option("--seed", seed, "traffic seed for the replayed episode");
    svg_cmd->add_option("--step", step_index, "episode step to draw");
    svg_cmd->add_option("--horizon", horizon, "steps per episode")->check(CLI::PositiveNumber);
    svg_cmd->add_option("--step-ms", step_ms, "simulated step length in ms");
    svg_cmd->add_option("--out", out_dir, "output directory");
    traffic.attach(svg_cmd);
    svg_cmd->callback([&]() {
        const Topology topo = load_topology(topology);
        ParamStore store = ParamStore::load(checkpoint);
        std::ofstream out = open_out(fs::path(out_dir) / "embeddings.svg");
        export_embeddings_svg(out, store, topo, seed, step_index, horizon, step_ms, traffic.to_config());
        std::cout << "wrote " << (fs::path(out_dir) / "embeddings.svg").string() << "\n";
    });

    // ---- report seeds ----------------------------------------------------
    auto* report_cmd = app.add_subcommand("report", "cross-run reports");
    auto* seeds_cmd = report_cmd->add_subcommand("seeds", "goodput-vs-fluctuation scatter across checkpoints");
    std::vector<std::string> checkpoints;
    seeds_cmd->add_option("--topology", topology, "topology file")->required()->check(CLI::ExistingFile);
    seeds_cmd->add_option("--checkpoint", checkpoints, "trained parameter file (repeatable)")
        ->required()
        ->check(CLI::ExistingFile);
    seeds_cmd->add_option("--seed", seed, "held-out traffic seed");
    seeds_cmd->add_option("--episodes", episodes, "episodes per checkpoint")->check(CLI::PositiveNumber);
    seeds_cmd->add_option("--horizon", horizon, "steps per episode")->check(CLI::PositiveNumber);
    seeds_cmd->add_option("--step-ms", step_ms, "simulated step length in ms");
    seeds_cmd->add_option("--out", out_dir, "output directory");
    traffic.attach(seeds_cmd);
    seeds_cmd->callback([&]() {
        const Topology topo = load_topology(topology);
        const TrafficConfig tc = traffic.to_config();
        const std::vector<TrafficSequence> seqs = eval_sequences(topo, seed, episodes, tc, horizon * step_ms);

        std::string canon = "cmd=report-seeds;topology=" + fs::path(topology).filename().string() +
                            ";seed=" + std::to_string(seed) + ";episodes=" + std::to_string(episodes) +
                            ";horizon=" + std::to_string(horizon) + ";step_ms=" + fmt(step_ms) + ";" + traffic.canon();
        for (const std::string& c : checkpoints) canon += ";checkpoint=" + hex_fingerprint(file_fingerprint(c));

        std::ofstream out = open_out(fs::path(out_dir) / "seeds_scatter.csv");
        out << "# config_fingerprint=" << hex_fingerprint(config_fingerprint(canon)) << "\n";
        out << "checkpoint,episode,goodput_mb,fluctuation_pct\n";
        for (const std::string& c : checkpoints) {
            ParamStore store = ParamStore::load(c);
            const std::vector<Metrics> ms = run_eval_policy(store, topo, seqs, horizon, step_ms);
            const std::string label = fs::path(c).filename().string();
            std::vector<double> g, f;
            for (std::size_t i = 0; i < ms.size(); ++i) {
                out << label << ',' << i << ',' << csv(ms[i].goodput_mb) << ',' << csv(ms[i].fluctuation_pct) << "\n";
                g.push_back(ms[i].goodput_mb);
                f.push_back(ms[i].fluctuation_pct);
            }
            if (ms.size() >= 4)
                out << label << ",iqm," << csv(aggregate_iqm(g)) << ',' << csv(aggregate_iqm(f)) << "\n";
        }
        std::cout << "wrote " << (fs::path(out_dir) / "seeds_scatter.csv").string() << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
