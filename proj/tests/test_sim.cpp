#include <catch2/catch_amalgamated.hpp>
#include <placer/eigrp.hpp>
#include <placer/sim.hpp>
#include <placer/topology.hpp>
#include <placer/traffic.hpp>

using namespace placer;

namespace {

Topology one_link(double rate_mbps = 100.0, int buffer = 100) {
    return make_topology(2, {{0, 1, rate_mbps, 1.0, buffer}});
}

TrafficSequence single_flow(Protocol proto, std::int64_t bytes, double udp_rate = 10.0, int src = 0, int dst = 1,
                            double horizon_ms = 100.0) {
    TrafficSequence seq;
    seq.horizon_ms = horizon_ms;
    FlowSpec f;
    f.id = 0;
    f.src = src;
    f.dst = dst;
    f.size_bytes = bytes;
    f.start_ms = 0.0;
    f.protocol = proto;
    f.udp_rate_mbps = udp_rate;
    seq.flows.push_back(f);
    return seq;
}

void check_conservation(const Simulator& sim) {
    REQUIRE(sim.injected_payload_bytes() ==
            sim.delivered_copy_payload_bytes() + sim.dropped_payload_bytes() + sim.inflight_payload_bytes());
}

}  // namespace

// Oracle timeline, 10 Mb/s UDP flow of 5840 B over a 100 Mb/s / 1 ms link:
// pacing credit 125 B per tick sends the four 1500 B packets at ticks 11, 23,
// 35, 47; each takes 0.12 ms serialization + 1 ms propagation (delay 1.12 ms);
// the tick-47 packet is still on the wire when the 5 ms step ends.
TEST_CASE("UDP pacing follows the hand timeline on an uncongested link") {
    const Topology topo = one_link();
    Simulator sim(topo, single_flow(Protocol::UDP, 5840));
    sim.install_routing(shortest_path_tables(topo));
    const auto [tel, reward] = sim.simulate_step(5.0);

    const int fwd = topo.link_index(0, 1);
    const int rev = topo.link_index(1, 0);
    REQUIRE(tel.window_ms == Catch::Approx(5.0));
    REQUIRE(tel.bytes_tx[fwd] == 6000);  // 4 × 1500 wire bytes
    REQUIRE(tel.bytes_tx[rev] == 0);
    REQUIRE(tel.pkts_dropped[fwd] == 0);
    REQUIRE(tel.queue_fill[fwd] == 0.0);
    REQUIRE(tel.injected_bytes == 5840);
    REQUIRE(reward.goodput_mb == Catch::Approx(4380.0 / 1e6));

    REQUIRE(sim.injected_payload_bytes() == 5840);
    REQUIRE(sim.delivered_copy_payload_bytes() == 4380);
    REQUIRE(sim.dropped_payload_bytes() == 0);
    REQUIRE(sim.inflight_payload_bytes() == 1460);
    check_conservation(sim);

    const EpisodeMetrics m = sim.episode_metrics();
    REQUIRE(m.delivered_data_packets == 3);
    REQUIRE(m.avg_delay_ms == Catch::Approx(1.12).margin(1e-12));
    REQUIRE(m.goodput_mb == Catch::Approx(4380.0 / 1e6));
}

// Uncongested 2-hop path: 2 ms propagation + two 0.12 ms serializations.
TEST_CASE("two-hop delivery delay equals propagation plus per-hop serialization") {
    const Topology topo = make_topology(3, {{0, 1, 100.0, 1.0, 100}, {1, 2, 100.0, 1.0, 100}});
    Simulator sim(topo, single_flow(Protocol::UDP, 1460, 120.0, 0, 2));
    sim.install_routing(shortest_path_tables(topo));
    sim.simulate_step(5.0);
    const EpisodeMetrics m = sim.episode_metrics();
    REQUIRE(m.delivered_data_packets == 1);
    REQUIRE(m.avg_delay_ms == Catch::Approx(2.24).margin(1e-12));
    check_conservation(sim);
}

// 200 Mb/s offered into a 100 Mb/s link: fluid limit drops half the packets,
// and with at least one injection attempt per tick the 10-packet buffer is
// topped up after every transmit, so the end-of-step fill sample is exactly 1.
TEST_CASE("steady overload drops about half the offered packets and saturates the queue") {
    const Topology topo = one_link(100.0, 10);
    Simulator sim(topo, single_flow(Protocol::UDP, 2'000'000, 200.0, 0, 1, 100.0));
    sim.install_routing(shortest_path_tables(topo));
    Telemetry last;
    for (int s = 0; s < 10; ++s) last = sim.simulate_step(5.0).first;

    const int fwd = topo.link_index(0, 1);
    REQUIRE(last.queue_fill[fwd] == 1.0);
    REQUIRE(sim.dropped_payload_bytes() > 0);
    const double drop_rate =
        static_cast<double>(sim.dropped_payload_bytes()) / static_cast<double>(sim.injected_payload_bytes());
    REQUIRE(drop_rate > 0.45);
    REQUIRE(drop_rate < 0.55);
    check_conservation(sim);

    const EpisodeMetrics m = sim.episode_metrics();
    REQUIRE(m.drop_pct == Catch::Approx(drop_rate * 100.0));
}

TEST_CASE("a small TCP flow completes without loss") {
    const Topology topo = one_link();
    Simulator sim(topo, single_flow(Protocol::TCP, 14600));
    sim.install_routing(shortest_path_tables(topo));
    for (int s = 0; s < 10; ++s) sim.simulate_step(5.0);

    REQUIRE(sim.injected_payload_bytes() == 14600);
    REQUIRE(sim.goodput_payload_bytes() == 14600);
    REQUIRE(sim.dropped_payload_bytes() == 0);
    REQUIRE(sim.inflight_payload_bytes() == 0);
    const EpisodeMetrics m = sim.episode_metrics();
    REQUIRE(m.delivered_data_packets == 10);
    REQUIRE(m.drop_pct == 0.0);
    check_conservation(sim);
}

TEST_CASE("TCP recovers from overload through retransmission") {
    // 10 Mb/s bottleneck with a tiny buffer forces drops; the flow must still
    // deliver everything eventually via timeouts and halving.
    const Topology topo = one_link(10.0, 5);
    Simulator sim(topo, single_flow(Protocol::TCP, 146'000, 0.0, 0, 1, 2000.0));
    sim.install_routing(shortest_path_tables(topo));
    for (int s = 0; s < 200; ++s) sim.simulate_step(5.0);
    REQUIRE(sim.goodput_payload_bytes() == 146'000);
    check_conservation(sim);
}

TEST_CASE("byte conservation holds on random mixed traffic") {
    const Topology topo = load_topology(std::string(PLACER_DATA_DIR) + "/mini5.topo");
    const RoutingTables tables = shortest_path_tables(topo);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TrafficConfig cfg;
        cfg.horizon_ms = 200.0;
        Simulator sim(topo, generate_traffic(topo, seed, cfg));
        sim.install_routing(tables);
        for (int s = 0; s < 40; ++s) sim.simulate_step(5.0);
        check_conservation(sim);
        const EpisodeMetrics m = sim.episode_metrics();
        REQUIRE(m.drop_pct >= 0.0);
        REQUIRE(m.drop_pct <= 100.0);
    }
}

TEST_CASE("identical runs produce bit-identical telemetry and metrics") {
    const Topology topo = load_topology(std::string(PLACER_DATA_DIR) + "/mini5.topo");
    TrafficConfig cfg;
    cfg.horizon_ms = 100.0;
    const TrafficSequence seq = generate_traffic(topo, 5, cfg);
    const RoutingTables tables = shortest_path_tables(topo);

    auto run = [&] {
        Simulator sim(topo, seq);
        sim.install_routing(tables);
        std::vector<Telemetry> tels;
        for (int s = 0; s < 20; ++s) tels.push_back(sim.simulate_step(5.0).first);
        return std::make_pair(tels, sim.episode_metrics());
    };
    const auto [tels_a, m_a] = run();
    const auto [tels_b, m_b] = run();
    for (std::size_t s = 0; s < tels_a.size(); ++s) {
        REQUIRE(tels_a[s].bytes_tx == tels_b[s].bytes_tx);
        REQUIRE(tels_a[s].pkts_dropped == tels_b[s].pkts_dropped);
        REQUIRE(tels_a[s].queue_fill == tels_b[s].queue_fill);
    }
    REQUIRE(m_a.goodput_mb == m_b.goodput_mb);
    REQUIRE(m_a.avg_delay_ms == m_b.avg_delay_ms);
    REQUIRE(m_a.drop_pct == m_b.drop_pct);
}

TEST_CASE("routing loops terminate via TTL and count as drops") {
    const Topology topo = make_topology(3, {{0, 1, 100.0, 1.0, 100}, {1, 2, 100.0, 1.0, 100}});
    RoutingTables tables(3);
    tables.set(0, 1, 1);
    tables.set(0, 2, 1);
    tables.set(1, 0, 0);
    tables.set(1, 2, 0);  // 0 and 1 bounce packets for destination 2
    tables.set(2, 0, 1);
    tables.set(2, 1, 1);
    Simulator sim(topo, single_flow(Protocol::UDP, 14600, 50.0, 0, 2));
    sim.install_routing(tables);
    for (int s = 0; s < 40; ++s) sim.simulate_step(5.0);
    REQUIRE(sim.goodput_payload_bytes() == 0);
    REQUIRE(sim.dropped_payload_bytes() == sim.injected_payload_bytes());
    REQUIRE(sim.inflight_payload_bytes() == 0);
    check_conservation(sim);
}

TEST_CASE("install_routing validates tables against the topology") {
    const Topology topo = load_topology(std::string(PLACER_DATA_DIR) + "/twopath.topo");
    Simulator sim(topo, single_flow(Protocol::UDP, 1460, 10.0, 0, 3));

    RoutingTables missing = shortest_path_tables(topo);
    missing.set(0, 3, -1);
    REQUIRE_THROWS_WITH(sim.install_routing(missing), Catch::Matchers::ContainsSubstring("(0,3)"));

    RoutingTables bad_hop = shortest_path_tables(topo);
    bad_hop.set(0, 3, 3);  // 3 is not adjacent to 0
    REQUIRE_THROWS_WITH(sim.install_routing(bad_hop), Catch::Matchers::ContainsSubstring("(0,3)"));

    REQUIRE_THROWS_AS(sim.simulate_step(5.0), std::logic_error);  // nothing installed yet
    sim.install_routing(shortest_path_tables(topo));
    REQUIRE_THROWS_AS(sim.simulate_step(0.05), std::invalid_argument);
    REQUIRE_THROWS_AS(sim.simulate_step(-5.0), std::invalid_argument);
    REQUIRE_THROWS_AS(sim.simulate_step(5.03), std::invalid_argument);
}

TEST_CASE("no active flows means zero reward and zero telemetry") {
    const Topology topo = one_link();
    TrafficSequence empty;
    empty.horizon_ms = 100.0;
    Simulator sim(topo, empty);
    sim.install_routing(shortest_path_tables(topo));
    const auto [tel, reward] = sim.simulate_step(5.0);
    REQUIRE(reward.goodput_mb == 0.0);
    for (std::int64_t b : tel.bytes_tx) REQUIRE(b == 0);
    for (std::int64_t d : tel.pkts_dropped) REQUIRE(d == 0);
    const EpisodeMetrics m = sim.episode_metrics();
    REQUIRE(m.goodput_mb == 0.0);
    REQUIRE(m.avg_delay_ms == 0.0);
    REQUIRE(m.drop_pct == 0.0);
    REQUIRE(m.delivered_data_packets == 0);
}

TEST_CASE("collect_telemetry resets the window") {
    const Topology topo = one_link();
    Simulator sim(topo, single_flow(Protocol::UDP, 5840));
    sim.install_routing(shortest_path_tables(topo));
    sim.simulate_step(5.0);
    const Telemetry again = sim.collect_telemetry();  // window already consumed by simulate_step
    REQUIRE(again.window_ms == 0.0);
    for (std::int64_t b : again.bytes_tx) REQUIRE(b == 0);
    REQUIRE(again.injected_bytes == 0);
}
