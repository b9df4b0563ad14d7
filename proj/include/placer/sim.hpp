#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <utility>
#include <vector>

#include "placer/routing.hpp"
#include "placer/topology.hpp"
#include "placer/traffic.hpp"

namespace placer {

constexpr std::int64_t TICK_NS = 100000;  // 0.1 ms
constexpr int MTU_WIRE_BYTES = 1500;
constexpr int HEADER_BYTES = 40;
constexpr int MTU_PAYLOAD_BYTES = MTU_WIRE_BYTES - HEADER_BYTES;
constexpr int ACK_WIRE_BYTES = 64;
constexpr int TTL_INITIAL = 32;
constexpr double TCP_CWND_INIT = 2.0;
constexpr int TCP_SSTHRESH_INIT = 32;
constexpr std::int64_t TCP_SRTT_INIT_NS = 2'000'000;
constexpr std::int64_t TCP_RTO_MIN_NS = 4'000'000;

// Windowed counters since the previous collect, plus an instantaneous
// queue-fill sample taken at collection time.
struct Telemetry {
    double window_ms = 0.0;
    std::vector<std::int64_t> bytes_tx;              // per link, wire bytes
    std::vector<std::int64_t> pkts_dropped;          // per link, packet copies
    std::vector<double> queue_fill;                  // per link, in [0,1]
    std::vector<std::int64_t> node_delivered_bytes;  // first-time payload per node
    std::int64_t injected_bytes = 0;                 // payload handed to the network
};

struct StepReward {
    double goodput_mb = 0.0;  // payload MB delivered to applications this step
};

struct EpisodeMetrics {
    double goodput_mb = 0.0;
    double avg_delay_ms = 0.0;  // over first-time delivered data packets; 0 if none
    double drop_pct = 0.0;      // dropped payload / injected payload × 100
    std::int64_t delivered_data_packets = 0;
};

// Deterministic packet-level simulator. Time advances in 0.1 ms ticks; within
// a tick, phases run arrivals, transmissions, then transport injection, each
// iterating links (by id, FIFO within a queue) or flows (by id). Event
// timestamps (serialization start/end, arrival) are exact nanoseconds, so
// uncongested delays are independent of the tick grid. Store-and-forward:
// a packet is forwardable once fully received. Drop-tail queues; TTL
// decrements at intermediate forwards. No randomness anywhere: identical
// inputs give bit-identical runs.
class Simulator {
public:
    Simulator(const Topology& topo, const TrafficSequence& traffic) : topo_(topo), traffic_(traffic) {
        const int L = topo_.num_links();
        links_.resize(L);
        prop_ns_.resize(L);
        for (int i = 0; i < L; ++i) prop_ns_[i] = std::llround(topo_.link(i).prop_delay_ms * 1e6);
        flows_.resize(traffic_.flows.size());
        bytes_tx_win_.assign(L, 0);
        drops_win_.assign(L, 0);
        node_delivered_win_.assign(topo_.num_nodes(), 0);
        for (std::size_t i = 1; i < traffic_.flows.size(); ++i)
            if (traffic_.flows[i].start_ms < traffic_.flows[i - 1].start_ms)
                throw std::invalid_argument("traffic sequence: flows not sorted by start time");
        for (const FlowSpec& f : traffic_.flows)
            if (f.src < 0 || f.src >= topo_.num_nodes() || f.dst < 0 || f.dst >= topo_.num_nodes() || f.src == f.dst)
                throw std::invalid_argument("traffic sequence: flow " + std::to_string(f.id) + " has invalid endpoints");
    }

    // Takes effect for all future forwarding decisions; packets already
    // queued or mid-link are unaffected.
    void install_routing(const RoutingTables& tables) {
        validate_routing(topo_, tables);
        tables_ = tables;
        routing_installed_ = true;
    }

    std::pair<Telemetry, StepReward> simulate_step(double duration_ms) {
        if (!routing_installed_) throw std::logic_error("simulate_step: no routing tables installed");
        const std::int64_t dur_ns = std::llround(duration_ms * 1e6);
        if (dur_ns <= 0 || dur_ns % TICK_NS != 0)
            throw std::invalid_argument("simulate_step: duration must be a positive multiple of 0.1 ms");
        const std::int64_t ticks = dur_ns / TICK_NS;
        for (std::int64_t i = 0; i < ticks; ++i) run_tick();
        StepReward reward{static_cast<double>(goodput_win_bytes_) / 1e6};
        episode_goodput_mb_ += reward.goodput_mb;
        ++steps_completed_;
        Telemetry tel = collect_telemetry();
        return {tel, reward};
    }

    // Returns the windowed counters and resets them; call at step boundaries.
    // queue_fill is an instantaneous sample, not a windowed counter.
    Telemetry collect_telemetry() {
        Telemetry t;
        t.window_ms = static_cast<double>(window_ns_) / 1e6;
        t.bytes_tx = bytes_tx_win_;
        t.pkts_dropped = drops_win_;
        t.node_delivered_bytes = node_delivered_win_;
        t.injected_bytes = injected_win_bytes_;
        t.queue_fill.resize(links_.size());
        for (std::size_t i = 0; i < links_.size(); ++i)
            t.queue_fill[i] = static_cast<double>(links_[i].queue.size()) / topo_.link(static_cast<int>(i)).buffer_pkts;
        window_ns_ = 0;
        std::fill(bytes_tx_win_.begin(), bytes_tx_win_.end(), 0);
        std::fill(drops_win_.begin(), drops_win_.end(), 0);
        std::fill(node_delivered_win_.begin(), node_delivered_win_.end(), 0);
        injected_win_bytes_ = 0;
        goodput_win_bytes_ = 0;
        return t;
    }

    EpisodeMetrics episode_metrics() const {
        EpisodeMetrics m;
        m.goodput_mb = episode_goodput_mb_;  // exact sum of the per-step rewards
        m.delivered_data_packets = delivered_first_pkts_;
        m.avg_delay_ms = delivered_first_pkts_ > 0
                             ? (static_cast<double>(delay_sum_ns_) / 1e6) / static_cast<double>(delivered_first_pkts_)
                             : 0.0;
        m.drop_pct = injected_total_bytes_ > 0
                         ? static_cast<double>(dropped_total_bytes_) * 100.0 / static_cast<double>(injected_total_bytes_)
                         : 0.0;
        return m;
    }

    // Episode accounting, in payload bytes at packet-copy granularity.
    std::int64_t injected_payload_bytes() const { return injected_total_bytes_; }
    std::int64_t delivered_copy_payload_bytes() const { return delivered_copies_bytes_; }
    std::int64_t dropped_payload_bytes() const { return dropped_total_bytes_; }
    std::int64_t goodput_payload_bytes() const { return goodput_total_bytes_; }

    // Walks queues and wires; conservation holds exactly:
    // injected == delivered_copies + dropped + in_flight.
    std::int64_t inflight_payload_bytes() const {
        std::int64_t sum = 0;
        for (const LinkState& ls : links_) {
            for (const Packet& p : ls.queue)
                if (!p.is_ack) sum += p.payload;
            for (const Packet& p : ls.wire)
                if (!p.is_ack) sum += p.payload;
        }
        return sum;
    }

    std::int64_t clock_ns() const { return cur_tick_ * TICK_NS; }
    int steps_completed() const { return steps_completed_; }
    const Topology& topology() const { return topo_; }

private:
    struct Packet {
        int flow = -1;
        int seq = 0;  // data: segment index; ack: cumulative next-expected seq
        std::int32_t payload = 0;
        std::int32_t wire = 0;
        std::int16_t ttl = TTL_INITIAL;
        bool is_ack = false;
        int dst = 0;  // routing destination
        std::int64_t inject_ns = 0;
        std::int64_t ready_ns = 0;    // fully received / handed over at head node
        std::int64_t arrival_ns = 0;  // set when transmission starts
    };

    struct LinkState {
        std::deque<Packet> queue;  // egress FIFO, capacity = buffer_pkts
        std::deque<Packet> wire;   // serialized, propagating
        std::int64_t free_ns = 0;  // transmitter free time
    };

    struct FlowState {
        bool active = false;
        bool done = false;  // transport finished injecting (UDP) / fully acked (TCP)
        int total_pkts = 0;
        std::int32_t last_payload = 0;
        // TCP
        double cwnd = TCP_CWND_INIT;
        int ssthresh = TCP_SSTHRESH_INIT;
        std::int64_t srtt_ns = TCP_SRTT_INIT_NS;
        std::int64_t rto_deadline_ns = -1;  // -1 = disarmed
        int send_base = 0;
        int next_seq = 0;
        std::vector<std::int64_t> sent_ns;  // last copy send time per seq
        std::vector<bool> retx;             // seq was ever retransmitted (Karn)
        // receiver
        std::vector<bool> received;
        int recv_next = 0;  // cumulative ack pointer
        // UDP
        double udp_credit = 0.0;
    };

    std::int64_t ser_ns(int link_id, std::int32_t wire_bytes) const {
        return std::llround(static_cast<double>(wire_bytes) * 8.0 * 1000.0 / topo_.link(link_id).data_rate_mbps);
    }

    std::int64_t rto_ns(const FlowState& fs) const { return std::max<std::int64_t>(2 * fs.srtt_ns, TCP_RTO_MIN_NS); }

    std::int32_t payload_of(const FlowState& fs, int seq) const {
        return seq + 1 == fs.total_pkts ? fs.last_payload : MTU_PAYLOAD_BYTES;
    }

    void activate(int fid) {
        const FlowSpec& spec = traffic_.flows[fid];
        FlowState& fs = flows_[fid];
        fs.active = true;
        fs.total_pkts = static_cast<int>((spec.size_bytes + MTU_PAYLOAD_BYTES - 1) / MTU_PAYLOAD_BYTES);
        fs.last_payload = static_cast<std::int32_t>(spec.size_bytes - static_cast<std::int64_t>(MTU_PAYLOAD_BYTES) * (fs.total_pkts - 1));
        fs.sent_ns.assign(fs.total_pkts, 0);
        fs.retx.assign(fs.total_pkts, false);
        fs.received.assign(fs.total_pkts, false);
        active_.push_back(fid);
    }

    void enqueue_or_drop(int link_id, const Packet& p) {
        LinkState& ls = links_[link_id];
        if (static_cast<int>(ls.queue.size()) >= topo_.link(link_id).buffer_pkts) {
            ++drops_win_[link_id];
            if (!p.is_ack) dropped_total_bytes_ += p.payload;
            return;
        }
        ls.queue.push_back(p);
    }

    void inject_data(int fid, int seq, std::int64_t now_ns) {
        const FlowSpec& spec = traffic_.flows[fid];
        const FlowState& fs = flows_[fid];
        Packet p;
        p.flow = fid;
        p.seq = seq;
        p.payload = payload_of(fs, seq);
        p.wire = p.payload + HEADER_BYTES;
        p.dst = spec.dst;
        p.inject_ns = now_ns;
        p.ready_ns = now_ns;
        injected_win_bytes_ += p.payload;
        injected_total_bytes_ += p.payload;
        const int v = tables_.at(spec.src, spec.dst);
        enqueue_or_drop(topo_.link_index(spec.src, v), p);
    }

    void deliver_data(const Packet& p, std::int64_t now_ns) {
        delivered_copies_bytes_ += p.payload;
        FlowState& fs = flows_[p.flow];
        const FlowSpec& spec = traffic_.flows[p.flow];
        if (!fs.received[p.seq]) {
            fs.received[p.seq] = true;
            while (fs.recv_next < fs.total_pkts && fs.received[fs.recv_next]) ++fs.recv_next;
            goodput_win_bytes_ += p.payload;
            goodput_total_bytes_ += p.payload;
            node_delivered_win_[spec.dst] += p.payload;
            delay_sum_ns_ += now_ns - p.inject_ns;
            ++delivered_first_pkts_;
        }
        if (spec.protocol == Protocol::TCP) {
            Packet ack;
            ack.flow = p.flow;
            ack.seq = fs.recv_next;
            ack.payload = 0;
            ack.wire = ACK_WIRE_BYTES;
            ack.is_ack = true;
            ack.dst = spec.src;
            ack.inject_ns = now_ns;
            ack.ready_ns = now_ns;
            const int v = tables_.at(spec.dst, spec.src);
            enqueue_or_drop(topo_.link_index(spec.dst, v), ack);
        }
    }

    void process_ack(const Packet& ack, std::int64_t now_ns) {
        FlowState& fs = flows_[ack.flow];
        if (fs.done || ack.seq <= fs.send_base) return;
        const int highest = ack.seq - 1;
        if (!fs.retx[highest]) {
            const std::int64_t sample = now_ns - fs.sent_ns[highest];
            fs.srtt_ns = (7 * fs.srtt_ns + sample) / 8;
        }
        for (int k = fs.send_base; k < ack.seq; ++k) {
            if (fs.cwnd < fs.ssthresh)
                fs.cwnd += 1.0;  // slow start: +1 per acked packet
            else
                fs.cwnd += 1.0 / fs.cwnd;  // congestion avoidance
        }
        fs.send_base = ack.seq;
        if (fs.send_base == fs.total_pkts) {
            fs.done = true;
            fs.rto_deadline_ns = -1;
        } else {
            fs.rto_deadline_ns = now_ns + rto_ns(fs);
        }
    }

    void handle_arrival(int ingress_link, Packet& p, std::int64_t now_ns) {
        const int v = topo_.link(ingress_link).dst;
        if (p.dst == v) {
            if (p.is_ack)
                process_ack(p, now_ns);
            else
                deliver_data(p, now_ns);
            return;
        }
        if (--p.ttl <= 0) {
            ++drops_win_[ingress_link];
            if (!p.is_ack) dropped_total_bytes_ += p.payload;
            return;
        }
        const int w = tables_.at(v, p.dst);
        p.ready_ns = now_ns;
        enqueue_or_drop(topo_.link_index(v, w), p);
    }

    void transport_tcp(int fid, std::int64_t t0) {
        FlowState& fs = flows_[fid];
        if (fs.rto_deadline_ns >= 0 && t0 >= fs.rto_deadline_ns) {
            fs.cwnd = std::max(1.0, fs.cwnd / 2.0);  // halve on timeout
            fs.ssthresh = std::max(2, static_cast<int>(fs.cwnd));
            fs.retx[fs.send_base] = true;
            fs.sent_ns[fs.send_base] = t0;
            inject_data(fid, fs.send_base, t0);
            fs.rto_deadline_ns = t0 + rto_ns(fs);
        }
        while (fs.next_seq < fs.total_pkts && fs.next_seq - fs.send_base < static_cast<int>(fs.cwnd)) {
            fs.sent_ns[fs.next_seq] = t0;
            inject_data(fid, fs.next_seq, t0);
            if (fs.rto_deadline_ns < 0) fs.rto_deadline_ns = t0 + rto_ns(fs);
            ++fs.next_seq;
        }
    }

    void transport_udp(int fid, std::int64_t t0) {
        FlowState& fs = flows_[fid];
        const FlowSpec& spec = traffic_.flows[fid];
        fs.udp_credit += spec.udp_rate_mbps * 12.5;  // bytes per 0.1 ms tick
        while (fs.next_seq < fs.total_pkts) {
            const std::int32_t wire = payload_of(fs, fs.next_seq) + HEADER_BYTES;
            if (fs.udp_credit < wire) break;
            fs.udp_credit -= wire;
            inject_data(fid, fs.next_seq, t0);
            ++fs.next_seq;
        }
        if (fs.next_seq == fs.total_pkts) fs.done = true;
    }

    void run_tick() {
        const std::int64_t t0 = cur_tick_ * TICK_NS;
        const std::int64_t tick_end = t0 + TICK_NS;
        // arrivals: everything landing within this tick, in (link, FIFO) order
        for (std::size_t li = 0; li < links_.size(); ++li) {
            LinkState& ls = links_[li];
            while (!ls.wire.empty() && ls.wire.front().arrival_ns < tick_end) {
                Packet p = ls.wire.front();
                ls.wire.pop_front();
                handle_arrival(static_cast<int>(li), p, p.arrival_ns);
            }
        }
        // transmissions that can start within this tick
        for (std::size_t li = 0; li < links_.size(); ++li) {
            LinkState& ls = links_[li];
            while (!ls.queue.empty()) {
                Packet& h = ls.queue.front();
                const std::int64_t start = std::max(h.ready_ns, ls.free_ns);
                if (start >= tick_end) break;
                ls.free_ns = start + ser_ns(static_cast<int>(li), h.wire);
                h.arrival_ns = ls.free_ns + prop_ns_[static_cast<int>(li)];
                bytes_tx_win_[li] += h.wire;
                ls.wire.push_back(h);
                ls.queue.pop_front();
            }
        }
        // transport: activate flows whose start falls in this tick, then inject
        while (next_flow_ < flows_.size() &&
               std::llround(traffic_.flows[next_flow_].start_ms * 1e6) / TICK_NS <= cur_tick_)
            activate(static_cast<int>(next_flow_++));
        for (int fid : active_) {
            if (flows_[fid].done) continue;
            if (traffic_.flows[fid].protocol == Protocol::TCP)
                transport_tcp(fid, t0);
            else
                transport_udp(fid, t0);
        }
        ++cur_tick_;
        window_ns_ += TICK_NS;
    }

    Topology topo_;
    TrafficSequence traffic_;
    RoutingTables tables_;
    bool routing_installed_ = false;

    std::vector<LinkState> links_;
    std::vector<std::int64_t> prop_ns_;
    std::vector<FlowState> flows_;
    std::vector<int> active_;
    std::size_t next_flow_ = 0;
    std::int64_t cur_tick_ = 0;
    int steps_completed_ = 0;

    // windowed
    std::int64_t window_ns_ = 0;
    std::vector<std::int64_t> bytes_tx_win_;
    std::vector<std::int64_t> drops_win_;
    std::vector<std::int64_t> node_delivered_win_;
    std::int64_t injected_win_bytes_ = 0;
    std::int64_t goodput_win_bytes_ = 0;

    // episode totals
    std::int64_t injected_total_bytes_ = 0;
    std::int64_t delivered_copies_bytes_ = 0;
    std::int64_t dropped_total_bytes_ = 0;
    std::int64_t goodput_total_bytes_ = 0;
    std::int64_t delay_sum_ns_ = 0;
    std::int64_t delivered_first_pkts_ = 0;
    double episode_goodput_mb_ = 0.0;
};

}  // namespace placer
