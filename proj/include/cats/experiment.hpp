#pragma once

// One complete run: simulator, dumbbell, transport endpoints and either the
// CATS socket or the chunked FIFO writer, driven to quiescence and reduced to
// a RunReport.

#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "cats/cats_socket.hpp"
#include "cats/config.hpp"
#include "cats/metrics.hpp"
#include "cats/net.hpp"
#include "cats/sim.hpp"
#include "cats/transport.hpp"
#include "cats/wire.hpp"
#include "cats/workload.hpp"

namespace cats {

struct TraceSinks {
  std::ostream* events = nullptr;    // "<ns> <module> <event-name>"
  std::ostream* schedule = nullptr;  // one line per Conductor commit
  std::ostream* cc = nullptr;        // CSV, one row per ACK
  std::ostream* packets = nullptr;   // hexdump of every data segment sent
};

inline void write_schedule_line(std::ostream& out, const FeedRecord& r) {
  out << r.time.count() << " q=" << r.queue << " n=" << r.length << " D=[";
  for (std::size_t i = 0; i < kQueues; ++i) out << (i ? "," : "") << r.ledger.debt[i];
  out << "] S=[";
  for (std::size_t i = 0; i < kQueues; ++i) out << (i ? "," : "") << (r.ledger.eligible(i) ? 'e' : 'i');
  out << "]\n";
}

inline constexpr const char* kCcTraceHeader = "time_ns,btl_bw_bps,rt_prop_ns,phase,pacing_rate_bps,cwnd_bytes";

class Experiment {
 public:
  explicit Experiment(ExperimentConfig config, TraceSinks traces = {})
      : config_((config.validate(), std::move(config))),
        traces_(traces),
        net_(sim_, config_.topology),
        sender_(sim_, config_.transport, config_.cc,
                [this](Packet p) { send_data(std::move(p)); }, config_.seed),
        receiver_(sim_, [this](Packet p) { net_.send_reverse(std::move(p)); }),
        tracker_(config_.workload) {
    sim_.set_event_cap(config_.event_cap);
    sim_.set_trace(traces_.events);
    net_.attach_receiver([this](Packet p) { receiver_.receive(p); });
    net_.attach_sender([this](Packet p) { sender_.receive(p); });
    receiver_.on_deliver([this](std::uint64_t offset, std::span<const std::uint8_t> bytes, SimTime now) {
      tracker_.on_deliver(offset, bytes.size(), now);
    });
    sender_.on_transmit([this](const TxRecord& tx) { tracker_.on_transmit(tx); });
    sender_.on_ack([this](const AckInfo&) { after_ack(); });

    if (config_.scheme == Scheme::kCats) {
      socket_ = std::make_unique<CatsSocket>(sim_, sender_, config_.fairness, config_.default_priority);
      if (config_.save_data_threshold) socket_->set_save_data(*config_.save_data_threshold);
      socket_->set_congestion_shedding(config_.congestion_shedding);
      socket_->on_feed([this](const FeedRecord& r) {
        tracker_.map_stream(r.stream_offset, r.length, static_cast<std::size_t>(r.tag), r.time);
        if (traces_.schedule) write_schedule_line(*traces_.schedule, r);
      });
    } else {
      feeder_ = std::make_unique<ChunkedFeeder>(config_.workload, sim_, sender_,
                                                config_.baseline_write_chunk);
      feeder_->on_handoff([this](std::uint64_t offset, std::uint64_t length, std::size_t group, SimTime now) {
        tracker_.map_stream(offset, length, group, now);
      });
    }
  }

  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  // Runs until the event queue is empty and every byte is acknowledged.
  RunReport run() {
    if (ran_) throw UsageError("an Experiment runs once");
    ran_ = true;
    if (traces_.cc) *traces_.cc << kCcTraceHeader << '\n';
    sender_.establish_at(setup_time());
    if (socket_) {
      drive_cats(config_.workload, sim_, *socket_);
    } else {
      feeder_->start();
    }
    sim_.run();
    check_quiescent();
    return build_report();
  }

  SimTime setup_time() const { return std::int64_t{config_.setup_rtts} * config_.topology.rtt; }

  const ExperimentConfig& config() const { return config_; }
  Simulator& sim() { return sim_; }
  Sender& sender() { return sender_; }
  Receiver& receiver() { return receiver_; }
  const Dumbbell& network() const { return net_; }
  const GroupTracker& tracker() const { return tracker_; }
  CatsSocket* socket() { return socket_.get(); }

 private:
  void send_data(Packet p) {
    if (traces_.packets) {
      *traces_.packets << sim_.now().count() << " segment " << p.size_on_wire << " bytes on wire\n";
      wire::hexdump(*traces_.packets, p.data);
    }
    net_.send_forward(std::move(p));
  }

  void after_ack() {
    if (traces_.cc) {
      const auto& s = sender_.cc().state();
      *traces_.cc << sim_.now().count() << ',' << static_cast<std::uint64_t>(s.btl_bw_bps) << ','
                  << s.rt_prop.count() << ',' << to_string(s.phase) << ','
                  << static_cast<std::uint64_t>(s.pacing_rate_bps) << ',' << s.cwnd << '\n';
    }
    if (sender_.all_acked() && sender_.bytes_fed() > 0) last_ack_ = sim_.now();
  }

  void check_quiescent() const {
    if (!sender_.all_acked()) {
      throw SimulationError("event queue drained with " +
                            std::to_string(sender_.bytes_fed() - sender_.bytes_acked()) +
                            " bytes unacknowledged");
    }
    if (socket_ && !socket_->conductor().empty()) {
      throw SimulationError("event queue drained with " +
                            std::to_string(socket_->conductor().queued_bytes()) +
                            " bytes still queued in the Conductor");
    }
    if (feeder_ && feeder_->written() != config_.workload.total_bytes()) {
      throw SimulationError("event queue drained before the baseline wrote the whole workload");
    }
  }

  RunReport build_report() const {
    RunReport r;
    r.scheme = to_string(config_.scheme);
    r.config_hash = config_hash(config_);
    r.config_json = to_json(config_).dump();
    r.cls_poor_threshold_ms = config_.cls_poor_threshold_ms;
    r.setup_ms = to_ms(setup_time());
    r.finish_ms = last_ack_ ? to_ms(*last_ack_) : 0.0;

    const auto& progress = tracker_.progress();
    for (std::size_t g = 0; g < config_.workload.groups.size(); ++g) {
      const auto& spec = config_.workload.groups[g];
      const auto& p = progress[g];
      GroupReport gr;
      gr.label = spec.label;
      gr.priority = spec.priority.level();
      gr.bytes = spec.size;
      if (p.completion) gr.completion_ms = to_ms(*p.completion);
      if (p.first_handoff) gr.first_transmit_ms = to_ms(*p.first_handoff);
      if (p.first_wire) gr.first_wire_ms = to_ms(*p.first_wire);
      gr.bytes_delivered = p.delivered;
      gr.bytes_shed = spec.size - p.delivered;
      r.groups.push_back(std::move(gr));
    }

    const auto& tc = sender_.counters();
    auto& c = r.counters;
    c.segments_sent = tc.segments_sent;
    c.retransmits = tc.retransmits;
    c.fast_retransmits = tc.fast_retransmits;
    c.dup_acks = tc.dup_acks;
    c.rto_firings = tc.rto_firings;
    c.protocol_errors = tc.protocol_errors;
    c.wire_bytes_sent = tc.wire_bytes_sent;
    c.bottleneck_drops = net_.forward_bottleneck().stats().dropped;
    c.events_dispatched = sim_.dispatched();
    const auto& seen = receiver_.counters().options_seen;
    c.options_seen.assign(seen.begin(), seen.end());
    c.shed_by_priority.assign(kQueues, 0);
    if (socket_) {
      c.deadlocks_resolved = socket_->conductor().deadlocks_resolved();
      c.congestion_sheds = socket_->congestion_sheds();
      for (std::size_t i = 0; i < kQueues; ++i) {
        c.shed_by_priority[i] = socket_->conductor().accounts()[i].shed + socket_->discarded_on_arrival(i);
      }
    }
    if (feeder_) c.baseline_writes = feeder_->writes();

    r.assumptions = assumptions();
    finalize(r);
    return r;
  }

  std::map<std::string, std::string> assumptions() const {
    const auto& t = config_.topology;
    auto mbps = [](std::uint64_t bps) {
      std::ostringstream s;
      s << static_cast<double>(bps) / 1e6 << " Mbps";
      return s.str();
    };
    auto ms = [](SimTime d) {
      std::ostringstream s;
      s << to_ms(d) << " ms";
      return s.str();
    };
    std::map<std::string, std::string> a;
    a["units"] = "1 KB = 1024 bytes";
    a["access_links"] = mbps(t.access.rate_bps) + ", " + ms(t.access.one_way_delay) +
                        " one-way, " + std::to_string(t.access.queue_capacity) + "-packet drop-tail";
    a["bottleneck"] = mbps(t.bottleneck.rate_bps) + ", " + ms(t.bottleneck.one_way_delay) +
                      " one-way, " + std::to_string(t.bottleneck.queue_capacity) + "-packet drop-tail";
    a["connection_setup"] = std::to_string(config_.setup_rtts) +
                            " RTT before the first data segment; completion times include it";
    a["loss_recovery"] = "fast retransmit after " + std::to_string(config_.transport.dupack_threshold) +
                         " duplicate ACKs, NewReno partial-ACK retransmit, RTO with backoff; no PRR";
    a["acks"] = "receiver acknowledges every segment; no delayed ACKs, no SACK";
    a["effective_throughput"] =
        "group bytes * 8 / (completion - time its first byte was handed to the transport)";
    a["headers"] = "40 bytes per segment, plus 4 bytes when the priority option is present";
    a["baseline_writes"] = std::to_string(config_.baseline_write_chunk) + " bytes per buffer-space signal";
    return a;
  }

  ExperimentConfig config_;
  TraceSinks traces_;
  Simulator sim_;
  Dumbbell net_;
  Sender sender_;
  Receiver receiver_;
  GroupTracker tracker_;
  std::unique_ptr<CatsSocket> socket_;
  std::unique_ptr<ChunkedFeeder> feeder_;
  std::optional<SimTime> last_ack_;
  bool ran_ = false;
};

inline RunReport run_experiment(const ExperimentConfig& config, TraceSinks traces = {}) {
  Experiment e(config, traces);
  return e.run();
}

}  // namespace cats
