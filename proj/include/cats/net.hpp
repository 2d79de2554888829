#pragma once

// Point-to-point links (serialization + propagation, drop-tail FIFO) and the
// dumbbell topology joining one sender and one receiver through a bottleneck.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cats/errors.hpp"
#include "cats/sim.hpp"
#include "cats/wire.hpp"

namespace cats {

struct LinkConfig {
  std::uint64_t rate_bps = 0;
  SimTime one_way_delay{0};
  std::size_t queue_capacity = 100;  // packets waiting behind the one in service

  void validate(const std::string& what) const {
    if (rate_bps == 0) throw ConfigError(what + ".rate_bps must be > 0");
    if (one_way_delay < SimTime{0}) throw ConfigError(what + ".delay must be >= 0");
    if (queue_capacity < 1) throw ConfigError(what + ".queue_packets must be >= 1");
  }
};

// Time to clock `bytes` onto a link, rounded up to the next nanosecond.
inline SimTime serialization_time(std::size_t bytes, std::uint64_t rate_bps) {
  const auto bits_ns = static_cast<u128>(bytes) * 8u * 1'000'000'000u;
  return SimTime{static_cast<std::int64_t>((bits_ns + rate_bps - 1) / rate_bps)};
}

struct Packet {
  std::vector<std::uint8_t> data;  // encoded transport segment
  std::size_t size_on_wire = 0;
  SimTime ingress_time{0};

  static Packet from_bytes(std::vector<std::uint8_t> bytes, SimTime now) {
    Packet p;
    p.size_on_wire = wire::kNetworkHeaderBytes + bytes.size();
    p.data = std::move(bytes);
    p.ingress_time = now;
    return p;
  }
};

struct LinkStats {
  std::uint64_t submitted = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t bytes_delivered = 0;  // on-wire bytes
  std::size_t max_queue = 0;
};

class Link {
 public:
  using Sink = std::function<void(Packet)>;

  Link(Simulator& sim, LinkConfig config, std::string name)
      : sim_(sim), config_(config), name_(std::move(name)) {
    config_.validate(name_);
  }
  Link(const Link&) = delete;
  Link& operator=(const Link&) = delete;

  void set_sink(Sink sink) { sink_ = std::move(sink); }

  // Returns false when the drop-tail queue is full.
  bool transmit(Packet packet) {
    ++stats_.submitted;
    if (!busy_) {
      start(std::move(packet));
      return true;
    }
    if (queue_.size() >= config_.queue_capacity) {
      ++stats_.dropped;
      return false;
    }
    queue_.push_back(std::move(packet));
    stats_.max_queue = std::max(stats_.max_queue, queue_.size());
    return true;
  }

  const LinkConfig& config() const { return config_; }
  const LinkStats& stats() const { return stats_; }
  const std::string& name() const { return name_; }
  std::size_t queued() const { return queue_.size(); }
  bool busy() const { return busy_; }

 private:
  void start(Packet packet) {
    busy_ = true;
    const SimTime done = serialization_time(packet.size_on_wire, config_.rate_bps);
    auto shared = std::make_shared<Packet>(std::move(packet));
    sim_.schedule_in(done, "net", "tx-done", [this, shared] { finish(std::move(*shared)); });
  }

  void finish(Packet packet) {
    auto shared = std::make_shared<Packet>(std::move(packet));
    sim_.schedule_in(config_.one_way_delay, "net", "deliver", [this, shared] {
      ++stats_.delivered;
      stats_.bytes_delivered += shared->size_on_wire;
      if (sink_) sink_(std::move(*shared));
    });
    if (queue_.empty()) {
      busy_ = false;
      return;
    }
    Packet next = std::move(queue_.front());
    queue_.pop_front();
    start(std::move(next));
  }

  Simulator& sim_;
  LinkConfig config_;
  std::string name_;
  Sink sink_;
  std::deque<Packet> queue_;
  bool busy_ = false;
  LinkStats stats_;
};

struct DumbbellConfig {
  LinkConfig bottleneck;
  LinkConfig access;  // used on both sides, both directions
  SimTime rtt{0};

  SimTime propagation_rtt() const {
    return 2 * (2 * access.one_way_delay + bottleneck.one_way_delay);
  }

  void validate() const {
    bottleneck.validate("topology.bottleneck");
    access.validate("topology.access");
    if (propagation_rtt() != rtt) {
      throw ConfigError("topology delay budget: 2*(2*access.delay + bottleneck.delay) = " +
                        std::to_string(to_ms(propagation_rtt())) + " ms but rtt = " +
                        std::to_string(to_ms(rtt)) + " ms");
    }
  }

  // 2 Mbps bottleneck with 50 ms RTT; fast access links, remaining delay on
  // the bottleneck.
  static DumbbellConfig paper() {
    DumbbellConfig c;
    c.rtt = 50ms;
    c.access = LinkConfig{100'000'000, 1ms, 100};
    c.bottleneck = LinkConfig{2'000'000, (c.rtt - 4 * c.access.one_way_delay) / 2, 100};
    return c;
  }
};

// sender -> access -> bottleneck -> access -> receiver, and the mirror path
// for the reverse direction.
class Dumbbell {
 public:
  Dumbbell(Simulator& sim, DumbbellConfig config)
      : config_((config.validate(), config)),
        fwd_access_in_(sim, config.access, "fwd.access.sender"),
        fwd_bottleneck_(sim, config.bottleneck, "fwd.bottleneck"),
        fwd_access_out_(sim, config.access, "fwd.access.receiver"),
        rev_access_in_(sim, config.access, "rev.access.receiver"),
        rev_bottleneck_(sim, config.bottleneck, "rev.bottleneck"),
        rev_access_out_(sim, config.access, "rev.access.sender") {
    fwd_access_in_.set_sink([this](Packet p) { fwd_bottleneck_.transmit(std::move(p)); });
    fwd_bottleneck_.set_sink([this](Packet p) { fwd_access_out_.transmit(std::move(p)); });
    rev_access_in_.set_sink([this](Packet p) { rev_bottleneck_.transmit(std::move(p)); });
    rev_bottleneck_.set_sink([this](Packet p) { rev_access_out_.transmit(std::move(p)); });
  }

  void attach_receiver(Link::Sink sink) { fwd_access_out_.set_sink(std::move(sink)); }
  void attach_sender(Link::Sink sink) { rev_access_out_.set_sink(std::move(sink)); }

  void send_forward(Packet p) { fwd_access_in_.transmit(std::move(p)); }
  void send_reverse(Packet p) { rev_access_in_.transmit(std::move(p)); }

  const DumbbellConfig& config() const { return config_; }
  const Link& forward_bottleneck() const { return fwd_bottleneck_; }
  const Link& reverse_bottleneck() const { return rev_bottleneck_; }

  std::vector<const Link*> links() const {
    return {&fwd_access_in_, &fwd_bottleneck_, &fwd_access_out_,
            &rev_access_in_, &rev_bottleneck_, &rev_access_out_};
  }

 private:
  DumbbellConfig config_;
  Link fwd_access_in_;
  Link fwd_bottleneck_;
  Link fwd_access_out_;
  Link rev_access_in_;
  Link rev_bottleneck_;
  Link rev_access_out_;
};

// Round trip of one probe of `packet_bytes` (on-wire) echoed at the same size
// on an otherwise idle topology.
inline SimTime probe_rtt(const DumbbellConfig& config, std::size_t packet_bytes) {
  if (packet_bytes < wire::kBaseHeaderBytes) throw UsageError("probe smaller than headers");
  Simulator sim;
  Dumbbell net(sim, config);
  SimTime returned{-1};
  net.attach_receiver([&](Packet p) { net.send_reverse(std::move(p)); });
  net.attach_sender([&](Packet) { returned = sim.now(); });
  Packet probe;
  probe.data.assign(packet_bytes - wire::kNetworkHeaderBytes, 0);
  probe.size_on_wire = packet_bytes;
  net.send_forward(std::move(probe));
  sim.run();
  return returned;
}

// Base (propagation) RTT from a packet pair of two sizes: serialization grows
// linearly with size, so extrapolating to zero bytes leaves propagation only.
inline SimTime measure_base_rtt(const DumbbellConfig& config) {
  const std::size_t small = wire::kBaseHeaderBytes;
  const SimTime r1 = probe_rtt(config, small);
  const SimTime r2 = probe_rtt(config, 2 * small);
  return 2 * r1 - r2;
}

}  // namespace cats
