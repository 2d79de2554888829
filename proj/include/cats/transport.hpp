#pragma once

// Reliable byte-stream endpoints. The sender takes pre-sliced payloads (one
// feed() = one segment, never more than MSS), paces them under the BBR-lite
// budget and recovers losses with fast retransmit (NewReno-style partial-ACK
// handling) and an RTO timer. The receiver reassembles in order and ACKs
// every segment.

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cats/bbr.hpp"
#include "cats/errors.hpp"
#include "cats/net.hpp"
#include "cats/priority.hpp"
#include "cats/rtt.hpp"
#include "cats/sim.hpp"
#include "cats/wire.hpp"

namespace cats {

struct TransportConfig {
  std::size_t mss = 1448;
  std::size_t send_buffer = 64 * 1024;
  RtoBounds rto;
  std::uint32_t dupack_threshold = 3;

  void validate() const {
    if (mss == 0) throw ConfigError("transport.mss must be > 0");
    if (send_buffer < mss) throw ConfigError("transport.send_buffer must hold at least one MSS");
    if (rto.min_rto <= SimTime{0} || rto.max_rto < rto.min_rto) {
      throw ConfigError("transport RTO bounds must satisfy 0 < min_rto <= max_rto");
    }
    if (rto.granularity <= SimTime{0}) throw ConfigError("transport.clock_granularity_ms must be > 0");
    if (dupack_threshold == 0) throw ConfigError("transport.dupack_threshold must be > 0");
  }
};

struct AckInfo {
  std::uint64_t cumulative_ack = 0;
  std::optional<SimTime> rtt_sample;
  std::uint64_t newly_acked = 0;
  bool is_duplicate = false;
};

struct TransportCounters {
  std::uint64_t segments_sent = 0;  // first transmissions
  std::uint64_t retransmits = 0;
  std::uint64_t fast_retransmits = 0;
  std::uint64_t dup_acks = 0;
  std::uint64_t rto_firings = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t payload_bytes_sent = 0;  // including retransmissions
  std::uint64_t wire_bytes_sent = 0;
  std::uint64_t feeds_accepted = 0;
  std::uint64_t feeds_refused = 0;
};

// What left the sender, for tracing and per-group accounting.
struct TxRecord {
  SimTime time{0};
  std::uint64_t seq = 0;
  std::size_t length = 0;
  std::size_t wire_bytes = 0;
  bool retransmission = false;
  std::optional<Priority> priority;
};

class Sender {
 public:
  using Output = std::function<void(Packet)>;

  Sender(Simulator& sim, TransportConfig config, CcConfig cc, Output output, std::uint64_t seed = 1)
      : sim_(sim),
        config_((config.validate(), config)),
        cc_(cc, config.mss, seed),
        rtt_(RttEstimator::fresh(config.rto)),
        output_(std::move(output)) {}

  Sender(const Sender&) = delete;
  Sender& operator=(const Sender&) = delete;

  // Connection setup is a fixed cost: the sender may transmit from `at` on.
  void establish_at(SimTime at) {
    sim_.schedule(at, "transport", "established", [this] {
      established_ = true;
      pump();
    });
  }
  bool established() const { return established_; }

  std::size_t feed(std::span<const std::uint8_t> payload, std::optional<Priority> priority = {}) {
    if (payload.empty()) throw UsageError("feed: empty payload");
    if (payload.size() > config_.mss) {
      throw UsageError("feed: payload of " + std::to_string(payload.size()) +
                       " bytes exceeds MSS " + std::to_string(config_.mss));
    }
    if (buffer_free() < payload.size()) {
      ++counters_.feeds_refused;
      return 0;
    }
    Segment seg;
    seg.seq = next_feed_seq_;
    seg.payload.assign(payload.begin(), payload.end());
    seg.priority = priority;
    next_feed_seq_ += payload.size();
    occupied_ += payload.size();
    buffer_.push_back(std::move(seg));
    ++counters_.feeds_accepted;
    pump();
    return payload.size();
  }

  // Fires after ACK processing frees buffer space.
  void on_buffer_space(std::function<void()> cb) { buffer_space_cb_ = std::move(cb); }
  // Fires when the sender could transmit right now but has nothing unsent.
  void on_send_ready(std::function<void()> cb) { send_ready_cb_ = std::move(cb); }
  // Transmit and ACK observers accumulate; every registered one is called.
  void on_transmit(std::function<void(const TxRecord&)> cb) { tx_cbs_.push_back(std::move(cb)); }
  void on_ack(std::function<void(const AckInfo&)> cb) { ack_cbs_.push_back(std::move(cb)); }

  // ACKs arriving from the network.
  void receive(const Packet& packet) {
    const auto seg = wire::decode_segment(packet.data);
    if (!(seg.header.flags & wire::flags::kAck)) return;
    process_ack(seg.header.ack);
  }

  std::size_t buffer_free() const { return config_.send_buffer - occupied_; }
  std::size_t buffer_occupied() const { return occupied_; }
  std::size_t unsent_bytes() const {
    std::size_t n = 0;
    for (std::size_t i = first_unsent_; i < buffer_.size(); ++i) n += buffer_[i].payload.size();
    return n;
  }
  bool has_unsent() const { return first_unsent_ < buffer_.size(); }
  std::uint64_t bytes_fed() const { return next_feed_seq_; }
  std::uint64_t bytes_acked() const { return snd_una_; }
  std::uint64_t in_flight() const { return snd_nxt_ - snd_una_; }
  bool all_acked() const { return snd_una_ == next_feed_seq_; }
  bool rto_armed() const { return static_cast<bool>(rto_timer_); }

  const TransportConfig& config() const { return config_; }
  const TransportCounters& counters() const { return counters_; }
  const RttEstimator& rtt() const { return rtt_; }
  const BbrLite& cc() const { return cc_; }

 private:
  struct Segment {
    std::uint64_t seq = 0;
    std::vector<std::uint8_t> payload;
    std::optional<Priority> priority;
    bool sent = false;
    bool retransmitted = false;
    SimTime sent_time{0};
    // Delivery-rate snapshot taken at (latest) transmission.
    std::uint64_t delivered = 0;
    SimTime delivered_time{0};
    SimTime first_sent_time{0};
    bool app_limited = false;

    std::uint64_t end() const { return seq + payload.size(); }
  };

  void pump() {
    if (!established_ || pumping_) return;
    pumping_ = true;
    for (;;) {
      Segment* seg = nullptr;
      bool retx = false;
      if (!retransmit_queue_.empty()) {
        seg = find(retransmit_queue_.front());
        if (!seg) {
          retransmit_queue_.pop_front();
          continue;
        }
        retx = true;
      } else if (has_unsent()) {
        seg = &buffer_[first_unsent_];
      }

      const SendBudget budget = cc_.send_budget(in_flight(), sim_.now());
      if (!seg) {
        if (!send_ready_cb_ || !budget.allowed) break;
        if (budget.next_send_time > sim_.now()) {
          arm_pacing(budget.next_send_time);
          break;
        }
        send_ready_cb_();
        if (!has_unsent()) {
          mark_app_limited();
          break;
        }
        continue;
      }
      if (!retx && !budget.allowed) break;  // re-pumped on the next ACK
      if (budget.next_send_time > sim_.now()) {
        arm_pacing(budget.next_send_time);
        break;
      }
      if (retx) retransmit_queue_.pop_front();
      transmit(*seg, retx);
      if (!retx) ++first_unsent_;
    }
    pumping_ = false;
  }

  void arm_pacing(SimTime at) {
    if (pacing_timer_) return;
    pacing_timer_ = sim_.schedule(at, "transport", "pacing", [this] {
      pacing_timer_ = {};
      pump();
    });
  }

  void mark_app_limited() {
    app_limited_until_ = std::max<std::uint64_t>(delivered_ + in_flight(), 1);
  }

  Segment* find(std::uint64_t seq) {
    for (auto& s : buffer_) {
      if (s.seq == seq && s.sent) return &s;
    }
    return nullptr;
  }

  void transmit(Segment& seg, bool retx) {
    const SimTime now = sim_.now();
    if (in_flight() == 0) {
      first_sent_time_ = now;
      delivered_time_ = now;
    }
    seg.sent = true;
    seg.sent_time = now;
    seg.delivered = delivered_;
    seg.delivered_time = delivered_time_;
    seg.first_sent_time = first_sent_time_;
    seg.app_limited = app_limited_until_ > delivered_;
    if (retx) {
      seg.retransmitted = true;
      ++counters_.retransmits;
    } else {
      ++counters_.segments_sent;
      snd_nxt_ = std::max(snd_nxt_, seg.end());
    }

    wire::SegmentHeader h;
    h.seq = static_cast<std::uint32_t>(seg.seq);
    h.priority = seg.priority;
    Packet p = Packet::from_bytes(wire::encode_segment(h, seg.payload), now);
    counters_.payload_bytes_sent += seg.payload.size();
    counters_.wire_bytes_sent += p.size_on_wire;
    cc_.on_transmit(now);
    if (!rto_timer_) arm_rto();
    const TxRecord record{now, seg.seq, seg.payload.size(), p.size_on_wire, retx, seg.priority};
    for (const auto& cb : tx_cbs_) cb(record);
    output_(std::move(p));
  }

  void notify_ack(const AckInfo& info) {
    for (const auto& cb : ack_cbs_) cb(info);
  }

  void arm_rto() {
    sim_.cancel(rto_timer_);
    rto_timer_ = sim_.schedule_in(rtt_.rto, "transport", "rto", [this] {
      rto_timer_ = {};
      on_rto();
    });
  }

  void on_rto() {
    if (snd_una_ == snd_nxt_) return;
    ++counters_.rto_firings;
    rtt_ = rto_backoff(rtt_, config_.rto);
    dupacks_ = 0;
    in_recovery_ = true;
    recovery_point_ = snd_nxt_;
    queue_retransmit(snd_una_);
    arm_rto();
    pump();
  }

  void queue_retransmit(std::uint64_t seq) {
    for (auto q : retransmit_queue_) {
      if (q == seq) return;
    }
    retransmit_queue_.push_back(seq);
  }

  void process_ack(std::uint32_t wire_ack) {
    // Streams stay below 4 GiB, so the 32-bit ack maps directly.
    const std::uint64_t ack = wire_ack;
    AckInfo info;
    info.cumulative_ack = ack;
    if (ack > snd_nxt_) {
      ++counters_.protocol_errors;
      return;
    }
    if (ack < snd_una_) return;  // stale
    if (ack == snd_una_) {
      if (snd_una_ < snd_nxt_) {
        info.is_duplicate = true;
        ++counters_.dup_acks;
        if (++dupacks_ == config_.dupack_threshold && !in_recovery_) {
          ++counters_.fast_retransmits;
          in_recovery_ = true;
          recovery_point_ = snd_nxt_;
          queue_retransmit(snd_una_);
          pump();
        }
      }
      notify_ack(info);
      return;
    }

    const SimTime now = sim_.now();
    info.newly_acked = ack - snd_una_;
    const Segment* newest = nullptr;
    Segment newest_copy;
    std::size_t freed = 0;
    while (!buffer_.empty() && buffer_.front().end() <= ack) {
      newest_copy = std::move(buffer_.front());
      newest = &newest_copy;
      freed += newest_copy.payload.size();
      buffer_.pop_front();
      if (first_unsent_ > 0) --first_unsent_;
    }
    occupied_ -= freed;
    snd_una_ = ack;
    delivered_ += info.newly_acked;
    delivered_time_ = now;
    dupacks_ = 0;

    if (newest && !newest->retransmitted) {
      const SimTime sample = now - newest->sent_time;
      if (sample > SimTime{0}) {
        info.rtt_sample = sample;
        rtt_ = rto_update(rtt_, sample, config_.rto);
        first_sent_time_ = newest->sent_time;
        DeliverySample ds;
        ds.delivered_bytes = delivered_ - newest->delivered;
        ds.interval = std::max(newest->sent_time - newest->first_sent_time,
                               now - newest->delivered_time);
        ds.rtt = sample;
        ds.app_limited = newest->app_limited;
        ds.prior_delivered = newest->delivered;
        ds.total_delivered = delivered_;
        ds.now = now;
        ds.in_flight = in_flight();
        if (ds.interval > SimTime{0}) cc_.on_delivery(ds);
      }
    }

    if (in_recovery_) {
      if (ack >= recovery_point_) {
        in_recovery_ = false;
      } else {
        queue_retransmit(snd_una_);  // partial ACK: next hole
      }
    }

    if (snd_una_ == snd_nxt_) {
      sim_.cancel(rto_timer_);
      rto_timer_ = {};
    } else {
      arm_rto();
    }

    notify_ack(info);
    pump();
    if (freed > 0 && buffer_space_cb_) buffer_space_cb_();
  }

  Simulator& sim_;
  TransportConfig config_;
  BbrLite cc_;
  RttEstimator rtt_;
  Output output_;

  std::deque<Segment> buffer_;  // unacked + unsent, in sequence order
  std::size_t first_unsent_ = 0;
  std::size_t occupied_ = 0;
  std::uint64_t next_feed_seq_ = 0;
  std::uint64_t snd_una_ = 0;
  std::uint64_t snd_nxt_ = 0;

  std::deque<std::uint64_t> retransmit_queue_;
  std::uint32_t dupacks_ = 0;
  bool in_recovery_ = false;
  std::uint64_t recovery_point_ = 0;

  std::uint64_t delivered_ = 0;
  SimTime delivered_time_{0};
  SimTime first_sent_time_{0};
  std::uint64_t app_limited_until_ = 0;

  bool established_ = false;
  bool pumping_ = false;
  EventId pacing_timer_;
  EventId rto_timer_;

  std::function<void()> buffer_space_cb_;
  std::function<void()> send_ready_cb_;
  std::vector<std::function<void(const TxRecord&)>> tx_cbs_;
  std::vector<std::function<void(const AckInfo&)>> ack_cbs_;
  TransportCounters counters_;
};

struct ReceiverCounters {
  std::uint64_t segments_received = 0;
  std::uint64_t duplicate_segments = 0;
  std::uint64_t out_of_order_segments = 0;
  std::uint64_t acks_sent = 0;
  std::array<std::uint64_t, Priority::kLevels> options_seen{};
};

class Receiver {
 public:
  using Output = std::function<void(Packet)>;
  // (stream offset, in-order bytes, arrival time)
  using Deliver = std::function<void(std::uint64_t, std::span<const std::uint8_t>, SimTime)>;

  Receiver(Simulator& sim, Output ack_output) : sim_(sim), output_(std::move(ack_output)) {}

  void on_deliver(Deliver cb) { deliver_cb_ = std::move(cb); }
  void keep_stream(bool keep) { keep_stream_ = keep; }

  void receive(const Packet& packet) {
    const auto seg = wire::decode_segment(packet.data);
    ++counters_.segments_received;
    if (seg.header.priority) ++counters_.options_seen[seg.header.priority->index()];
    const std::uint64_t seq = seg.header.seq;
    const auto payload = seg.payload;
    if (!payload.empty()) {
      if (seq + payload.size() <= rcv_nxt_) {
        ++counters_.duplicate_segments;
      } else if (seq > rcv_nxt_) {
        ++counters_.out_of_order_segments;
        ooo_.try_emplace(seq, payload.begin(), payload.end());
      } else {
        accept(seq, payload);
        drain_out_of_order();
      }
    }
    send_ack();
  }

  std::uint64_t rcv_nxt() const { return rcv_nxt_; }
  const std::vector<std::uint8_t>& stream() const { return stream_; }
  const ReceiverCounters& counters() const { return counters_; }

 private:
  void accept(std::uint64_t seq, std::span<const std::uint8_t> bytes) {
    const std::uint64_t skip = rcv_nxt_ - seq;  // overlap already delivered
    const auto fresh = bytes.subspan(static_cast<std::size_t>(skip));
    if (keep_stream_) stream_.insert(stream_.end(), fresh.begin(), fresh.end());
    if (deliver_cb_) deliver_cb_(rcv_nxt_, fresh, sim_.now());
    rcv_nxt_ += fresh.size();
  }

  void drain_out_of_order() {
    while (!ooo_.empty()) {
      auto it = ooo_.begin();
      if (it->first > rcv_nxt_) break;
      if (it->first + it->second.size() > rcv_nxt_) accept(it->first, it->second);
      ooo_.erase(it);
    }
  }

  void send_ack() {
    wire::SegmentHeader h;
    h.flags = wire::flags::kAck;
    h.ack = static_cast<std::uint32_t>(rcv_nxt_);
    ++counters_.acks_sent;
    output_(Packet::from_bytes(wire::encode_segment(h, {}), sim_.now()));
  }

  Simulator& sim_;
  Output output_;
  std::uint64_t rcv_nxt_ = 0;
  std::map<std::uint64_t, std::vector<std::uint8_t>> ooo_;
  std::vector<std::uint8_t> stream_;
  bool keep_stream_ = false;
  Deliver deliver_cb_;
  ReceiverCounters counters_;
};

}  // namespace cats
