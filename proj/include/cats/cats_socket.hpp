#pragma once

// Interceptor + feeder glue between the application, the Conductor and the
// base transport. Every invocation feeds at most one MSS-sized slice, and
// only when the transport has nothing unsent, so the base send buffer never
// holds more than one not-yet-transmitted segment.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cats/conductor.hpp"
#include "cats/transport.hpp"

namespace cats {

struct CongestionShedding {
  bool enabled = false;
  double rtt_factor = 4.0;        // srtt > factor * rt_prop counts as congested
  std::uint32_t persist_rtts = 3;  // ... continuously for this many rt_props
  std::optional<std::uint64_t> bytes;  // default: one BDP
};

// One committed slice, reported just before it is handed to the transport.
struct FeedRecord {
  SimTime time{0};
  std::uint64_t stream_offset = 0;
  std::size_t queue = 0;
  std::size_t length = 0;
  std::uint64_t tag = 0;
  DebtLedger ledger;  // after the commit
};

class CatsSocket {
 public:
  CatsSocket(Simulator& sim, Sender& transport, FairnessConfig fairness,
             Priority default_priority = Priority(Priority::kLowest))
      : sim_(sim), transport_(transport), conductor_(fairness), default_priority_(default_priority) {
    transport_.on_buffer_space([this] { invoke(); });
    transport_.on_send_ready([this] { invoke(); });
    transport_.on_ack([this](const AckInfo&) { check_congestion(); });
  }

  CatsSocket(const CatsSocket&) = delete;
  CatsSocket& operator=(const CatsSocket&) = delete;

  // Application send(). Without a per-message priority the socket default
  // applies. Returns the bytes accepted into the Conductor (0 when Save-Data
  // discards them).
  std::size_t send(std::vector<std::uint8_t> payload, std::optional<Priority> priority = {},
                   std::uint64_t tag = 0) {
    const Priority p = priority.value_or(default_priority_);
    const std::size_t n = payload.size();
    if (save_data_ && p > *save_data_) {
      discarded_on_arrival_[p.index()] += n;
      return 0;
    }
    conductor_.intercept(std::move(payload), p, sim_.now(), tag);
    invoke();
    return n;
  }

  void set_default_priority(Priority p) { default_priority_ = p; }
  Priority default_priority() const { return default_priority_; }

  // Save-Data: discard queued and future data below the threshold.
  std::uint64_t set_save_data(Priority threshold) {
    save_data_ = threshold;
    return conductor_.shed_below(threshold);
  }

  void set_congestion_shedding(CongestionShedding cfg) { shedding_ = cfg; }

  // One Conductor pass: select, feed, commit. At most one slice.
  void invoke() {
    if (invoking_ || transport_.has_unsent()) return;
    const auto slice = conductor_.select_next(transport_.config().mss);
    // A slice that does not fit is retried on the next buffer-space signal.
    if (!slice || transport_.buffer_free() < slice->bytes.size()) return;
    invoking_ = true;
    const std::vector<std::uint8_t> bytes(slice->bytes.begin(), slice->bytes.end());
    const FeedRecord record{sim_.now(), transport_.bytes_fed(), slice->queue, bytes.size(),
                            slice->tag, DebtLedger{}};
    conductor_.commit_send(slice->queue, bytes.size());
    if (feed_cb_) {
      FeedRecord r = record;
      r.ledger = conductor_.ledger();
      feed_cb_(r);
    }
    if (transport_.feed(bytes, Priority(static_cast<int>(record.queue))) != bytes.size()) {
      throw InvariantViolation("transport refused a slice that fit its buffer");
    }
    invoking_ = false;
  }

  void on_feed(std::function<void(const FeedRecord&)> cb) { feed_cb_ = std::move(cb); }

  const Conductor& conductor() const { return conductor_; }
  Conductor& conductor() { return conductor_; }
  std::uint64_t congestion_sheds() const { return congestion_sheds_; }
  std::uint64_t discarded_on_arrival(std::size_t i) const { return discarded_on_arrival_[i]; }

 private:
  void check_congestion() {
    if (!shedding_.enabled) return;
    const auto& cc = transport_.cc();
    const SimTime rt_prop = cc.state().rt_prop;
    const auto& rtt = transport_.rtt();
    if (!rtt.initialized || rt_prop <= SimTime{0}) return;
    const bool congested = to_seconds(rtt.srtt) > shedding_.rtt_factor * to_seconds(rt_prop);
    if (!congested) {
      congested_since_.reset();
      return;
    }
    const SimTime now = sim_.now();
    if (!congested_since_) congested_since_ = now;
    if (now - *congested_since_ >= std::int64_t{shedding_.persist_rtts} * rt_prop) {
      const std::uint64_t need = shedding_.bytes.value_or(std::max<std::uint64_t>(cc.bdp_bytes(), 1));
      if (conductor_.shed_on_congestion(need) > 0) ++congestion_sheds_;
      congested_since_ = now;
    }
  }

  Simulator& sim_;
  Sender& transport_;
  Conductor conductor_;
  Priority default_priority_;
  std::optional<Priority> save_data_;
  std::array<std::uint64_t, kQueues> discarded_on_arrival_{};
  CongestionShedding shedding_;
  std::optional<SimTime> congested_since_;
  std::uint64_t congestion_sheds_ = 0;
  std::function<void(const FeedRecord&)> feed_cb_;
  bool invoking_ = false;
};

}  // namespace cats
