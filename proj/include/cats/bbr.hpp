#pragma once

// BBR-lite: a model-based congestion controller. It keeps a windowed-max
// bottleneck bandwidth estimate and a windowed-min propagation RTT, and turns
// them into a pacing rate and a congestion window. It only ever sees
// ACK-derived samples, never data priorities.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

#include "cats/errors.hpp"
#include "cats/sim.hpp"

namespace cats {

enum class Phase { kStartup, kDrain, kProbeBw, kProbeRtt };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kStartup: return "startup";
    case Phase::kDrain: return "drain";
    case Phase::kProbeBw: return "probe_bw";
    case Phase::kProbeRtt: return "probe_rtt";
  }
  return "?";
}

struct CcConfig {
  double high_gain = 2.885;
  double probe_bw_cwnd_gain = 2.0;
  std::array<double, 8> pacing_cycle{1.25, 0.75, 1, 1, 1, 1, 1, 1};
  std::uint32_t initial_window_segments = 10;
  std::uint32_t min_cwnd_segments = 4;
  SimTime initial_rtt = 100ms;
  std::uint32_t bw_window_rounds = 10;
  SimTime rt_prop_window = 10s;
  SimTime probe_rtt_duration = 200ms;
  double full_bw_growth = 1.25;
  std::uint32_t full_bw_rounds = 3;

  void validate() const {
    if (high_gain <= 1.0) throw ConfigError("cc.high_gain must be > 1");
    if (initial_window_segments < min_cwnd_segments) {
      throw ConfigError("cc.initial_window_segments below the minimum cwnd");
    }
    if (initial_rtt <= SimTime{0}) throw ConfigError("cc.initial_rtt_ms must be > 0");
    if (bw_window_rounds == 0 || bw_window_rounds > kMaxWindow) {
      throw ConfigError("cc.bw_window_rounds must be in 1..64");
    }
  }

  static constexpr std::uint32_t kMaxWindow = 64;
};

struct CcState {
  double btl_bw_bps = 0;  // payload bits per second
  SimTime rt_prop{0};     // zero until the first sample
  Phase phase = Phase::kStartup;
  double pacing_gain = 0;
  double cwnd_gain = 0;
  int cycle_index = 0;
  double pacing_rate_bps = 0;
  std::uint64_t cwnd = 0;  // bytes
  std::uint64_t round_count = 0;
  bool filled_pipe = false;
};

struct DeliverySample {
  std::uint64_t delivered_bytes = 0;  // delivered during `interval`
  SimTime interval{0};
  SimTime rtt{0};
  bool app_limited = false;
  // Connection delivered-byte counter when the acked segment was sent, and
  // now. Used for round-trip counting.
  std::uint64_t prior_delivered = 0;
  std::uint64_t total_delivered = 0;
  SimTime now{0};
  std::uint64_t in_flight = 0;  // after this ACK was processed
};

struct SendBudget {
  SimTime next_send_time{0};
  bool allowed = false;
};

// Spacing between consecutive MSS-sized transmissions at the state's rate.
inline SimTime pacing_gap(const CcState& s, std::size_t mss) {
  const double ns = static_cast<double>(mss) * 8.0 * 1e9 / s.pacing_rate_bps;
  return SimTime{static_cast<std::int64_t>(ns + 0.5)};
}

// Budget for the next transmission given the previous one at `last_send`.
inline SendBudget send_budget(const CcState& s, std::size_t mss, std::optional<SimTime> last_send,
                              std::uint64_t in_flight, SimTime now) {
  SendBudget b;
  b.allowed = in_flight + mss <= s.cwnd;
  b.next_send_time = last_send ? std::max(now, *last_send + pacing_gap(s, mss)) : now;
  return b;
}

// Max over the last N rounds, one (round, value) slot per round.
class WindowedMaxFilter {
 public:
  explicit WindowedMaxFilter(std::uint32_t rounds = 10) : rounds_(rounds) {}

  void update(std::uint64_t round, double value) {
    Slot& s = slots_[round % rounds_];
    if (!s.used || s.round != round) {
      s = Slot{round, value, true};
    } else {
      s.value = std::max(s.value, value);
    }
  }

  double get(std::uint64_t current_round) const {
    double best = 0;
    for (std::uint32_t i = 0; i < rounds_; ++i) {
      const Slot& s = slots_[i];
      if (s.used && s.round + rounds_ > current_round) best = std::max(best, s.value);
    }
    return best;
  }

 private:
  struct Slot {
    std::uint64_t round = 0;
    double value = 0;
    bool used = false;
  };
  std::uint32_t rounds_;
  std::array<Slot, CcConfig::kMaxWindow> slots_{};
};

class BbrLite {
 public:
  BbrLite(CcConfig config, std::size_t mss, std::uint64_t seed = 1)
      : config_(config), mss_(mss), bw_filter_(config.bw_window_rounds), rng_(seed) {
    config_.validate();
    if (mss_ == 0) throw ConfigError("mss must be > 0");
    enter_startup();
    refresh();
  }

  const CcState& state() const { return state_; }
  const CcConfig& config() const { return config_; }

  // Bandwidth-delay product in bytes; zero before the model has both inputs.
  std::uint64_t bdp_bytes() const {
    if (state_.btl_bw_bps <= 0 || state_.rt_prop <= SimTime{0}) return 0;
    return static_cast<std::uint64_t>(state_.btl_bw_bps / 8.0 * to_seconds(state_.rt_prop));
  }

  void on_delivery(const DeliverySample& s) {
    if (s.interval <= SimTime{0}) throw UsageError("delivery sample interval must be > 0");

    bool round_start = false;
    if (s.prior_delivered >= next_round_delivered_) {
      next_round_delivered_ = s.total_delivered;
      ++state_.round_count;
      round_start = true;
    }

    const double rate = static_cast<double>(s.delivered_bytes) * 8.0 / to_seconds(s.interval);
    if (!s.app_limited || rate <= state_.btl_bw_bps) bw_filter_.update(state_.round_count, rate);
    state_.btl_bw_bps = bw_filter_.get(state_.round_count);

    if (s.rtt > SimTime{0}) {
      const bool expired = state_.rt_prop > SimTime{0} &&
                           s.now > rt_prop_stamp_ + config_.rt_prop_window;
      if (state_.rt_prop <= SimTime{0} || s.rtt <= state_.rt_prop || expired) {
        state_.rt_prop = s.rtt;
        rt_prop_stamp_ = s.now;
      }
      if (expired && state_.phase != Phase::kProbeRtt) enter_probe_rtt();
    }

    if (round_start && !s.app_limited) check_full_pipe();
    if (state_.phase == Phase::kStartup && state_.filled_pipe) enter_drain();
    if (state_.phase == Phase::kDrain && s.in_flight <= bdp_bytes()) enter_probe_bw(s.now);
    if (state_.phase == Phase::kProbeBw) advance_cycle(s.now);
    if (state_.phase == Phase::kProbeRtt) update_probe_rtt(s, round_start);

    refresh();
  }

  SendBudget send_budget(std::uint64_t in_flight, SimTime now) const {
    return cats::send_budget(state_, mss_, last_send_, in_flight, now);
  }

  SimTime pacing_gap() const { return cats::pacing_gap(state_, mss_); }

  void on_transmit(SimTime now) { last_send_ = now; }

 private:
  void enter_startup() {
    state_.phase = Phase::kStartup;
    state_.pacing_gain = config_.high_gain;
    state_.cwnd_gain = config_.high_gain;
  }

  void enter_drain() {
    state_.phase = Phase::kDrain;
    state_.pacing_gain = 1.0 / config_.high_gain;
    state_.cwnd_gain = config_.high_gain;
  }

  void enter_probe_bw(SimTime now) {
    state_.phase = Phase::kProbeBw;
    state_.cwnd_gain = config_.probe_bw_cwnd_gain;
    // Random start phase, never the draining 0.75 step.
    const int r = static_cast<int>(rng_() % 7);
    state_.cycle_index = r >= 1 ? r + 1 : 0;
    state_.pacing_gain = config_.pacing_cycle[static_cast<std::size_t>(state_.cycle_index)];
    cycle_stamp_ = now;
  }

  void advance_cycle(SimTime now) {
    if (now - cycle_stamp_ <= state_.rt_prop) return;
    state_.cycle_index = (state_.cycle_index + 1) % 8;
    state_.pacing_gain = config_.pacing_cycle[static_cast<std::size_t>(state_.cycle_index)];
    cycle_stamp_ = now;
  }

  void enter_probe_rtt() {
    state_.phase = Phase::kProbeRtt;
    state_.pacing_gain = 1.0;
    state_.cwnd_gain = 1.0;
    probe_rtt_done_ = SimTime{-1};
  }

  void update_probe_rtt(const DeliverySample& s, bool round_start) {
    const std::uint64_t floor = std::uint64_t{config_.min_cwnd_segments} * mss_;
    if (probe_rtt_done_ < SimTime{0}) {
      if (s.in_flight <= floor) {
        probe_rtt_done_ = s.now + config_.probe_rtt_duration;
        probe_rtt_round_done_ = false;
        next_round_delivered_ = s.total_delivered;
      }
      return;
    }
    if (round_start) probe_rtt_round_done_ = true;
    if (probe_rtt_round_done_ && s.now >= probe_rtt_done_) {
      rt_prop_stamp_ = s.now;
      if (state_.filled_pipe) {
        enter_probe_bw(s.now);
      } else {
        enter_startup();
      }
    }
  }

  void check_full_pipe() {
    if (state_.filled_pipe) return;
    if (state_.btl_bw_bps >= full_bw_ * config_.full_bw_growth) {
      full_bw_ = state_.btl_bw_bps;
      full_bw_count_ = 0;
      return;
    }
    if (++full_bw_count_ >= config_.full_bw_rounds) state_.filled_pipe = true;
  }

  void refresh() {
    const std::uint64_t floor = std::uint64_t{config_.min_cwnd_segments} * mss_;
    const double bw = state_.btl_bw_bps > 0
                          ? state_.btl_bw_bps
                          : static_cast<double>(config_.initial_window_segments * mss_) * 8.0 /
                                to_seconds(config_.initial_rtt);
    state_.pacing_rate_bps = state_.pacing_gain * bw;
    if (state_.phase == Phase::kProbeRtt) {
      state_.cwnd = floor;
    } else if (bdp_bytes() == 0) {
      state_.cwnd = std::uint64_t{config_.initial_window_segments} * mss_;
    } else {
      const auto target = static_cast<std::uint64_t>(state_.cwnd_gain * bdp_bytes());
      state_.cwnd = std::max(target, floor);
    }
  }

  CcConfig config_;
  std::size_t mss_;
  CcState state_;
  WindowedMaxFilter bw_filter_;
  std::mt19937_64 rng_;
  std::uint64_t next_round_delivered_ = 0;
  SimTime rt_prop_stamp_{0};
  SimTime cycle_stamp_{0};
  std::optional<SimTime> last_send_;
  double full_bw_ = 0;
  std::uint32_t full_bw_count_ = 0;
  SimTime probe_rtt_done_{-1};
  bool probe_rtt_round_done_ = false;
};

}  // namespace cats
