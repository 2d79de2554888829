#pragma once

// Deterministic discrete-event engine. Time is integer nanoseconds; events
// with equal fire time dispatch in insertion order.

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cats/errors.hpp"

namespace cats {

// Wide intermediate for exact byte and rate products.
__extension__ typedef unsigned __int128 u128;

using SimTime = std::chrono::nanoseconds;
using namespace std::chrono_literals;

inline double to_ms(SimTime t) { return static_cast<double>(t.count()) / 1e6; }
inline double to_seconds(SimTime t) { return static_cast<double>(t.count()) / 1e9; }

inline SimTime from_ms(double ms) {
  return SimTime{static_cast<std::int64_t>(ms * 1e6 + (ms >= 0 ? 0.5 : -0.5))};
}

struct EventId {
  std::uint64_t seq = 0;  // 0 never names an event
  explicit operator bool() const { return seq != 0; }
};

class Simulator {
 public:
  using Action = std::function<void()>;

  static constexpr std::uint64_t kDefaultEventCap = 50'000'000;

  SimTime now() const { return now_; }
  std::uint64_t dispatched() const { return dispatched_; }
  std::size_t pending() const { return live_.size(); }
  bool idle() const { return live_.empty(); }

  void set_trace(std::ostream* out) { trace_ = out; }
  void set_event_cap(std::uint64_t cap) { event_cap_ = cap; }

  // `module` and `name` must outlive the event; string literals in practice.
  EventId schedule(SimTime fire_at, std::string_view module, std::string_view name,
                   Action action) {
    if (fire_at < now_) {
      std::ostringstream msg;
      msg << "event " << module << "/" << name << " scheduled at " << fire_at.count()
          << "ns, before current time " << now_.count() << "ns";
      throw ConfigError(msg.str());
    }
    const std::uint64_t seq = ++next_seq_;
    queue_.push(Key{fire_at, seq});
    live_.emplace(seq, Pending{std::move(action), module, name});
    return EventId{seq};
  }

  EventId schedule_in(SimTime delay, std::string_view module, std::string_view name,
                      Action action) {
    return schedule(now_ + delay, module, name, std::move(action));
  }

  bool cancel(EventId id) { return id && live_.erase(id.seq) > 0; }

  // Dispatches every event with fire_at <= deadline. Returns the time of the
  // last dispatched event, or the deadline when nothing fired.
  SimTime run_until(SimTime deadline) {
    bool fired = false;
    while (!queue_.empty() && queue_.top().fire_at <= deadline) {
      if (step()) fired = true;
    }
    if (!fired) now_ = std::max(now_, deadline);
    return now_;
  }

  // Runs until the queue drains.
  SimTime run() {
    while (!queue_.empty()) step();
    return now_;
  }

 private:
  struct Key {
    SimTime fire_at;
    std::uint64_t seq;
    bool operator>(const Key& o) const {
      return fire_at != o.fire_at ? fire_at > o.fire_at : seq > o.seq;
    }
  };
  struct Pending {
    Action action;
    std::string_view module;
    std::string_view name;
  };

  bool step() {
    const Key key = queue_.top();
    queue_.pop();
    auto it = live_.find(key.seq);
    if (it == live_.end()) return false;  // cancelled
    Pending ev = std::move(it->second);
    live_.erase(it);
    now_ = key.fire_at;
    if (++dispatched_ > event_cap_) abort_with_dump();
    remember(ev);
    if (trace_) *trace_ << now_.count() << ' ' << ev.module << ' ' << ev.name << '\n';
    ev.action();
    return true;
  }

  void remember(const Pending& ev) {
    recent_.emplace_back(now_.count(), std::string(ev.module) + " " + std::string(ev.name));
    if (recent_.size() > 32) recent_.pop_front();
  }

  [[noreturn]] void abort_with_dump() const {
    std::ostringstream msg;
    msg << "event cap of " << event_cap_ << " dispatches exceeded; last events:\n";
    for (const auto& [ns, what] : recent_) msg << "  " << ns << ' ' << what << '\n';
    throw SimulationError(msg.str());
  }

  SimTime now_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
  std::uint64_t event_cap_ = kDefaultEventCap;
  std::priority_queue<Key, std::vector<Key>, std::greater<>> queue_;
  std::unordered_map<std::uint64_t, Pending> live_;
  std::deque<std::pair<std::int64_t, std::string>> recent_;
  std::ostream* trace_ = nullptr;
};

}  // namespace cats
