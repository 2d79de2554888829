#pragma once

// The Conductor: five per-priority FIFO queues of application chunks, a
// hysteresis debt ledger that keeps lower priorities from starving, and
// source-side load shedding.
//
// Selection is two-phase. select_next() picks the front slice of the
// highest-priority Eligible non-empty queue without consuming it;
// commit_send() consumes it and applies the debt update once the transport
// has taken the bytes.

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cats/errors.hpp"
#include "cats/priority.hpp"
#include "cats/sim.hpp"

namespace cats {

inline constexpr std::size_t kQueues = Priority::kLevels;

// Positive rational multiplier; products truncate toward zero.
struct Ratio {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  std::uint64_t scale(std::uint64_t n) const {
    return static_cast<std::uint64_t>(static_cast<u128>(n) * num / den);
  }
  bool operator==(const Ratio&) const = default;
};

struct QueueFairness {
  std::optional<std::uint64_t> high;  // nullopt: the queue never goes into debt
  std::uint64_t low = 0;
  Ratio multiplier;
};

struct FairnessConfig {
  std::array<QueueFairness, kQueues> queues;

  // H = [inf, 256K, 128K, 64K, 32K], L = H/2, M = [1, 1, 2, 4, 8].
  static FairnessConfig defaults() {
    FairnessConfig c;
    const std::array<std::optional<std::uint64_t>, kQueues> high{
        std::nullopt, 256 * 1024, 128 * 1024, 64 * 1024, 32 * 1024};
    const std::array<std::uint64_t, kQueues> mult{1, 1, 2, 4, 8};
    for (std::size_t i = 0; i < kQueues; ++i) {
      c.queues[i].high = high[i];
      c.queues[i].low = high[i] ? *high[i] / 2 : 0;
      c.queues[i].multiplier = Ratio{mult[i], 1};
    }
    return c;
  }

  void validate() const {
    for (std::size_t i = 0; i < kQueues; ++i) {
      const auto& q = queues[i];
      const std::string at = "fairness queue " + std::to_string(i);
      if (q.multiplier.num == 0 || q.multiplier.den == 0) {
        throw ConfigError(at + ": payback multiplier must be positive");
      }
      if (q.high && q.low > *q.high) throw ConfigError(at + ": low watermark above high");
    }
  }
};

enum class QueueState { kEligible, kInDebt };

struct DebtLedger {
  std::array<std::uint64_t, kQueues> debt{};
  std::array<QueueState, kQueues> state{};  // value-initialized: all Eligible

  std::uint64_t total_debt() const {
    return std::accumulate(debt.begin(), debt.end(), std::uint64_t{0});
  }
  bool eligible(std::size_t i) const { return state[i] == QueueState::kEligible; }
  bool operator==(const DebtLedger&) const = default;
};

// Debt update after `n` bytes left queue j.
inline DebtLedger apply_send(DebtLedger ledger, const FairnessConfig& cfg, std::size_t j,
                             std::uint64_t n) {
  ledger.debt[j] += n;
  if (cfg.queues[j].high && ledger.debt[j] >= *cfg.queues[j].high) {
    ledger.state[j] = QueueState::kInDebt;
  }
  const std::uint64_t payback = cfg.queues[j].multiplier.scale(n);
  for (std::size_t i = 0; i < j; ++i) {
    ledger.debt[i] = ledger.debt[i] > payback ? ledger.debt[i] - payback : 0;
    if (ledger.debt[i] < cfg.queues[i].low) ledger.state[i] = QueueState::kEligible;
  }
  return ledger;
}

// Scales down the debt of the non-empty in-debt queues in proportion to their
// share of the total payback multiplier, D_i <- trunc(D_i * M_i / M_total),
// then re-checks low watermarks. Repeats until some queue is Eligible; if a
// pass changes nothing (a single queue, or all debts already zero) the
// highest-priority waiting queue is forced Eligible.
inline DebtLedger resolve_deadlock(DebtLedger ledger, const FairnessConfig& cfg,
                                   const std::array<bool, kQueues>& non_empty) {
  std::vector<std::size_t> waiting;
  for (std::size_t i = 0; i < kQueues; ++i) {
    if (!non_empty[i]) continue;
    if (ledger.eligible(i)) {
      throw InvariantViolation("resolve_deadlock: non-empty queue " + std::to_string(i) +
                               " is Eligible");
    }
    waiting.push_back(i);
  }
  if (waiting.empty()) return ledger;

  // Integer weights over a common denominator so M_i / M_total is exact.
  std::uint64_t lcm = 1;
  for (auto i : waiting) lcm = std::lcm(lcm, cfg.queues[i].multiplier.den);
  std::array<std::uint64_t, kQueues> weight{};
  u128 total = 0;
  for (auto i : waiting) {
    const auto& m = cfg.queues[i].multiplier;
    weight[i] = m.num * (lcm / m.den);
    total += weight[i];
  }

  for (;;) {
    bool changed = false;
    bool any_eligible = false;
    for (auto i : waiting) {
      const auto scaled =
          static_cast<std::uint64_t>(static_cast<u128>(ledger.debt[i]) * weight[i] / total);
      changed |= scaled != ledger.debt[i];
      ledger.debt[i] = scaled;
      if (scaled < cfg.queues[i].low) {
        ledger.state[i] = QueueState::kEligible;
        any_eligible = true;
      }
    }
    if (any_eligible) return ledger;
    if (!changed) {
      ledger.state[waiting.front()] = QueueState::kEligible;
      return ledger;
    }
  }
}

struct Chunk {
  std::vector<std::uint8_t> payload;
  Priority priority;
  SimTime enqueue_time{0};
  std::uint64_t seq_within_priority = 0;
  std::uint64_t tag = 0;  // caller-defined message id
  std::size_t consumed = 0;

  std::size_t remaining() const { return payload.size() - consumed; }
};

struct Slice {
  std::size_t queue = 0;
  std::span<const std::uint8_t> bytes;
  std::uint64_t tag = 0;
  std::size_t offset_in_chunk = 0;
};

struct PriorityAccount {
  std::uint64_t intercepted = 0;
  std::uint64_t committed = 0;
  std::uint64_t shed = 0;
};

class Conductor {
 public:
  explicit Conductor(FairnessConfig config = FairnessConfig::defaults())
      : config_((config.validate(), config)) {}

  const Chunk& intercept(std::vector<std::uint8_t> payload, Priority priority, SimTime now,
                         std::uint64_t tag = 0) {
    if (payload.empty()) throw UsageError("intercept: empty payload");
    auto& q = queues_[priority.index()];
    Chunk c;
    c.priority = priority;
    c.enqueue_time = now;
    c.seq_within_priority = next_seq_[priority.index()]++;
    c.tag = tag;
    accounts_[priority.index()].intercepted += payload.size();
    c.payload = std::move(payload);
    q.push_back(std::move(c));
    return q.back();
  }

  const Chunk& intercept(std::vector<std::uint8_t> payload, int level, SimTime now,
                         std::uint64_t tag = 0) {
    return intercept(std::move(payload), Priority(level), now, tag);
  }

  // Front slice of the highest-priority Eligible non-empty queue. Resolves a
  // deadlock first when every non-empty queue is in debt.
  std::optional<Slice> select_next(std::size_t mss) {
    if (mss == 0) throw UsageError("select_next: mss must be > 0");
    if (empty()) return std::nullopt;
    auto pick = first_eligible();
    if (!pick) {
      ledger_ = resolve_deadlock(ledger_, config_, non_empty());
      ++deadlocks_resolved_;
      pick = first_eligible();
      if (!pick) throw InvariantViolation("deadlock resolution left no eligible queue");
    }
    const Chunk& front = queues_[*pick].front();
    const std::size_t n = std::min(mss, front.remaining());
    return Slice{*pick, std::span<const std::uint8_t>(front.payload).subspan(front.consumed, n),
                 front.tag, front.consumed};
  }

  void commit_send(std::size_t j, std::size_t n) {
    if (j >= kQueues) throw InvariantViolation("commit_send: bad queue index");
    auto& q = queues_[j];
    if (n == 0 || q.empty() || q.front().remaining() < n) {
      throw InvariantViolation("commit_send: " + std::to_string(n) +
                               " bytes exceed the front chunk of queue " + std::to_string(j));
    }
    q.front().consumed += n;
    if (q.front().remaining() == 0) q.pop_front();
    accounts_[j].committed += n;
    ledger_ = apply_send(ledger_, config_, j, n);
  }

  // Save-Data: drop everything queued with priority strictly below the
  // threshold (numerically greater level).
  std::uint64_t shed_below(Priority threshold) {
    std::uint64_t total = 0;
    for (std::size_t i = threshold.index() + 1; i < kQueues; ++i) {
      while (!queues_[i].empty()) total += drop_front(i);
    }
    return total;
  }

  // Drops whole chunks, oldest first, from the lowest-priority non-empty
  // queue upward until `bytes_needed` is met. Priority 0 is never shed.
  std::uint64_t shed_on_congestion(std::uint64_t bytes_needed) {
    std::uint64_t total = 0;
    for (std::size_t i = kQueues - 1; i >= 1 && total < bytes_needed; --i) {
      while (!queues_[i].empty() && total < bytes_needed) total += drop_front(i);
    }
    return total;
  }

  bool empty() const {
    return std::all_of(queues_.begin(), queues_.end(), [](const auto& q) { return q.empty(); });
  }
  std::array<bool, kQueues> non_empty() const {
    std::array<bool, kQueues> out{};
    for (std::size_t i = 0; i < kQueues; ++i) out[i] = !queues_[i].empty();
    return out;
  }
  std::uint64_t queued_bytes(std::size_t i) const {
    std::uint64_t n = 0;
    for (const auto& c : queues_[i]) n += c.remaining();
    return n;
  }
  std::uint64_t queued_bytes() const {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < kQueues; ++i) n += queued_bytes(i);
    return n;
  }
  const std::deque<Chunk>& queue(std::size_t i) const { return queues_[i]; }

  const DebtLedger& ledger() const { return ledger_; }
  const FairnessConfig& config() const { return config_; }
  const std::array<PriorityAccount, kQueues>& accounts() const { return accounts_; }
  std::uint64_t deadlocks_resolved() const { return deadlocks_resolved_; }

 private:
  std::optional<std::size_t> first_eligible() const {
    for (std::size_t i = 0; i < kQueues; ++i) {
      if (!queues_[i].empty() && ledger_.eligible(i)) return i;
    }
    return std::nullopt;
  }

  std::uint64_t drop_front(std::size_t i) {
    const std::uint64_t n = queues_[i].front().remaining();
    queues_[i].pop_front();
    accounts_[i].shed += n;
    return n;
  }

  FairnessConfig config_;
  std::array<std::deque<Chunk>, kQueues> queues_;
  std::array<std::uint64_t, kQueues> next_seq_{};
  std::array<PriorityAccount, kQueues> accounts_{};
  DebtLedger ledger_;
  std::uint64_t deadlocks_resolved_ = 0;
};

}  // namespace cats
