#include <vector>

#include <gtest/gtest.h>

#include "cats/cats_socket.hpp"
#include "cats/conductor.hpp"

using namespace cats;

namespace {

using Bytes = std::vector<std::uint8_t>;

Bytes bytes(std::size_t n, std::uint8_t v = 0) { return Bytes(n, v); }

// Every queue bounded, with watermarks wide enough that a single scaling pass
// is observable on its own.
FairnessConfig wide(std::array<std::uint64_t, kQueues> mult) {
  FairnessConfig c;
  for (std::size_t i = 0; i < kQueues; ++i) {
    c.queues[i].high = 1'000'000;
    c.queues[i].low = 100'000;
    c.queues[i].multiplier = Ratio{mult[i], 1};
  }
  return c;
}

}  // namespace

TEST(Conductor, InterceptLandsInItsQueueOnly) {
  Conductor c;
  c.intercept(bytes(150 * 1024), Priority(4), 0ms);
  EXPECT_EQ(c.queued_bytes(4), 150 * 1024u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c.queued_bytes(i), 0u);
  EXPECT_THROW(c.intercept(bytes(10), 7, 0ms), UsageError);
  EXPECT_THROW(c.intercept(Bytes{}, 1, 0ms), UsageError);
}

TEST(Conductor, SelectsHighestPriorityEligible) {
  Conductor c;
  c.intercept(bytes(3000), 0, 0ms);
  c.intercept(bytes(5000), 2, 0ms);
  const auto s = c.select_next(1448);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->queue, 0u);
  EXPECT_EQ(s->bytes.size(), 1448u);
  // Selection alone consumes nothing.
  EXPECT_EQ(c.queued_bytes(0), 3000u);
}

TEST(Conductor, SkipsInDebtQueue) {
  FairnessConfig cfg = FairnessConfig::defaults();
  cfg.queues[0].high = 1000;
  cfg.queues[0].low = 500;
  Conductor c(cfg);
  c.intercept(bytes(5000), 0, 0ms);
  c.intercept(bytes(5000), 1, 0ms);
  c.commit_send(0, 1000);  // D_0 = 1000 >= H_0
  ASSERT_FALSE(c.ledger().eligible(0));
  const auto s = c.select_next(1448);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->queue, 1u);
}

TEST(Conductor, EmptyQueuesSelectNothing) {
  Conductor c;
  EXPECT_FALSE(c.select_next(1448));
  EXPECT_THROW(c.select_next(0), UsageError);
}

TEST(Conductor, SliceIsShortAtChunkEnd) {
  Conductor c;
  c.intercept(bytes(2000), 3, 0ms);
  c.commit_send(3, 1448);
  const auto s = c.select_next(1448);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->bytes.size(), 552u);
  EXPECT_EQ(s->offset_in_chunk, 1448u);
}

TEST(Conductor, CommitBeyondFrontChunkIsFatal) {
  Conductor c;
  c.intercept(bytes(100), 1, 0ms);
  EXPECT_THROW(c.commit_send(1, 101), InvariantViolation);
  EXPECT_THROW(c.commit_send(2, 1), InvariantViolation);
}

TEST(DebtUpdate, QueueZeroPaysNobody) {
  const auto cfg = FairnessConfig::defaults();
  DebtLedger l;
  l = apply_send(l, cfg, 0, 1000);
  EXPECT_EQ(l.debt, (std::array<std::uint64_t, kQueues>{1000, 0, 0, 0, 0}));
}

TEST(DebtUpdate, PaybackFloorsAtZero) {
  auto cfg = FairnessConfig::defaults();
  cfg.queues[2].multiplier = Ratio{2, 1};
  DebtLedger l;
  l.debt = {500, 0, 0, 0, 0};
  l = apply_send(l, cfg, 2, 1000);
  EXPECT_EQ(l.debt[0], 0u);  // max(0, 500 - 2000)
  EXPECT_EQ(l.debt[1], 0u);
  EXPECT_EQ(l.debt[2], 1000u);
}

TEST(DebtUpdate, HighWatermarkFlipsToInDebt) {
  auto cfg = FairnessConfig::defaults();
  cfg.queues[2].high = 4000;
  cfg.queues[2].low = 2000;
  DebtLedger l;
  l.debt[2] = 3500;
  l = apply_send(l, cfg, 2, 1000);
  EXPECT_EQ(l.debt[2], 4500u);
  EXPECT_EQ(l.state[2], QueueState::kInDebt);
}

TEST(DebtUpdate, LowWatermarkRestoresEligibility) {
  auto cfg = FairnessConfig::defaults();
  cfg.queues[1].high = 4000;
  cfg.queues[1].low = 2000;
  cfg.queues[3].multiplier = Ratio{1, 1};
  DebtLedger l;
  l = apply_send(l, cfg, 1, 4000);
  ASSERT_EQ(l.state[1], QueueState::kInDebt);
  l = apply_send(l, cfg, 3, 1500);  // D_1 = 2500: between watermarks, stays
  EXPECT_EQ(l.state[1], QueueState::kInDebt);
  l = apply_send(l, cfg, 3, 501);  // D_1 = 1999 < L_1
  EXPECT_EQ(l.debt[1], 1999u);
  EXPECT_EQ(l.state[1], QueueState::kEligible);
}

TEST(DebtUpdate, FractionalMultiplierTruncates) {
  auto cfg = FairnessConfig::defaults();
  cfg.queues[4].multiplier = Ratio{1, 3};
  DebtLedger l;
  l.debt[0] = 1000;
  l = apply_send(l, cfg, 4, 1000);  // payback trunc(333.33) = 333
  EXPECT_EQ(l.debt[0], 667u);
}

TEST(Deadlock, ProportionalScaling) {
  const auto cfg = wide({1, 1, 3, 1, 1});
  DebtLedger l;
  l.debt = {0, 1000, 1000, 0, 0};
  l.state[1] = l.state[2] = QueueState::kInDebt;
  const auto out = resolve_deadlock(l, cfg, {false, true, true, false, false});
  EXPECT_EQ(out.debt[1], 250u);  // trunc(1000 * 1/4)
  EXPECT_EQ(out.debt[2], 750u);  // trunc(1000 * 3/4)
}

TEST(Deadlock, TruncatesTowardZero) {
  const auto cfg = wide({1, 1, 2, 1, 1});
  DebtLedger l;
  l.debt = {0, 1001, 600, 0, 0};
  l.state[1] = l.state[2] = QueueState::kInDebt;
  const auto out = resolve_deadlock(l, cfg, {false, true, true, false, false});
  EXPECT_EQ(out.debt[1], 333u);  // trunc(1001 / 3) = trunc(333.67)
  EXPECT_EQ(out.debt[2], 400u);
}

TEST(Deadlock, SingleQueueForcedEligibleWithDebtUnchanged) {
  const auto cfg = wide({1, 1, 1, 1, 1});
  DebtLedger l;
  l.debt = {0, 0, 0, 500'000, 0};
  l.state[3] = QueueState::kInDebt;
  const auto out = resolve_deadlock(l, cfg, {false, false, false, true, false});
  EXPECT_EQ(out.debt[3], 500'000u);
  EXPECT_EQ(out.state[3], QueueState::kEligible);
}

TEST(Deadlock, RepeatsUntilSomeQueueIsEligible) {
  // One pass takes (1e6, 1e6) to (5e5, 5e5), still above L = 1e5; more passes follow.
  const auto cfg = wide({1, 1, 1, 1, 1});
  DebtLedger l;
  l.debt = {0, 0, 1'000'000, 1'000'000, 0};
  l.state[2] = l.state[3] = QueueState::kInDebt;
  const auto out = resolve_deadlock(l, cfg, {false, false, true, true, false});
  EXPECT_EQ(out.debt[2], 62'500u);
  EXPECT_EQ(out.debt[3], 62'500u);
  EXPECT_TRUE(out.eligible(2));
  EXPECT_TRUE(out.eligible(3));
}

TEST(Deadlock, RejectsEligibleNonEmptyQueue) {
  const auto cfg = FairnessConfig::defaults();
  DebtLedger l;
  EXPECT_THROW(resolve_deadlock(l, cfg, {false, true, false, false, false}), InvariantViolation);
}

TEST(Deadlock, SelectNextResolvesWhenEverythingIsInDebt) {
  FairnessConfig cfg = wide({1, 1, 1, 1, 1});
  for (auto& q : cfg.queues) {
    q.high = 2000;
    q.low = 1000;
  }
  Conductor c(cfg);
  c.intercept(bytes(10'000), 1, 0ms);
  c.commit_send(1, 2000);
  ASSERT_FALSE(c.ledger().eligible(1));
  const auto s = c.select_next(1448);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->queue, 1u);
  EXPECT_EQ(c.deadlocks_resolved(), 1u);
}

TEST(Shedding, BelowThreshold) {
  Conductor c;
  const std::array<std::uint64_t, kQueues> sizes{8, 25, 40, 60, 150};
  for (int p = 4; p >= 0; --p) c.intercept(bytes(sizes[p] * 1024), p, 0ms);
  EXPECT_EQ(c.shed_below(Priority(2)), 210 * 1024u);
  EXPECT_EQ(c.queued_bytes(3) + c.queued_bytes(4), 0u);
  EXPECT_EQ(c.shed_below(Priority(2)), 0u);
  EXPECT_EQ(c.shed_below(Priority(4)), 0u);
  EXPECT_EQ(c.accounts()[3].shed, 60 * 1024u);
  EXPECT_EQ(c.accounts()[4].shed, 150 * 1024u);
}

TEST(Shedding, OldestLowestFirstWholeChunks) {
  Conductor c;
  c.intercept(bytes(10 * 1024, 1), 3, 0ms);
  c.intercept(bytes(10 * 1024, 2), 3, 1ms);
  c.intercept(bytes(4 * 1024), 2, 1ms);
  EXPECT_EQ(c.shed_on_congestion(15 * 1024), 20 * 1024u);
  EXPECT_EQ(c.queued_bytes(3), 0u);
  EXPECT_EQ(c.queued_bytes(2), 4 * 1024u);

  Conductor d;
  d.intercept(bytes(8 * 1024), 4, 0ms);
  d.intercept(bytes(8 * 1024), 4, 1ms);
  EXPECT_EQ(d.shed_on_congestion(5 * 1024), 8 * 1024u);
  EXPECT_EQ(d.queue(4).size(), 1u);
  EXPECT_EQ(d.queue(4).front().enqueue_time, 1ms);
}

TEST(Shedding, NeverShedsPriorityZero) {
  Conductor c;
  c.intercept(bytes(50'000), 0, 0ms);
  EXPECT_EQ(c.shed_on_congestion(1'000'000), 0u);
  EXPECT_EQ(c.queued_bytes(0), 50'000u);
}

TEST(Shedding, PartiallySentChunkShedsOnlyItsRemainder) {
  Conductor c;
  c.intercept(bytes(5000), 4, 0ms);
  c.commit_send(4, 1448);
  EXPECT_EQ(c.shed_on_congestion(1), 5000u - 1448u);
  const auto& a = c.accounts()[4];
  EXPECT_EQ(a.intercepted, a.committed + a.shed);
}

TEST(FairnessConfig, Validation) {
  auto cfg = FairnessConfig::defaults();
  EXPECT_NO_THROW(cfg.validate());
  cfg.queues[2].low = *cfg.queues[2].high + 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = FairnessConfig::defaults();
  cfg.queues[1].multiplier = Ratio{0, 1};
  EXPECT_THROW(Conductor{cfg}, ConfigError);
}

TEST(FairnessConfig, Defaults) {
  const auto cfg = FairnessConfig::defaults();
  EXPECT_FALSE(cfg.queues[0].high);
  EXPECT_EQ(*cfg.queues[1].high, 256 * 1024u);
  EXPECT_EQ(cfg.queues[1].low, 128 * 1024u);
  EXPECT_EQ(*cfg.queues[4].high, 32 * 1024u);
  EXPECT_EQ(cfg.queues[4].multiplier, (Ratio{8, 1}));
}

// Socket-level behavior on a sender that never transmits (not established),
// so everything past the first slice stays in the Conductor.
TEST(CatsSocket, DefaultPriorityAppliesWithoutTag) {
  Simulator sim;
  Sender tx(sim, TransportConfig{}, CcConfig{}, [](Packet) {});
  CatsSocket s(sim, tx, FairnessConfig::defaults());
  s.set_default_priority(Priority(2));
  s.send(bytes(5000));
  s.send(bytes(3000));
  // The first 1448 bytes were fed straight to the idle transport.
  EXPECT_EQ(s.conductor().queued_bytes(2), 8000u - 1448u);
  EXPECT_EQ(tx.bytes_fed(), 1448u);
}

TEST(CatsSocket, FeedsOnlyWhenTransportHasNothingUnsent) {
  Simulator sim;
  Sender tx(sim, TransportConfig{}, CcConfig{}, [](Packet) {});
  CatsSocket s(sim, tx, FairnessConfig::defaults());
  std::vector<FeedRecord> feeds;
  s.on_feed([&](const FeedRecord& r) { feeds.push_back(r); });
  s.send(bytes(150 * 1024), Priority(4), 4);
  s.send(bytes(8 * 1024), Priority(0), 0);
  ASSERT_EQ(feeds.size(), 1u);
  EXPECT_EQ(feeds[0].queue, 4u);
  EXPECT_EQ(feeds[0].ledger.debt[4], 1448u);
  // Byte conservation across Conductor and transport.
  EXPECT_EQ(s.conductor().queued_bytes() + tx.bytes_fed(), 158 * 1024u);
}

TEST(CatsSocket, SaveDataDiscardsQueuedAndFutureLowPriority) {
  Simulator sim;
  Sender tx(sim, TransportConfig{}, CcConfig{}, [](Packet) {});
  CatsSocket s(sim, tx, FairnessConfig::defaults());
  s.send(bytes(1000), Priority(0));
  s.send(bytes(60 * 1024), Priority(3));
  EXPECT_EQ(s.set_save_data(Priority(2)), 60 * 1024u);
  EXPECT_EQ(s.send(bytes(500), Priority(4)), 0u);
  EXPECT_EQ(s.discarded_on_arrival(4), 500u);
  EXPECT_EQ(s.send(bytes(500), Priority(2)), 500u);
}
