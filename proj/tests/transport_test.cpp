#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cats/transport.hpp"
#include "harness.hpp"

using namespace cats;

namespace {

using Bytes = std::vector<std::uint8_t>;

Packet ack_packet(std::uint32_t ack) {
  wire::SegmentHeader h;
  h.flags = wire::flags::kAck;
  h.ack = ack;
  return Packet::from_bytes(wire::encode_segment(h, {}), SimTime{0});
}

// Sender whose segments land in a vector; ACKs are injected by hand.
struct Bench {
  Simulator sim;
  std::vector<wire::SegmentHeader> sent;
  std::vector<SimTime> sent_at;
  Sender sender;

  explicit Bench(TransportConfig tc = {})
      : sender(sim, tc, CcConfig{}, [this](Packet p) {
          sent.push_back(wire::decode_segment(p.data).header);
          sent_at.push_back(sim.now());
        }) {
    sender.establish_at(0ms);
  }

  void feed_segments(int n, std::size_t size = 1448) {
    for (int i = 0; i < n; ++i) ASSERT_EQ(sender.feed(Bytes(size, 1)), size);
  }

  void ack_at(SimTime at, std::uint32_t ack) {
    sim.schedule(at, "test", "ack", [this, ack] { sender.receive(ack_packet(ack)); });
  }
};

}  // namespace

TEST(SenderFeed, AcceptsUpToBufferThenRefuses) {
  TransportConfig tc;
  tc.send_buffer = 3 * 1448;
  Simulator sim;
  Sender s(sim, tc, CcConfig{}, [](Packet) {});
  EXPECT_EQ(s.feed(Bytes(1448, 0)), 1448u);
  EXPECT_EQ(s.feed(Bytes(1448, 0)), 1448u);
  EXPECT_EQ(s.feed(Bytes(1448, 0)), 1448u);
  EXPECT_EQ(s.feed(Bytes(1448, 0)), 0u);
  EXPECT_EQ(s.counters().feeds_refused, 1u);
  EXPECT_EQ(s.buffer_occupied(), 3 * 1448u);
}

TEST(SenderFeed, OversizeAndEmptyPayloadsAreContractViolations) {
  Simulator sim;
  Sender s(sim, TransportConfig{}, CcConfig{}, [](Packet) {});
  EXPECT_THROW(s.feed(Bytes(1449, 0)), UsageError);
  EXPECT_THROW(s.feed(Bytes{}), UsageError);
}

TEST(SenderFeed, NothingLeavesBeforeEstablishment) {
  Simulator sim;
  std::vector<SimTime> out;
  Sender s(sim, TransportConfig{}, CcConfig{}, [&](Packet) { out.push_back(sim.now()); });
  s.establish_at(50ms);
  s.feed(Bytes(100, 0));
  sim.run_until(49ms);
  EXPECT_TRUE(out.empty());
  sim.run_until(50ms);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], 50ms);
}

TEST(SenderAck, FreesBufferTakesSampleAndSignals) {
  Bench b;
  int signals = 0;
  std::optional<AckInfo> seen;
  b.sender.on_buffer_space([&] { ++signals; });
  b.sender.on_ack([&](const AckInfo& a) { seen = a; });
  b.feed_segments(1);
  b.ack_at(40ms, 1448);
  b.sim.run_until(40ms);
  ASSERT_TRUE(seen);
  EXPECT_EQ(seen->cumulative_ack, 1448u);
  EXPECT_EQ(seen->newly_acked, 1448u);
  EXPECT_EQ(seen->rtt_sample, 40ms);
  EXPECT_EQ(b.sender.buffer_occupied(), 0u);
  EXPECT_EQ(signals, 1);
  EXPECT_EQ(b.sender.rtt().srtt, 40ms);
  EXPECT_FALSE(b.sender.rto_armed());
}

TEST(SenderAck, NoBufferSpaceListenerIsFine) {
  Bench b;
  b.feed_segments(1);
  b.ack_at(10ms, 1448);
  EXPECT_NO_THROW(b.sim.run_until(10ms));
}

TEST(SenderAck, ThreeDupAcksTriggerExactlyOneFastRetransmit) {
  Bench b;
  b.feed_segments(5);
  b.sim.run_until(1ms);
  const auto first_wave = b.sent.size();
  for (int i = 0; i < 6; ++i) b.ack_at(10ms + SimTime{i}, 0);
  b.sim.run_until(11ms);
  EXPECT_EQ(b.sender.counters().dup_acks, 6u);
  EXPECT_EQ(b.sender.counters().fast_retransmits, 1u);
  EXPECT_EQ(b.sender.counters().retransmits, 1u);
  ASSERT_GT(b.sent.size(), first_wave);
  EXPECT_EQ(b.sent.back().seq, 0u);  // lowest unacked
}

TEST(SenderAck, PartialAckRetransmitsNextHole) {
  Bench b;
  b.feed_segments(4);
  b.sim.run_until(1ms);
  for (int i = 0; i < 3; ++i) b.ack_at(10ms, 0);
  b.ack_at(20ms, 1448);  // partial: below the recovery point
  b.sim.run_until(21ms);
  EXPECT_EQ(b.sender.counters().retransmits, 2u);
  EXPECT_EQ(b.sent.back().seq, 1448u);
}

TEST(SenderAck, AckBeyondSentIsProtocolError) {
  Bench b;
  b.feed_segments(1);
  b.ack_at(5ms, 5000);
  b.sim.run_until(5ms);
  EXPECT_EQ(b.sender.counters().protocol_errors, 1u);
  EXPECT_EQ(b.sender.bytes_acked(), 0u);
}

TEST(SenderRto, ExpiryRetransmitsLowestUnackedAndBacksOff) {
  TransportConfig tc;
  tc.rto.max_rto = 3s;
  Bench b(tc);
  b.feed_segments(2);
  // Initial RTO 1 s; then 2 s; then capped at 3 s.
  b.sim.run_until(1s);
  EXPECT_EQ(b.sender.counters().rto_firings, 1u);
  EXPECT_EQ(b.sent.back().seq, 0u);
  EXPECT_EQ(b.sent_at.back(), 1s);
  EXPECT_EQ(b.sender.rtt().rto, 2s);
  b.sim.run_until(3s);
  EXPECT_EQ(b.sender.counters().rto_firings, 2u);
  EXPECT_EQ(b.sent_at.back(), 3s);
  EXPECT_EQ(b.sender.rtt().rto, 3s);
  b.sim.run_until(6s);
  EXPECT_EQ(b.sender.counters().rto_firings, 3u);
  EXPECT_EQ(b.sender.rtt().rto, 3s);
}

TEST(SenderRto, KarnSkipsRetransmittedSegments) {
  Bench b;
  b.feed_segments(1);
  std::vector<AckInfo> acks;
  b.sender.on_ack([&](const AckInfo& a) { acks.push_back(a); });
  b.ack_at(1500ms, 1448);  // after the 1 s RTO resent segment 0
  b.sim.run_until(2s);
  EXPECT_EQ(b.sender.counters().rto_firings, 1u);
  ASSERT_EQ(acks.size(), 1u);
  EXPECT_FALSE(acks[0].rtt_sample);
  EXPECT_FALSE(b.sender.rtt().initialized);
}

TEST(SenderRto, SingleTimerPerConnection) {
  Bench b;
  std::ostringstream trace;
  b.sim.set_trace(&trace);
  b.feed_segments(10);
  b.sim.run_until(3500ms);
  // RTO at 1 s, 3 s: one timer rearmed, never two pending at once.
  std::size_t fires = 0;
  std::istringstream in(trace.str());
  for (std::string line; std::getline(in, line);) fires += line.ends_with("transport rto");
  EXPECT_EQ(fires, 2u);
}

TEST(Reliability, StreamIntactUnderForcedDrops) {
  auto topo = DumbbellConfig::paper();
  topo.bottleneck.queue_capacity = 5;
  rig::Path path(topo);
  path.receiver.keep_stream(true);
  path.sender.establish_at(0ms);
  const std::uint64_t total = 400'000;
  rig::BulkSource src(path.sender, total);
  src.top_up();
  path.sim.run();
  EXPECT_GT(path.net.forward_bottleneck().stats().dropped, 0u);
  EXPECT_GT(path.sender.counters().retransmits, 0u);
  ASSERT_EQ(path.receiver.stream().size(), total);
  for (std::uint64_t i = 0; i < total; ++i) ASSERT_EQ(path.receiver.stream()[i], rig::pattern_byte(i)) << i;
  EXPECT_TRUE(path.sender.all_acked());
  EXPECT_LE(src.max_occupied(), path.sender.config().send_buffer);
}

TEST(Reliability, AcrossQueueDepthsAndBuffers) {
  for (std::size_t q : {2u, 3u, 8u, 20u}) {
    for (std::size_t buf : {4u * 1448, 16u * 1024, 64u * 1024}) {
      auto topo = DumbbellConfig::paper();
      topo.bottleneck.queue_capacity = q;
      TransportConfig tc;
      tc.send_buffer = buf;
      rig::Path path(topo, tc);
      path.receiver.keep_stream(true);
      path.sender.establish_at(0ms);
      const std::uint64_t total = 150'000;
      rig::BulkSource src(path.sender, total);
      src.top_up();
      path.sim.run();
      ASSERT_EQ(path.receiver.stream().size(), total) << q << "/" << buf;
      bool same = true;
      for (std::uint64_t i = 0; i < total; ++i) same &= path.receiver.stream()[i] == rig::pattern_byte(i);
      EXPECT_TRUE(same) << q << "/" << buf;
    }
  }
}

TEST(Receiver, ReassemblesOutOfOrderAndCountsOptions) {
  Simulator sim;
  std::vector<std::uint32_t> acks;
  Receiver r(sim, [&](Packet p) { acks.push_back(wire::decode_segment(p.data).header.ack); });
  r.keep_stream(true);
  auto seg = [](std::uint32_t seq, Bytes payload, std::optional<Priority> p) {
    wire::SegmentHeader h;
    h.seq = seq;
    h.priority = p;
    return Packet::from_bytes(wire::encode_segment(h, payload), SimTime{0});
  };
  r.receive(seg(3, {4, 5}, Priority(2)));
  r.receive(seg(0, {1, 2, 3}, Priority(2)));
  r.receive(seg(0, {1, 2, 3}, std::nullopt));  // duplicate
  EXPECT_EQ(r.stream(), (Bytes{1, 2, 3, 4, 5}));
  EXPECT_EQ(acks, (std::vector<std::uint32_t>{0, 5, 5}));
  EXPECT_EQ(r.counters().options_seen[2], 2u);
  EXPECT_EQ(r.counters().duplicate_segments, 1u);
  EXPECT_EQ(r.counters().out_of_order_segments, 1u);
}
