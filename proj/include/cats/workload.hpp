#pragma once

// Webpage-style workloads: groups of bytes with a priority, submitted to the
// sender in a chosen order. Two drivers push the same workload through the
// two schemes: all at once into the CATS socket, or through a chunked FIFO
// feeder on the plain transport.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cats/cats_socket.hpp"
#include "cats/errors.hpp"
#include "cats/priority.hpp"
#include "cats/sim.hpp"
#include "cats/transport.hpp"

namespace cats {

inline constexpr std::uint64_t kKiB = 1024;

struct WorkloadGroup {
  Priority priority;
  std::uint64_t size = 0;
  std::string label;
};

struct WorkloadSpec {
  std::vector<WorkloadGroup> groups;
  std::vector<std::size_t> submission_order;  // indices into groups
  SimTime submission_time{0};

  std::uint64_t total_bytes() const {
    std::uint64_t n = 0;
    for (const auto& g : groups) n += g.size;
    return n;
  }

  void validate() const {
    if (groups.empty()) throw ConfigError("workload: no groups");
    for (const auto& g : groups) {
      if (g.size == 0) throw ConfigError("workload: group '" + g.label + "' has zero size");
    }
    std::vector<std::size_t> sorted = submission_order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted.size() != groups.size() || sorted[i] != i) {
        throw ConfigError("workload: submission_order must be a permutation of group indices");
      }
    }
    if (submission_time < SimTime{0}) throw ConfigError("workload: submission_time must be >= 0");
  }
};

// Five groups P0..P4, submitted in reverse priority order at t = 0.
inline WorkloadSpec default_webpage() {
  WorkloadSpec w;
  w.groups = {
      {Priority(0), 8 * kKiB, "Critical HTML/CSS"},
      {Priority(1), 25 * kKiB, "CSS Framework"},
      {Priority(2), 40 * kKiB, "Application JS"},
      {Priority(3), 60 * kKiB, "Images/Media"},
      {Priority(4), 150 * kKiB, "Analytics/Tracking"},
  };
  w.submission_order = {4, 3, 2, 1, 0};
  return w;
}

// Deterministic content so the receiver side can be checked byte for byte.
inline std::uint8_t payload_byte(std::size_t group, std::uint64_t offset) {
  return static_cast<std::uint8_t>(group * 131 + offset * 7 + (offset >> 8));
}

inline std::vector<std::uint8_t> group_payload(std::size_t group, std::uint64_t size) {
  std::vector<std::uint8_t> out(size);
  for (std::uint64_t i = 0; i < size; ++i) out[i] = payload_byte(group, i);
  return out;
}

// The byte stream a FIFO sender produces: groups in submission order.
inline std::vector<std::uint8_t> fifo_stream(const WorkloadSpec& spec) {
  std::vector<std::uint8_t> out;
  for (auto g : spec.submission_order) {
    const auto bytes = group_payload(g, spec.groups[g].size);
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

struct GroupProgress {
  std::optional<SimTime> first_handoff;  // first byte accepted by the transport
  std::optional<SimTime> first_wire;     // first segment carrying it transmitted
  std::optional<SimTime> completion;     // last byte delivered in order
  std::uint64_t delivered = 0;
};

// Maps stream offsets back to workload groups and records per-group timing.
class GroupTracker {
 public:
  explicit GroupTracker(const WorkloadSpec& spec) : spec_(spec), progress_(spec.groups.size()) {}

  void map_stream(std::uint64_t offset, std::uint64_t length, std::size_t group, SimTime now) {
    if (group >= progress_.size()) throw InvariantViolation("stream mapped to unknown group");
    if (offset != mapped_end_) throw InvariantViolation("stream mapping must be contiguous");
    if (!ranges_.empty() && ranges_.back().group == group) {
      ranges_.back().end += length;
    } else {
      ranges_.push_back(Range{offset, offset + length, group});
    }
    mapped_end_ += length;
    auto& p = progress_[group];
    if (!p.first_handoff) p.first_handoff = now;
  }

  void on_transmit(const TxRecord& tx) {
    if (tx.retransmission) return;
    for_each_overlap(tx.seq, tx.length, [&](std::size_t g, std::uint64_t) {
      auto& p = progress_[g];
      if (!p.first_wire) p.first_wire = tx.time;
    });
  }

  void on_deliver(std::uint64_t offset, std::size_t length, SimTime now) {
    for_each_overlap(offset, length, [&](std::size_t g, std::uint64_t n) {
      auto& p = progress_[g];
      p.delivered += n;
      if (p.delivered == spec_.groups[g].size && !p.completion) p.completion = now;
    });
  }

  const std::vector<GroupProgress>& progress() const { return progress_; }
  std::uint64_t mapped_bytes() const { return mapped_end_; }

  // Group index of every mapped stream range, in stream order.
  std::vector<std::size_t> stream_group_sequence() const {
    std::vector<std::size_t> out;
    for (const auto& r : ranges_) out.push_back(r.group);
    return out;
  }

 private:
  struct Range {
    std::uint64_t begin;
    std::uint64_t end;
    std::size_t group;
  };

  template <typename F>
  void for_each_overlap(std::uint64_t offset, std::uint64_t length, F&& f) const {
    const std::uint64_t end = offset + length;
    auto it = std::upper_bound(ranges_.begin(), ranges_.end(), offset,
                               [](std::uint64_t v, const Range& r) { return v < r.end; });
    for (; it != ranges_.end() && it->begin < end; ++it) {
      const std::uint64_t lo = std::max(offset, it->begin);
      const std::uint64_t hi = std::min(end, it->end);
      if (hi > lo) f(it->group, hi - lo);
    }
  }

  const WorkloadSpec& spec_;
  std::vector<GroupProgress> progress_;
  std::vector<Range> ranges_;
  std::uint64_t mapped_end_ = 0;
};

// CATS path: every group is one send() with its priority tag, all at the
// submission time. The tag carries the group index.
inline void drive_cats(const WorkloadSpec& spec, Simulator& sim, CatsSocket& socket) {
  sim.schedule(spec.submission_time, "workload", "submit-all", [&spec, &socket] {
    for (auto g : spec.submission_order) {
      socket.send(group_payload(g, spec.groups[g].size), spec.groups[g].priority, g);
    }
  });
}

// Baseline path: the groups concatenated into one FIFO stream, written in
// MSS-sized pieces, at most `write_chunk` bytes per buffer-space signal.
class ChunkedFeeder {
 public:
  using OnHandoff = std::function<void(std::uint64_t offset, std::uint64_t length,
                                       std::size_t group, SimTime now)>;

  ChunkedFeeder(const WorkloadSpec& spec, Simulator& sim, Sender& sender, std::size_t write_chunk)
      : spec_(spec), sim_(sim), sender_(sender), write_chunk_(write_chunk),
        stream_(fifo_stream(spec)) {
    if (write_chunk_ == 0) throw ConfigError("baseline.write_chunk must be > 0");
    std::uint64_t at = 0;
    for (auto g : spec.submission_order) {
      layout_.push_back({at, at + spec.groups[g].size, g});
      at += spec.groups[g].size;
    }
  }

  void on_handoff(OnHandoff cb) { handoff_cb_ = std::move(cb); }

  void start() {
    sender_.on_buffer_space([this] { write(); });
    sim_.schedule(spec_.submission_time, "workload", "baseline-start", [this] { write(); });
  }

  std::uint64_t written() const { return written_; }
  std::uint64_t writes() const { return writes_; }

 private:
  void write() {
    if (sim_.now() < spec_.submission_time) return;
    std::size_t budget = write_chunk_;
    bool wrote = false;
    while (written_ < stream_.size()) {
      const std::size_t piece = static_cast<std::size_t>(
          std::min<std::uint64_t>(sender_.config().mss, stream_.size() - written_));
      if (piece > budget || sender_.buffer_free() < piece) break;
      report_handoff(written_, piece);
      const std::span<const std::uint8_t> bytes(stream_.data() + written_, piece);
      if (sender_.feed(bytes) != piece) throw InvariantViolation("baseline feed refused");
      written_ += piece;
      budget -= piece;
      wrote = true;
    }
    if (wrote) ++writes_;
  }

  void report_handoff(std::uint64_t offset, std::uint64_t length) {
    if (!handoff_cb_) return;
    const std::uint64_t end = offset + length;
    for (const auto& seg : layout_) {
      const std::uint64_t lo = std::max(offset, seg.begin);
      const std::uint64_t hi = std::min(end, seg.end);
      if (hi > lo) handoff_cb_(lo, hi - lo, seg.group, sim_.now());
    }
  }

  struct Span {
    std::uint64_t begin;
    std::uint64_t end;
    std::size_t group;
  };

  const WorkloadSpec& spec_;
  Simulator& sim_;
  Sender& sender_;
  std::size_t write_chunk_;
  std::vector<std::uint8_t> stream_;
  std::vector<Span> layout_;
  std::uint64_t written_ = 0;
  std::uint64_t writes_ = 0;
  OnHandoff handoff_cb_;
};

}  // namespace cats
