#pragma once

// Byte layouts for simulated segments. The transport header follows the TCP
// layout (20 fixed bytes plus options); the 20-byte network header is only
// accounted for in size, never encoded.
//
// Priority option: [kind=254, length=3, priority], padded with NOP (1) to a
// 4-byte boundary.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "cats/errors.hpp"
#include "cats/priority.hpp"

namespace cats::wire {

inline constexpr std::uint8_t kOptionEnd = 0;
inline constexpr std::uint8_t kOptionNop = 1;
inline constexpr std::uint8_t kPriorityOptionKind = 254;
inline constexpr std::uint8_t kPriorityOptionLength = 3;

inline constexpr std::size_t kNetworkHeaderBytes = 20;
inline constexpr std::size_t kTransportHeaderBytes = 20;
inline constexpr std::size_t kBaseHeaderBytes = kNetworkHeaderBytes + kTransportHeaderBytes;

inline std::array<std::uint8_t, 3> encode_priority_option(Priority p) {
  return {kPriorityOptionKind, kPriorityOptionLength, static_cast<std::uint8_t>(p.level())};
}

// Same as above for raw levels coming from untrusted input.
inline std::array<std::uint8_t, 3> encode_priority_option(int level) {
  return encode_priority_option(Priority(level));
}

enum class OptionStatus { kOk, kNotThisOption, kMalformed };

struct OptionDecode {
  OptionStatus status = OptionStatus::kMalformed;
  Priority priority{};
  bool ok() const { return status == OptionStatus::kOk; }
};

inline OptionDecode decode_priority_option(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return {OptionStatus::kMalformed, {}};
  if (bytes[0] != kPriorityOptionKind) return {OptionStatus::kNotThisOption, {}};
  if (bytes.size() < 3 || bytes[1] != kPriorityOptionLength || !Priority::valid(bytes[2])) {
    return {OptionStatus::kMalformed, {}};
  }
  return {OptionStatus::kOk, Priority(bytes[2])};
}

namespace flags {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace flags

struct SegmentHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  std::uint16_t window = 0xffff;
  std::optional<Priority> priority;

  bool operator==(const SegmentHeader&) const = default;
};

inline std::size_t options_length(const SegmentHeader& h) {
  return h.priority ? 4 : 0;  // 3-byte option + 1 NOP pad
}

inline std::size_t header_length(const SegmentHeader& h) {
  return kTransportHeaderBytes + options_length(h);
}

// Bytes the segment occupies on a link, network header included.
inline std::size_t size_on_wire(const SegmentHeader& h, std::size_t payload_bytes) {
  return kNetworkHeaderBytes + header_length(h) + payload_bytes;
}

namespace detail {
inline void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
inline void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}
inline std::uint16_t get16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}
inline std::uint32_t get32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}
}  // namespace detail

inline std::vector<std::uint8_t> encode_segment(const SegmentHeader& h,
                                                std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out;
  out.reserve(header_length(h) + payload.size());
  detail::put16(out, h.src_port);
  detail::put16(out, h.dst_port);
  detail::put32(out, h.seq);
  detail::put32(out, h.ack);
  const auto words = static_cast<std::uint8_t>(header_length(h) / 4);
  out.push_back(static_cast<std::uint8_t>(words << 4));
  out.push_back(h.flags);
  detail::put16(out, h.window);
  detail::put16(out, 0);  // checksum, not modeled
  detail::put16(out, 0);  // urgent pointer
  if (h.priority) {
    const auto opt = encode_priority_option(*h.priority);
    out.insert(out.end(), opt.begin(), opt.end());
    out.push_back(kOptionNop);
  }
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

struct DecodedSegment {
  SegmentHeader header;
  std::span<const std::uint8_t> payload;
};

// Unknown options are skipped by their length byte. A malformed priority
// option or inconsistent header length throws WireError.
inline DecodedSegment decode_segment(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kTransportHeaderBytes) throw WireError("segment shorter than fixed header");
  DecodedSegment seg;
  SegmentHeader& h = seg.header;
  h.src_port = detail::get16(bytes, 0);
  h.dst_port = detail::get16(bytes, 2);
  h.seq = detail::get32(bytes, 4);
  h.ack = detail::get32(bytes, 8);
  const std::size_t hlen = static_cast<std::size_t>(bytes[12] >> 4) * 4;
  h.flags = bytes[13];
  h.window = detail::get16(bytes, 14);
  if (hlen < kTransportHeaderBytes || hlen > bytes.size()) {
    throw WireError("header length field inconsistent with segment size");
  }
  std::size_t at = kTransportHeaderBytes;
  while (at < hlen) {
    const std::uint8_t kind = bytes[at];
    if (kind == kOptionEnd) break;
    if (kind == kOptionNop) {
      ++at;
      continue;
    }
    if (at + 1 >= hlen) throw WireError("truncated option");
    const std::size_t len = bytes[at + 1];
    if (len < 2 || at + len > hlen) throw WireError("option length overruns header");
    if (kind == kPriorityOptionKind) {
      const auto dec = decode_priority_option(bytes.subspan(at, len));
      if (!dec.ok()) throw WireError("malformed priority option");
      h.priority = dec.priority;
    }
    at += len;
  }
  seg.payload = bytes.subspan(hlen);
  return seg;
}

inline void hexdump(std::ostream& out, std::span<const std::uint8_t> bytes) {
  const auto old_flags = out.flags();
  const auto old_fill = out.fill('0');
  for (std::size_t row = 0; row < bytes.size(); row += 16) {
    out << std::hex << std::setw(6) << row << ' ';
    for (std::size_t i = row; i < row + 16 && i < bytes.size(); ++i) {
      out << ' ' << std::setw(2) << static_cast<int>(bytes[i]);
    }
    out << '\n';
  }
  out.flags(old_flags);
  out.fill(old_fill);
}

}  // namespace cats::wire
