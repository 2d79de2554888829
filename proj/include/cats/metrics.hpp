#pragma once

// Post-processing of a run: per-group completion and effective throughput,
// the web QoE estimates derived from group completions, and cats-vs-baseline
// comparison tables.
//
//   FCP = max(completion P0, P1)       TTI = max(completion P0, P1, P2)
//   LCP = completion P3                CLS = poor iff P3 - P1 > threshold

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cats/errors.hpp"

namespace cats {

enum class ClsClass { kGood, kPoor };

inline const char* to_string(ClsClass c) { return c == ClsClass::kGood ? "good" : "poor"; }

struct GroupReport {
  std::string label;
  int priority = 0;
  std::uint64_t bytes = 0;
  std::optional<double> completion_ms;
  std::optional<double> first_transmit_ms;  // first byte handed to the transport
  std::optional<double> first_wire_ms;      // first segment carrying it sent
  std::optional<double> effective_throughput_bps;
  std::uint64_t bytes_delivered = 0;
  std::uint64_t bytes_shed = 0;
};

struct RunCounters {
  std::uint64_t segments_sent = 0;
  std::uint64_t retransmits = 0;
  std::uint64_t fast_retransmits = 0;
  std::uint64_t dup_acks = 0;
  std::uint64_t rto_firings = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t wire_bytes_sent = 0;
  std::uint64_t bottleneck_drops = 0;
  std::uint64_t events_dispatched = 0;
  std::uint64_t deadlocks_resolved = 0;
  std::uint64_t baseline_writes = 0;
  std::uint64_t congestion_sheds = 0;
  std::vector<std::uint64_t> options_seen;      // per priority, at the receiver
  std::vector<std::uint64_t> shed_by_priority;  // discarded at the source
};

struct RunReport {
  std::string scheme;  // "cats" | "baseline"
  std::string config_hash;
  std::vector<GroupReport> groups;
  std::optional<double> total_load_ms;
  std::optional<double> fcp_ms;
  std::optional<double> tti_ms;
  std::optional<double> lcp_ms;
  std::optional<ClsClass> cls;
  double setup_ms = 0;
  double finish_ms = 0;  // last byte acknowledged
  double cls_poor_threshold_ms = 400;
  RunCounters counters;
  std::map<std::string, std::string> assumptions;
  std::string config_json;  // canonical config echo
};

namespace detail {
// Latest completion among the groups at the given priorities. Undefined when
// a priority has no group or any such group never completed.
inline std::optional<double> latest_completion(const RunReport& r, std::initializer_list<int> levels) {
  std::optional<double> out;
  for (int level : levels) {
    bool present = false;
    for (const auto& g : r.groups) {
      if (g.priority != level) continue;
      present = true;
      if (!g.completion_ms) return std::nullopt;
      out = std::max(out.value_or(*g.completion_ms), *g.completion_ms);
    }
    if (!present) return std::nullopt;
  }
  return out;
}
}  // namespace detail

inline std::optional<double> fcp(const RunReport& r) { return detail::latest_completion(r, {0, 1}); }
inline std::optional<double> tti(const RunReport& r) { return detail::latest_completion(r, {0, 1, 2}); }
inline std::optional<double> lcp(const RunReport& r) { return detail::latest_completion(r, {3}); }

inline std::optional<ClsClass> cls_class(const RunReport& r, double poor_threshold_ms) {
  const auto layout = detail::latest_completion(r, {1});
  const auto image = detail::latest_completion(r, {3});
  if (!layout || !image) return std::nullopt;
  const double delta = *image - *layout;
  return delta > poor_threshold_ms ? ClsClass::kPoor : ClsClass::kGood;
}

// bytes * 8 / (completion - first transmit). Undefined for a zero interval.
inline std::optional<double> effective_throughput(const GroupReport& g) {
  if (!g.completion_ms || !g.first_transmit_ms) return std::nullopt;
  const double interval_s = (*g.completion_ms - *g.first_transmit_ms) / 1000.0;
  if (interval_s <= 0) return std::nullopt;
  return static_cast<double>(g.bytes) * 8.0 / interval_s;
}

inline std::optional<double> total_load(const RunReport& r) {
  std::optional<double> out;
  for (const auto& g : r.groups) {
    if (!g.completion_ms) return std::nullopt;
    out = std::max(out.value_or(*g.completion_ms), *g.completion_ms);
  }
  return out;
}

// Fills every derived field from the per-group completions.
inline void finalize(RunReport& r) {
  for (auto& g : r.groups) g.effective_throughput_bps = effective_throughput(g);
  r.total_load_ms = total_load(r);
  r.fcp_ms = fcp(r);
  r.tti_ms = tti(r);
  r.lcp_ms = lcp(r);
  r.cls = cls_class(r, r.cls_poor_threshold_ms);
}

// (baseline - cats) / baseline
inline std::optional<double> improvement(std::optional<double> baseline, std::optional<double> cats) {
  if (!baseline || !cats || *baseline == 0) return std::nullopt;
  return (*baseline - *cats) / *baseline;
}

struct ComparisonRow {
  std::string metric;
  std::optional<double> baseline;
  std::optional<double> cats;
  std::optional<double> improvement;  // fraction
};

struct Comparison {
  std::vector<ComparisonRow> completion;  // per group, then total
  std::vector<ComparisonRow> qoe;         // FCP, TTI, LCP
  std::optional<ClsClass> baseline_cls;
  std::optional<ClsClass> cats_cls;
  std::optional<double> total_load_parity;  // |cats - baseline| / baseline

  const ComparisonRow* find(const std::string& metric) const {
    for (const auto* rows : {&completion, &qoe}) {
      for (const auto& row : *rows) {
        if (row.metric == metric) return &row;
      }
    }
    return nullptr;
  }
};

inline Comparison compare(const RunReport& cats, const RunReport& baseline) {
  if (cats.config_hash != baseline.config_hash) {
    throw ConfigMismatch("reports come from different configurations (" + cats.config_hash +
                         " vs " + baseline.config_hash + ")");
  }
  if (cats.groups.size() != baseline.groups.size()) {
    throw ConfigMismatch("reports have different workloads");
  }
  Comparison c;
  for (std::size_t i = 0; i < cats.groups.size(); ++i) {
    const auto& b = baseline.groups[i];
    const auto& a = cats.groups[i];
    c.completion.push_back({a.label + " (P" + std::to_string(a.priority) + ")", b.completion_ms,
                            a.completion_ms, improvement(b.completion_ms, a.completion_ms)});
  }
  c.completion.push_back({"Total Page Load", baseline.total_load_ms, cats.total_load_ms,
                          improvement(baseline.total_load_ms, cats.total_load_ms)});
  c.qoe.push_back({"FCP", baseline.fcp_ms, cats.fcp_ms, improvement(baseline.fcp_ms, cats.fcp_ms)});
  c.qoe.push_back({"TTI", baseline.tti_ms, cats.tti_ms, improvement(baseline.tti_ms, cats.tti_ms)});
  c.qoe.push_back({"LCP", baseline.lcp_ms, cats.lcp_ms, improvement(baseline.lcp_ms, cats.lcp_ms)});
  c.baseline_cls = baseline.cls;
  c.cats_cls = cats.cls;
  if (baseline.total_load_ms && cats.total_load_ms && *baseline.total_load_ms > 0) {
    c.total_load_parity =
        std::abs(*cats.total_load_ms - *baseline.total_load_ms) / *baseline.total_load_ms;
  }
  return c;
}

// Percentage with one decimal, as printed in the comparison table.
inline double percent_1dp(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

inline void print_comparison(std::ostream& out, const Comparison& c) {
  auto cell = [](std::optional<double> v, const char* unit) {
    std::ostringstream s;
    if (v) {
      s << std::fixed << std::setprecision(1) << *v << unit;
    } else {
      s << "n/a";
    }
    return s.str();
  };
  auto pct = [](std::optional<double> v) {
    std::ostringstream s;
    if (v) {
      s << std::fixed << std::setprecision(1) << percent_1dp(*v) << '%';
    } else {
      s << "N/A";
    }
    return s.str();
  };
  auto table = [&](const char* title, const std::vector<ComparisonRow>& rows) {
    out << title << '\n';
    out << std::left << std::setw(34) << "  metric" << std::right << std::setw(14) << "baseline"
        << std::setw(14) << "cats" << std::setw(10) << "improv." << '\n';
    for (const auto& r : rows) {
      out << "  " << std::left << std::setw(32) << r.metric << std::right << std::setw(14)
          << cell(r.baseline, " ms") << std::setw(14) << cell(r.cats, " ms") << std::setw(10)
          << pct(r.improvement) << '\n';
    }
  };
  table("Group completion times", c.completion);
  out << '\n';
  table("Estimated web performance", c.qoe);
  out << "  " << std::left << std::setw(32) << "CLS" << std::right << std::setw(14)
      << (c.baseline_cls ? to_string(*c.baseline_cls) : "n/a") << std::setw(14)
      << (c.cats_cls ? to_string(*c.cats_cls) : "n/a") << std::setw(10) << "N/A" << '\n';
  if (c.total_load_parity) {
    out << "\nTotal-load parity: " << std::fixed << std::setprecision(2)
        << *c.total_load_parity * 100.0 << "%\n";
  }
}

}  // namespace cats
