#pragma once

// Serialization of run reports: report.json (round-trips for `compare`),
// summary.csv, and the gnuplot-friendly completion/throughput .dat files.

#include <iomanip>
#include <ostream>
#include <string>

#include <json.hpp>

#include "cats/errors.hpp"
#include "cats/metrics.hpp"

namespace cats {

namespace report_detail {

inline nlohmann::json opt(std::optional<double> v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> get_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace report_detail

inline nlohmann::json to_json(const RunReport& r) {
  using report_detail::opt;
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"label", g.label},
                      {"priority", g.priority},
                      {"bytes", g.bytes},
                      {"completion_ms", opt(g.completion_ms)},
                      {"first_transmit_ms", opt(g.first_transmit_ms)},
                      {"first_wire_ms", opt(g.first_wire_ms)},
                      {"effective_throughput_bps", opt(g.effective_throughput_bps)},
                      {"bytes_delivered", g.bytes_delivered},
                      {"bytes_shed", g.bytes_shed}});
  }
  const auto& c = r.counters;
  nlohmann::json j = {
      {"scheme", r.scheme},
      {"config_hash", r.config_hash},
      {"groups", groups},
      {"total_load_ms", opt(r.total_load_ms)},
      {"fcp_ms", opt(r.fcp_ms)},
      {"tti_ms", opt(r.tti_ms)},
      {"lcp_ms", opt(r.lcp_ms)},
      {"cls", r.cls ? nlohmann::json(to_string(*r.cls)) : nlohmann::json(nullptr)},
      {"cls_poor_threshold_ms", r.cls_poor_threshold_ms},
      {"setup_ms", r.setup_ms},
      {"finish_ms", r.finish_ms},
      {"counters",
       {{"segments_sent", c.segments_sent},
        {"retransmits", c.retransmits},
        {"fast_retransmits", c.fast_retransmits},
        {"dup_acks", c.dup_acks},
        {"rto_firings", c.rto_firings},
        {"protocol_errors", c.protocol_errors},
        {"wire_bytes_sent", c.wire_bytes_sent},
        {"bottleneck_drops", c.bottleneck_drops},
        {"events_dispatched", c.events_dispatched},
        {"deadlocks_resolved", c.deadlocks_resolved},
        {"baseline_writes", c.baseline_writes},
        {"congestion_sheds", c.congestion_sheds},
        {"options_seen", c.options_seen},
        {"shed_by_priority", c.shed_by_priority}}},
      {"assumptions", r.assumptions},
  };
  j["config"] = r.config_json.empty() ? nlohmann::json(nullptr) : nlohmann::json::parse(r.config_json);
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  using report_detail::get_opt;
  try {
    RunReport r;
    r.scheme = j.at("scheme").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& g : j.at("groups")) {
      GroupReport gr;
      gr.label = g.at("label").get<std::string>();
      gr.priority = g.at("priority").get<int>();
      gr.bytes = g.at("bytes").get<std::uint64_t>();
      gr.completion_ms = get_opt(g, "completion_ms");
      gr.first_transmit_ms = get_opt(g, "first_transmit_ms");
      gr.first_wire_ms = get_opt(g, "first_wire_ms");
      gr.bytes_delivered = g.value("bytes_delivered", std::uint64_t{0});
      gr.bytes_shed = g.value("bytes_shed", std::uint64_t{0});
      r.groups.push_back(std::move(gr));
    }
    r.cls_poor_threshold_ms = j.value("cls_poor_threshold_ms", 400.0);
    r.setup_ms = j.value("setup_ms", 0.0);
    r.finish_ms = j.value("finish_ms", 0.0);
    if (j.contains("counters")) {
      const auto& c = j.at("counters");
      auto& rc = r.counters;
      rc.segments_sent = c.value("segments_sent", std::uint64_t{0});
      rc.retransmits = c.value("retransmits", std::uint64_t{0});
      rc.fast_retransmits = c.value("fast_retransmits", std::uint64_t{0});
      rc.dup_acks = c.value("dup_acks", std::uint64_t{0});
      rc.rto_firings = c.value("rto_firings", std::uint64_t{0});
      rc.protocol_errors = c.value("protocol_errors", std::uint64_t{0});
      rc.wire_bytes_sent = c.value("wire_bytes_sent", std::uint64_t{0});
      rc.bottleneck_drops = c.value("bottleneck_drops", std::uint64_t{0});
      rc.events_dispatched = c.value("events_dispatched", std::uint64_t{0});
      rc.deadlocks_resolved = c.value("deadlocks_resolved", std::uint64_t{0});
      rc.baseline_writes = c.value("baseline_writes", std::uint64_t{0});
      rc.congestion_sheds = c.value("congestion_sheds", std::uint64_t{0});
      rc.options_seen = c.value("options_seen", std::vector<std::uint64_t>{});
      rc.shed_by_priority = c.value("shed_by_priority", std::vector<std::uint64_t>{});
    }
    if (j.contains("assumptions")) r.assumptions = j.at("assumptions").get<std::map<std::string, std::string>>();
    if (j.contains("config") && !j.at("config").is_null()) r.config_json = j.at("config").dump();
    // Derived fields are recomputed rather than trusted.
    finalize(r);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

inline void write_summary_csv(std::ostream& out, const RunReport& r) {
  auto cell = [](std::optional<double> v) {
    std::ostringstream s;
    if (v) s << std::fixed << std::setprecision(3) << *v;
    return s.str();
  };
  out << "scheme,priority,label,bytes,first_transmit_ms,first_wire_ms,completion_ms,"
         "effective_throughput_bps,bytes_delivered,bytes_shed\n";
  for (const auto& g : r.groups) {
    out << r.scheme << ',' << g.priority << ",\"" << g.label << "\"," << g.bytes << ','
        << cell(g.first_transmit_ms) << ',' << cell(g.first_wire_ms) << ',' << cell(g.completion_ms)
        << ',' << cell(g.effective_throughput_bps) << ',' << g.bytes_delivered << ',' << g.bytes_shed
        << '\n';
  }
  out << r.scheme << ",,total," << "," << ",," << cell(r.total_load_ms) << ",,,\n";
}

// "<priority> <completion_ms>" per group, then a commented QoE block.
inline void write_completion_dat(std::ostream& out, const RunReport& r) {
  auto cell = [](std::optional<double> v) {
    std::ostringstream s;
    if (v) {
      s << std::fixed << std::setprecision(3) << *v;
    } else {
      s << "nan";
    }
    return s.str();
  };
  out << "# " << r.scheme << " group completion times (ms)\n# priority completion_ms\n";
  for (const auto& g : r.groups) out << g.priority << ' ' << cell(g.completion_ms) << '\n';
  out << "# total " << cell(r.total_load_ms) << "\n# fcp " << cell(r.fcp_ms) << "\n# tti "
      << cell(r.tti_ms) << "\n# lcp " << cell(r.lcp_ms) << '\n';
}

// "<priority> <effective throughput kbps>" per group.
inline void write_throughput_dat(std::ostream& out, const RunReport& r) {
  out << "# " << r.scheme << " effective throughput per group\n# priority kbps\n";
  for (const auto& g : r.groups) {
    out << g.priority << ' ';
    if (g.effective_throughput_bps) {
      out << std::fixed << std::setprecision(3) << *g.effective_throughput_bps / 1000.0;
    } else {
      out << "nan";
    }
    out << '\n';
  }
}

}  // namespace cats
