#pragma once

// Experiment configuration: every tunable of a run, its JSON form, and a
// stable hash used to refuse comparisons across different scenarios.
//
// Config files are partial overlays on the built-in preset; unknown keys are
// rejected with the full key path.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cats/bbr.hpp"
#include "cats/cats_socket.hpp"
#include "cats/conductor.hpp"
#include "cats/errors.hpp"
#include "cats/net.hpp"
#include "cats/transport.hpp"
#include "cats/workload.hpp"

namespace cats {

using json = nlohmann::json;

enum class Scheme { kCats, kBaseline };

inline const char* to_string(Scheme s) { return s == Scheme::kCats ? "cats" : "baseline"; }

inline Scheme parse_scheme(const std::string& s) {
  if (s == "cats") return Scheme::kCats;
  if (s == "baseline") return Scheme::kBaseline;
  throw ConfigError("scheme: expected 'cats' or 'baseline', got '" + s + "'");
}

struct ExperimentConfig {
  Scheme scheme = Scheme::kCats;
  std::uint64_t seed = 1;
  std::uint64_t event_cap = Simulator::kDefaultEventCap;
  DumbbellConfig topology = DumbbellConfig::paper();
  TransportConfig transport;
  std::uint32_t setup_rtts = 1;
  CcConfig cc;
  FairnessConfig fairness = FairnessConfig::defaults();
  Priority default_priority{Priority::kLowest};
  std::optional<Priority> save_data_threshold;
  CongestionShedding congestion_shedding;
  std::string workload_name = "default_webpage";
  WorkloadSpec workload = default_webpage();
  std::size_t baseline_write_chunk = 64 * 1024;
  double cls_poor_threshold_ms = 400;

  static ExperimentConfig paper(Scheme scheme = Scheme::kCats) {
    ExperimentConfig c;
    c.scheme = scheme;
    return c;
  }

  void validate() const {
    topology.validate();
    transport.validate();
    cc.validate();
    fairness.validate();
    workload.validate();
    if (workload.total_bytes() >= (std::uint64_t{1} << 32)) {
      throw ConfigError("workload: total size must stay below 4 GiB (32-bit sequence space)");
    }
    if (baseline_write_chunk == 0) throw ConfigError("baseline.write_chunk must be > 0");
    if (cls_poor_threshold_ms < 0) throw ConfigError("metrics.cls_poor_threshold_ms must be >= 0");
    if (event_cap == 0) throw ConfigError("event_cap must be > 0");
    if (congestion_shedding.rtt_factor <= 1.0) {
      throw ConfigError("conductor.congestion_shedding.rtt_factor must be > 1");
    }
  }
};

namespace config_detail {

// Walks one JSON object, remembering which keys were read so the rest can be
// reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  bool present(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) const { return j_.at(key); }
  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type");
    }
  }

  void read_unsigned(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(path(key) + ": expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  template <typename T>
  void read_count(const std::string& key, T& out) {
    std::uint64_t v = out;
    read_unsigned(key, v);
    out = static_cast<T>(v);
  }

  void read_ms(const std::string& key, SimTime& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(path(key) + ": expected milliseconds");
    out = from_ms(v.get<double>());
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + path(it.key()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Priority parse_priority(const json& v, const std::string& path) {
  if (!v.is_number_integer() || !Priority::valid(v.get<int>())) {
    throw ConfigError(path + ": priority must be an integer in 0..4");
  }
  return Priority(v.get<int>());
}

inline Ratio parse_ratio(const json& v, const std::string& path) {
  Ratio r;
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() <= 0) throw ConfigError(path + ": multiplier must be positive");
    r = Ratio{v.get<std::uint64_t>(), 1};
  } else if (v.is_string()) {
    unsigned long long num = 0, den = 0;
    char tail = 0;
    const std::string s = v.get<std::string>();
    const int n = std::sscanf(s.c_str(), "%llu/%llu%c", &num, &den, &tail);
    if (n == 1) den = 1;
    if (n < 1 || n > 2 || (n == 1 && s.find('/') != std::string::npos)) {
      throw ConfigError(path + ": expected an integer or \"num/den\"");
    }
    r = Ratio{num, den};
  } else {
    throw ConfigError(path + ": expected an integer or \"num/den\"");
  }
  if (r.num == 0 || r.den == 0) throw ConfigError(path + ": multiplier must be positive");
  return r;
}

inline json ratio_json(const Ratio& r) {
  if (r.den == 1) return r.num;
  return std::to_string(r.num) + "/" + std::to_string(r.den);
}

inline void parse_link(const json& j, const std::string& path, LinkConfig& link) {
  ObjectReader r(j, path);
  r.read_unsigned("rate_bps", link.rate_bps);
  r.read_ms("delay_ms", link.one_way_delay);
  r.read_count("queue_packets", link.queue_capacity);
  r.finish();
}

inline json link_json(const LinkConfig& l) {
  return {{"rate_bps", l.rate_bps}, {"delay_ms", to_ms(l.one_way_delay)},
          {"queue_packets", l.queue_capacity}};
}

inline WorkloadSpec parse_workload(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  WorkloadSpec w;
  if (!r.has("groups") || !r.at("groups").is_array()) throw ConfigError(path + ".groups: required array");
  std::size_t idx = 0;
  for (const auto& g : r.at("groups")) {
    const std::string gp = path + ".groups[" + std::to_string(idx++) + "]";
    ObjectReader gr(g, gp);
    WorkloadGroup group;
    if (!gr.has("priority")) throw ConfigError(gp + ".priority: required");
    group.priority = parse_priority(gr.at("priority"), gp + ".priority");
    if (!gr.has("size")) throw ConfigError(gp + ".size: required");
    gr.read_unsigned("size", group.size);
    gr.read("label", group.label);
    gr.finish();
    w.groups.push_back(std::move(group));
  }
  if (r.has("submission_order")) {
    r.read("submission_order", w.submission_order);
  } else {
    for (std::size_t i = 0; i < w.groups.size(); ++i) w.submission_order.push_back(i);
  }
  r.read_ms("submission_time_ms", w.submission_time);
  r.finish();
  return w;
}

inline json workload_json(const WorkloadSpec& w) {
  json groups = json::array();
  for (const auto& g : w.groups) {
    groups.push_back({{"priority", g.priority.level()}, {"size", g.size}, {"label", g.label}});
  }
  return {{"groups", groups},
          {"submission_order", w.submission_order},
          {"submission_time_ms", to_ms(w.submission_time)}};
}

}  // namespace config_detail

// Overlays `j` on `base`.
inline ExperimentConfig parse_config(const json& j, ExperimentConfig base = ExperimentConfig::paper()) {
  using namespace config_detail;
  ExperimentConfig c = std::move(base);
  ObjectReader root(j, "");

  if (root.has("scheme")) c.scheme = parse_scheme(root.at("scheme").get<std::string>());
  root.read_unsigned("seed", c.seed);
  root.read_unsigned("event_cap", c.event_cap);

  if (root.has("topology")) {
    ObjectReader t(root.at("topology"), "topology");
    t.read_ms("rtt_ms", c.topology.rtt);
    if (t.has("bottleneck")) parse_link(t.at("bottleneck"), "topology.bottleneck", c.topology.bottleneck);
    if (t.has("access")) parse_link(t.at("access"), "topology.access", c.topology.access);
    t.finish();
  }

  if (root.has("transport")) {
    ObjectReader t(root.at("transport"), "transport");
    t.read_count("mss", c.transport.mss);
    t.read_count("send_buffer", c.transport.send_buffer);
    t.read_ms("min_rto_ms", c.transport.rto.min_rto);
    t.read_ms("max_rto_ms", c.transport.rto.max_rto);
    t.read_ms("clock_granularity_ms", c.transport.rto.granularity);
    t.read_ms("initial_rto_ms", c.transport.rto.initial_rto);
    t.read_count("dupack_threshold", c.transport.dupack_threshold);
    t.read_count("setup_rtts", c.setup_rtts);
    t.finish();
  }

  if (root.has("cc")) {
    ObjectReader t(root.at("cc"), "cc");
    t.read_count("initial_window_segments", c.cc.initial_window_segments);
    t.read_count("min_cwnd_segments", c.cc.min_cwnd_segments);
    t.read_ms("initial_rtt_ms", c.cc.initial_rtt);
    t.read("high_gain", c.cc.high_gain);
    t.read("probe_bw_cwnd_gain", c.cc.probe_bw_cwnd_gain);
    t.read_count("bw_window_rounds", c.cc.bw_window_rounds);
    t.read_ms("rt_prop_window_ms", c.cc.rt_prop_window);
    t.read_ms("probe_rtt_duration_ms", c.cc.probe_rtt_duration);
    t.finish();
  }

  if (root.has("fairness")) {
    ObjectReader t(root.at("fairness"), "fairness");
    auto five = [&](const std::string& key) -> const json* {
      if (!t.has(key)) return nullptr;
      const auto& v = t.at(key);
      if (!v.is_array() || v.size() != kQueues) {
        throw ConfigError(t.path(key) + ": expected an array of 5 entries");
      }
      return &v;
    };
    const json* high = five("high_watermark");
    const json* low = five("low_watermark");
    const json* mult = five("payback_multiplier");
    for (std::size_t i = 0; i < kQueues; ++i) {
      auto& q = c.fairness.queues[i];
      const std::string at = "[" + std::to_string(i) + "]";
      if (high) {
        const auto& v = (*high)[i];
        if (v.is_null() || (v.is_string() && v.get<std::string>() == "inf")) {
          q.high.reset();
        } else if (v.is_number_unsigned()) {
          q.high = v.get<std::uint64_t>();
        } else {
          throw ConfigError("fairness.high_watermark" + at + ": expected bytes, null or \"inf\"");
        }
        // Keep L = H/2 unless low watermarks are given explicitly.
        if (!low) q.low = q.high ? *q.high / 2 : 0;
      }
      if (low) {
        const auto& v = (*low)[i];
        if (!v.is_number_unsigned()) throw ConfigError("fairness.low_watermark" + at + ": expected bytes");
        q.low = v.get<std::uint64_t>();
      }
      if (mult) q.multiplier = parse_ratio((*mult)[i], "fairness.payback_multiplier" + at);
    }
    t.finish();
  }

  if (root.has("conductor")) {
    ObjectReader t(root.at("conductor"), "conductor");
    if (t.has("default_priority")) {
      c.default_priority = parse_priority(t.at("default_priority"), "conductor.default_priority");
    }
    if (t.present("save_data_threshold")) {
      const auto& v = t.at("save_data_threshold");
      if (v.is_null()) {
        c.save_data_threshold.reset();
      } else {
        c.save_data_threshold = parse_priority(v, "conductor.save_data_threshold");
      }
    }
    if (t.has("congestion_shedding")) {
      ObjectReader s(t.at("congestion_shedding"), "conductor.congestion_shedding");
      auto& cs = c.congestion_shedding;
      s.read("enabled", cs.enabled);
      s.read("rtt_factor", cs.rtt_factor);
      s.read_count("persist_rtts", cs.persist_rtts);
      if (s.present("bytes")) {
        if (s.at("bytes").is_null()) {
          cs.bytes.reset();
        } else {
          std::uint64_t b = 0;
          s.read_unsigned("bytes", b);
          cs.bytes = b;
        }
      }
      s.finish();
    }
    t.finish();
  }

  if (root.has("workload")) {
    const auto& w = root.at("workload");
    if (w.is_string()) {
      if (w.get<std::string>() != "default_webpage") {
        throw ConfigError("workload: unknown preset '" + w.get<std::string>() + "'");
      }
      c.workload_name = "default_webpage";
      c.workload = default_webpage();
    } else {
      c.workload_name = "custom";
      c.workload = parse_workload(w, "workload");
    }
  }

  if (root.has("baseline")) {
    ObjectReader t(root.at("baseline"), "baseline");
    t.read_count("write_chunk", c.baseline_write_chunk);
    t.finish();
  }

  if (root.has("metrics")) {
    ObjectReader t(root.at("metrics"), "metrics");
    t.read("cls_poor_threshold_ms", c.cls_poor_threshold_ms);
    t.finish();
  }

  root.finish();
  c.validate();
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  using namespace config_detail;
  json high = json::array(), low = json::array(), mult = json::array();
  for (const auto& q : c.fairness.queues) {
    high.push_back(q.high ? json(*q.high) : json(nullptr));
    low.push_back(q.low);
    mult.push_back(ratio_json(q.multiplier));
  }
  json shed_bytes = c.congestion_shedding.bytes ? json(*c.congestion_shedding.bytes) : json(nullptr);
  return {
      {"scheme", to_string(c.scheme)},
      {"seed", c.seed},
      {"event_cap", c.event_cap},
      {"topology",
       {{"rtt_ms", to_ms(c.topology.rtt)},
        {"bottleneck", link_json(c.topology.bottleneck)},
        {"access", link_json(c.topology.access)}}},
      {"transport",
       {{"mss", c.transport.mss},
        {"send_buffer", c.transport.send_buffer},
        {"min_rto_ms", to_ms(c.transport.rto.min_rto)},
        {"max_rto_ms", to_ms(c.transport.rto.max_rto)},
        {"clock_granularity_ms", to_ms(c.transport.rto.granularity)},
        {"initial_rto_ms", to_ms(c.transport.rto.initial_rto)},
        {"dupack_threshold", c.transport.dupack_threshold},
        {"setup_rtts", c.setup_rtts}}},
      {"cc",
       {{"initial_window_segments", c.cc.initial_window_segments},
        {"min_cwnd_segments", c.cc.min_cwnd_segments},
        {"initial_rtt_ms", to_ms(c.cc.initial_rtt)},
        {"high_gain", c.cc.high_gain},
        {"probe_bw_cwnd_gain", c.cc.probe_bw_cwnd_gain},
        {"bw_window_rounds", c.cc.bw_window_rounds},
        {"rt_prop_window_ms", to_ms(c.cc.rt_prop_window)},
        {"probe_rtt_duration_ms", to_ms(c.cc.probe_rtt_duration)}}},
      {"fairness", {{"high_watermark", high}, {"low_watermark", low}, {"payback_multiplier", mult}}},
      {"conductor",
       {{"default_priority", c.default_priority.level()},
        {"save_data_threshold",
         c.save_data_threshold ? json(c.save_data_threshold->level()) : json(nullptr)},
        {"congestion_shedding",
         {{"enabled", c.congestion_shedding.enabled},
          {"rtt_factor", c.congestion_shedding.rtt_factor},
          {"persist_rtts", c.congestion_shedding.persist_rtts},
          {"bytes", shed_bytes}}}}},
      {"workload", workload_json(c.workload)},
      {"baseline", {{"write_chunk", c.baseline_write_chunk}}},
      {"metrics", {{"cls_poor_threshold_ms", c.cls_poor_threshold_ms}}},
  };
}

// FNV-1a over the canonical JSON of everything except the scheme, so a cats
// run and a baseline run of the same scenario share a hash.
inline std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("scheme");
  const std::string canonical = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cats
