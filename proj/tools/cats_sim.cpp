// cats_sim: run the webpage scenario under CATS or the FIFO baseline, compare
// two reports, or sweep seeds/configs in parallel.
//
// Exit codes: 0 ok, 1 bad config or usage, 2 reports not comparable,
// 3 simulation failure.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cats/cats.hpp"

namespace fs = std::filesystem;
using namespace cats;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitMismatch = 2;
constexpr int kExitSimulation = 3;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

struct ConfigFlags {
  std::string preset = "paper";
  std::string config_file;
  std::string scheme;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--preset", f.preset, "Base parameter set")->check(CLI::IsMember({"paper"}));
  cmd->add_option("--config", f.config_file, "JSON config overlaid on the preset");
  cmd->add_option("--scheme", f.scheme, "cats or baseline")->check(CLI::IsMember({"cats", "baseline"}));
  cmd->add_option("--seed", f.seed, "RNG seed (overrides the config)");
}

// Preset, then file, then flags.
ExperimentConfig load_config(const ConfigFlags& f, const std::string& file) {
  ExperimentConfig c = ExperimentConfig::paper();
  if (!file.empty()) c = parse_config(read_json_file(file), c);
  if (!f.scheme.empty()) c.scheme = parse_scheme(f.scheme);
  if (f.seed) c.seed = *f.seed;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

// Runs one configuration and writes every artifact under `dir`.
RunReport run_to_dir(const ExperimentConfig& config, const fs::path& dir,
                     const std::vector<std::string>& traces) {
  fs::create_directories(dir);
  auto wants = [&](const char* name) {
    return std::find(traces.begin(), traces.end(), name) != traces.end();
  };
  std::ofstream events, schedule, cc, packets;
  TraceSinks sinks;
  if (wants("events")) {
    events.open(dir / "events.log", std::ios::binary);
    sinks.events = &events;
  }
  if (wants("schedule") && config.scheme == Scheme::kCats) {
    schedule.open(dir / "schedule.log", std::ios::binary);
    sinks.schedule = &schedule;
  }
  if (wants("cc")) {
    cc.open(dir / "cc.csv", std::ios::binary);
    sinks.cc = &cc;
  }
  if (wants("hexdump")) {
    packets.open(dir / "segments.hex", std::ios::binary);
    sinks.packets = &packets;
  }

  const RunReport report = run_experiment(config, sinks);

  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  std::ostringstream csv, completion, throughput;
  write_summary_csv(csv, report);
  write_completion_dat(completion, report);
  write_throughput_dat(throughput, report);
  write_text(dir / "summary.csv", csv.str());
  write_text(dir / "completion.dat", completion.str());
  write_text(dir / "throughput.dat", throughput.str());
  return report;
}

void print_run(std::ostream& out, const RunReport& r) {
  out << r.scheme << " (config " << r.config_hash << ")\n";
  for (const auto& g : r.groups) {
    out << "  P" << g.priority << "  " << std::left << std::setw(22) << g.label << std::right;
    if (g.completion_ms) {
      out << std::fixed << std::setprecision(1) << std::setw(9) << *g.completion_ms << " ms";
    } else {
      out << std::setw(12) << "incomplete";
    }
    if (g.effective_throughput_bps) {
      out << std::setw(10) << std::setprecision(1) << *g.effective_throughput_bps / 1000.0 << " kbps";
    }
    out << '\n';
  }
  if (r.total_load_ms) out << "  total " << std::setprecision(1) << *r.total_load_ms << " ms";
  out << "  (setup " << r.setup_ms << " ms, retransmits " << r.counters.retransmits << ", drops "
      << r.counters.bottleneck_drops << ")\n";
}

int cmd_run(const ConfigFlags& f, const std::string& out_dir, const std::vector<std::string>& traces) {
  const ExperimentConfig config = load_config(f, f.config_file);
  const RunReport report = run_to_dir(config, out_dir, traces);
  print_run(std::cout, report);
  std::cout << "wrote " << (fs::path(out_dir) / "report.json").string() << '\n';
  return 0;
}

int cmd_compare(const std::string& cats_path, const std::string& baseline_path, const std::string& out_file) {
  const RunReport a = report_from_json(read_json_file(cats_path));
  const RunReport b = report_from_json(read_json_file(baseline_path));
  Comparison c;
  try {
    c = compare(a, b);
  } catch (const ConfigMismatch& e) {
    std::cerr << "cats_sim compare: " << e.what() << '\n';
    return kExitMismatch;
  }
  print_comparison(std::cout, c);
  if (!out_file.empty()) {
    nlohmann::json j;
    for (const auto* rows : {&c.completion, &c.qoe}) {
      for (const auto& row : *rows) {
        j["metrics"].push_back({{"metric", row.metric},
                                {"baseline_ms", report_detail::opt(row.baseline)},
                                {"cats_ms", report_detail::opt(row.cats)},
                                {"improvement", report_detail::opt(row.improvement)}});
      }
    }
    j["cls"] = {{"baseline", c.baseline_cls ? to_string(*c.baseline_cls) : "n/a"},
                {"cats", c.cats_cls ? to_string(*c.cats_cls) : "n/a"}};
    j["total_load_parity"] = report_detail::opt(c.total_load_parity);
    write_text(out_file, j.dump(2) + "\n");
  }
  return 0;
}

struct SweepJob {
  ExperimentConfig config;
  fs::path dir;
  std::string label;
};

int cmd_sweep(const ConfigFlags& f, const std::vector<std::string>& config_files,
              const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& schemes,
              const std::string& out_dir, unsigned jobs) {
  std::vector<SweepJob> work;
  const std::vector<std::string> files = config_files.empty() ? std::vector<std::string>{""} : config_files;
  // Without --seeds each config keeps its own seed.
  std::vector<std::optional<std::uint64_t>> seed_list(seeds.begin(), seeds.end());
  if (seed_list.empty()) seed_list.emplace_back();
  for (std::size_t fi = 0; fi < files.size(); ++fi) {
    for (const auto& scheme : schemes) {
      for (auto seed : seed_list) {
        ConfigFlags one = f;
        one.scheme = scheme;
        one.seed = seed;
        SweepJob job{load_config(one, files[fi]), {}, {}};
        job.label = "c" + std::to_string(fi) + "-" + scheme + "-s" + std::to_string(job.config.seed);
        job.dir = fs::path(out_dir) / job.label;
        work.push_back(std::move(job));
      }
    }
  }

  // One engine per job; workers share nothing but the job index.
  std::vector<std::optional<RunReport>> results(work.size());
  std::vector<std::string> errors(work.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      try {
        results[i] = run_to_dir(work[i].config, work[i].dir, {});
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::max(1u, jobs); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv << "run,scheme,seed,config_hash,total_load_ms,fcp_ms,tti_ms,lcp_ms,cls,retransmits\n";
  auto cell = [](std::optional<double> v) {
    std::ostringstream s;
    if (v) s << std::fixed << std::setprecision(3) << *v;
    return s.str();
  };
  int rc = 0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    if (!results[i]) {
      std::cerr << work[i].label << ": " << errors[i] << '\n';
      rc = kExitSimulation;
      continue;
    }
    const auto& r = *results[i];
    csv << work[i].label << ',' << r.scheme << ',' << work[i].config.seed << ',' << r.config_hash << ','
        << cell(r.total_load_ms) << ',' << cell(r.fcp_ms) << ',' << cell(r.tti_ms) << ','
        << cell(r.lcp_ms) << ',' << (r.cls ? to_string(*r.cls) : "") << ',' << r.counters.retransmits
        << '\n';
  }
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "sweep.csv", csv.str());
  std::cout << csv.str();
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CATS discrete-event experiment runner"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  std::string run_out = "out";
  std::vector<std::string> traces;
  auto* run = app.add_subcommand("run", "Run one scenario and write its report");
  add_config_flags(run, run_flags);
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--trace", traces, "Traces to write: events, schedule, cc, hexdump")
      ->check(CLI::IsMember({"events", "schedule", "cc", "hexdump"}))
      ->delimiter(',');

  std::string cats_path, baseline_path, compare_out;
  auto* cmp = app.add_subcommand("compare", "Compare a cats report against a baseline report");
  cmp->add_option("cats_report", cats_path, "report.json of the cats run")->required();
  cmp->add_option("baseline_report", baseline_path, "report.json of the baseline run")->required();
  cmp->add_option("--out", compare_out, "Also write the comparison as JSON");

  ConfigFlags sweep_flags;
  std::vector<std::string> sweep_configs;
  std::vector<std::uint64_t> sweep_seeds;
  std::vector<std::string> sweep_schemes{"cats", "baseline"};
  std::string sweep_out = "sweep";
  unsigned sweep_jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* sweep = app.add_subcommand("sweep", "Run configs x schemes x seeds in parallel");
  sweep->add_option("--preset", sweep_flags.preset, "Base parameter set")->check(CLI::IsMember({"paper"}));
  sweep->add_option("--config", sweep_configs, "Config files (repeatable)");
  sweep->add_option("--seeds", sweep_seeds, "Seeds")->delimiter(',');
  sweep->add_option("--schemes", sweep_schemes, "Schemes")
      ->check(CLI::IsMember({"cats", "baseline"}))
      ->delimiter(',');
  sweep->add_option("--jobs", sweep_jobs, "Worker threads");
  sweep->add_option("--out", sweep_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_flags, run_out, traces);
    if (*cmp) return cmd_compare(cats_path, baseline_path, compare_out);
    if (*sweep) return cmd_sweep(sweep_flags, sweep_configs, sweep_seeds, sweep_schemes, sweep_out, sweep_jobs);
  } catch (const ConfigError& e) {
    std::cerr << "cats_sim: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "cats_sim: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SimulationError& e) {
    std::cerr << "cats_sim: simulation failed: " << e.what() << '\n';
    return kExitSimulation;
  } catch (const std::exception& e) {
    std::cerr << "cats_sim: " << e.what() << '\n';
    return kExitSimulation;
  }
  return 0;
}
