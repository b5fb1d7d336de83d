// Experiment driver: generates synthetic sparse-gradient workloads, replays
// synchronization schemes on the simulated network, sweeps the hash memory
// geometry, and picks a scheme from a measured sparsity profile.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "zen/costmodel.hpp"
#include "zen/experiment.hpp"
#include "zen/schemes.hpp"
#include "zen/workload.hpp"

namespace {

namespace fs = std::filesystem;

zen::ExperimentConfig load_config(const std::string& path,
                                  const std::optional<uint64_t>& seed,
                                  const std::optional<std::string>& out,
                                  const std::optional<uint32_t>& trials) {
  zen::ExperimentConfig cfg = zen::load_experiment_config(path);
  if (seed) cfg.workload.seed = *seed;
  if (out) cfg.out_dir = *out;
  if (trials) cfg.trials = *trials;
  if (const char* lanes = std::getenv("ZEN_SIM_LANES")) {
    const long v = std::strtol(lanes, nullptr, 10);
    if (v < 1) throw zen::Error("ZEN_SIM_LANES must be a positive integer");
    cfg.lanes = static_cast<uint32_t>(v);
  }
  return cfg;
}

int cmd_generate(const zen::ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  for (uint32_t trial = 0; trial < cfg.trials; ++trial) {
    zen::WorkloadSpec spec = cfg.workload;
    spec.seed = zen::detail::derive_seed(cfg.workload.seed,
                                         uint64_t(spec.nodes) * 100000 + trial);
    const auto tensors = zen::generate(spec);
    for (uint32_t node = 0; node < spec.nodes; ++node) {
      const std::string path = cfg.out_dir + "/" + zen::tensor_file_name(trial, node);
      zen::write_sparse_file(path, tensors[node]);
      std::cout << path << "\n";
    }
  }
  return 0;
}

int cmd_run(const zen::ExperimentConfig& cfg) {
  std::map<uint32_t, zen::SparsityProfile> profiles;
  const auto rows = zen::run_experiment(cfg, &profiles);
  fs::create_directories(cfg.out_dir);

  const auto json = zen::rows_to_json(cfg, rows);
  zen::validate_report_json(json);
  {
    std::ofstream os(cfg.out_dir + "/report.json");
    os << json.dump(2) << "\n";
  }
  {
    std::ofstream os(cfg.out_dir + "/report.csv");
    os << zen::rows_to_csv(rows);
  }
  for (const auto& [n, profile] : profiles) {
    std::ofstream os(cfg.out_dir + "/profile_n" + std::to_string(n) + ".json");
    os << zen::profile_to_json(profile).dump(2) << "\n";
  }

  int failures = 0;
  for (const auto& row : rows) {
    if (!row.error.empty()) {
      std::cerr << row.scheme << " n=" << row.n << " trial=" << row.trial
                << " failed: " << row.error << "\n";
      ++failures;
    } else if (!row.oracle_ok) {
      std::cerr << row.scheme << " n=" << row.n << " trial=" << row.trial
                << " diverged from the aggregation oracle\n";
      ++failures;
    }
  }
  std::cout << "rows: " << rows.size() << ", failures: " << failures << "\n"
            << "report: " << cfg.out_dir << "/report.json, " << cfg.out_dir << "/report.csv\n";
  return failures == 0 ? 0 : 1;
}

int cmd_select(const std::string& profile_path, uint32_t n) {
  std::ifstream is(profile_path);
  if (!is) {
    std::cerr << "cannot open profile " << profile_path << "\n";
    return 2;
  }
  try {
    nlohmann::json j;
    is >> j;
    const zen::SparsityProfile profile = zen::profile_from_json(j);
    std::cout << zen::to_string(zen::select_scheme(profile, n)) << "\n";
    return 0;
  } catch (const zen::MissingProfileEntry& e) {
    std::cerr << "profile incomplete: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "profile is not valid json: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "profile unusable: " << e.what() << "\n";
    return 2;
  }
}

int cmd_bench_hash(const zen::ExperimentConfig& cfg) {
  const auto cells = zen::bench_hash(cfg);
  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/stats.json";
  {
    std::ofstream os(path);
    os << zen::bench_to_json(cfg, cells).dump(2) << "\n";
  }
  std::printf("%-6s %-3s %-16s %-6s %-10s %s\n", "r1/|I|", "k", "serial_fraction", "loss",
              "wall_ms", "overflow");
  for (const auto& c : cells) {
    std::printf("%-6.0f %-3u %-16.5f %-6llu %-10.3f %s\n", c.r1_multiplier, c.rehash_depth,
                c.serial_fraction, static_cast<unsigned long long>(c.loss), c.wall_ms,
                c.overflow ? "yes" : "no");
  }
  std::cout << "stats: " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse gradient synchronization simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<uint32_t> trials;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value experiment config")->required();
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--out", out, "override the output directory");
    cmd->add_option("--trials", trials, "override the trial count");
  };

  auto* generate = app.add_subcommand("generate", "write per-trial tensor files");
  add_common(generate);
  auto* run = app.add_subcommand("run", "run schemes and write report.json/report.csv");
  add_common(run);

  std::string profile_path;
  uint32_t select_n = 16;
  auto* select = app.add_subcommand("select", "pick a scheme from a sparsity profile");
  select->add_option("--profile", profile_path, "profile json path")->required();
  select->add_option("--n", select_n, "node count")->required();

  auto* bench = app.add_subcommand("bench-hash", "sweep hash memory size and rehash depth");
  add_common(bench);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(load_config(config_path, seed, out, trials));
    if (run->parsed()) return cmd_run(load_config(config_path, seed, out, trials));
    if (select->parsed()) return cmd_select(profile_path, select_n);
    if (bench->parsed()) return cmd_bench_hash(load_config(config_path, seed, out, trials));
  } catch (const zen::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
