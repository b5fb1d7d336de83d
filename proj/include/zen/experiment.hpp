#pragma once

#include <chrono>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "zen/costmodel.hpp"
#include "zen/schemes.hpp"
#include "zen/simnet.hpp"
#include "zen/workload.hpp"

#include "json.hpp"

namespace zen {

// One experiment: a workload family, the schemes to run on it, and the
// simulator/hashing knobs. Parsed from a plain key=value file.
struct ExperimentConfig {
  WorkloadSpec workload;
  std::vector<std::string> schemes = known_scheme_names();
  std::vector<uint32_t> n_list = {4, 8, 16};
  double bandwidth = 1e9;  // bits per time unit
  uint32_t trials = 1;
  uint32_t hash_depth = 3;
  double r1_multiplier = 2.0;
  double r2_ratio = 0.1;
  uint32_t lanes = 1;
  uint32_t block_size = 256;
  std::string out_dir = "out";
  std::string tensors_dir;  // optional: load fixtures instead of generating
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& is) {
  ExperimentConfig cfg;
  std::string line;
  uint32_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.resize(hash_pos);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
      line.pop_back();
    size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(line_no) + " is not key=value");
    const std::string key = line.substr(start, eq - start);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "M") cfg.workload.universe = std::stoull(value);
      else if (key == "nodes") cfg.workload.nodes = std::stoul(value);
      else if (key == "density") cfg.workload.density = std::stod(value);
      else if (key == "omega") cfg.workload.omega = std::stod(value);
      else if (key == "hot_fraction") cfg.workload.hot_fraction = std::stod(value);
      else if (key == "hot_mass") cfg.workload.hot_mass = std::stod(value);
      else if (key == "seed") cfg.workload.seed = std::stoull(value);
      else if (key == "schemes") cfg.schemes = detail::split(value, ',');
      else if (key == "n_list") {
        cfg.n_list.clear();
        for (const auto& item : detail::split(value, ',')) cfg.n_list.push_back(std::stoul(item));
      } else if (key == "bandwidth") cfg.bandwidth = std::stod(value);
      else if (key == "trials") cfg.trials = std::stoul(value);
      else if (key == "hash_k") cfg.hash_depth = std::stoul(value);
      else if (key == "r1_multiplier") cfg.r1_multiplier = std::stod(value);
      else if (key == "r2_ratio") cfg.r2_ratio = std::stod(value);
      else if (key == "lanes") cfg.lanes = std::stoul(value);
      else if (key == "block_size") cfg.block_size = std::stoul(value);
      else if (key == "out") cfg.out_dir = value;
      else if (key == "tensors_dir") cfg.tensors_dir = value;
      else throw Error("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw Error("config line " + std::to_string(line_no) + ": bad value for " + key);
    }
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open config " + path);
  return parse_experiment_config(is);
}

// FNV-1a over a canonical rendering of the settings; embedded in reports so a
// result can be traced back to its exact configuration.
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << cfg.workload.universe << '|' << cfg.workload.nodes << '|' << cfg.workload.density << '|'
     << cfg.workload.omega << '|' << cfg.workload.hot_fraction << '|' << cfg.workload.hot_mass
     << '|' << cfg.workload.seed << '|';
  for (const auto& s : cfg.schemes) os << s << ',';
  os << '|';
  for (uint32_t n : cfg.n_list) os << n << ',';
  os << '|' << cfg.bandwidth << '|' << cfg.trials << '|' << cfg.hash_depth << '|'
     << cfg.r1_multiplier << '|' << cfg.r2_ratio << '|' << cfg.block_size;
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : os.str()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Balanced Parallelism with the documented recovery: on SerialOverflow the
// run is retried with a doubled serial region.
inline SyncOutcome run_bp_with_retry(const std::vector<SparseTensor>& inputs, double bandwidth,
                                     HashParams params, const HashUniverseTable* table = nullptr,
                                     int max_retries = 4) {
  for (int attempt = 0;; ++attempt) {
    SimNet net(static_cast<uint32_t>(inputs.size()), bandwidth);
    try {
      return run_balanced_parallelism(inputs, net, params, table);
    } catch (const SerialOverflow&) {
      if (attempt >= max_retries) throw;
      params.r2_ratio *= 2.0;
    }
  }
}

struct ExperimentRow {
  std::string scheme;
  uint32_t n = 0;
  uint32_t trial = 0;
  uint64_t universe = 0;
  double density = 0.0;
  double omega = 0.0;
  double simulated_time = 0.0;
  uint64_t total_bits = 0;
  uint64_t index_bits = 0;
  uint64_t value_bits = 0;
  std::optional<BalanceDetails> balance;
  bool oracle_ok = false;
  double normalized_to_allreduce = 0.0;
  std::string error;
};

// Dense ring allreduce time in the simulator's bit units, the normalization
// baseline for every row.
inline double allreduce_dense_time_bits(uint32_t n, uint64_t universe, double bandwidth) {
  CostInputs c;
  c.n = n;
  c.universe = static_cast<double>(universe);
  c.d = 1.0;
  c.b = bandwidth / 32.0;  // element bandwidth
  c.gamma[1] = 1.0;
  return t_allreduce_dense(c);
}

inline std::vector<SparseTensor> load_trial_tensors(const std::string& dir, uint32_t trial,
                                                    uint32_t n) {
  std::vector<SparseTensor> tensors;
  tensors.reserve(n);
  for (uint32_t node = 0; node < n; ++node) {
    tensors.push_back(read_sparse_file(dir + "/tensors_t" + std::to_string(trial) + "_n" +
                                       std::to_string(node) + ".zspt"));
  }
  return tensors;
}

inline std::string tensor_file_name(uint32_t trial, uint32_t node) {
  return "tensors_t" + std::to_string(trial) + "_n" + std::to_string(node) + ".zspt";
}

// Runs every (scheme, n, trial) cell. A failing cell records its error and the
// sweep continues. When `profiles` is given, the trial-0 workload of each n is
// measured into it for later reuse with the scheme selector.
inline std::vector<ExperimentRow> run_experiment(
    const ExperimentConfig& cfg, std::map<uint32_t, SparsityProfile>* profiles = nullptr) {
  std::vector<ExperimentRow> rows;
  bool need_bp = false;
  for (const auto& s : cfg.schemes) need_bp = need_bp || s == "balanced-parallelism";
  for (uint32_t n : cfg.n_list) {
    // one universe table per n, built from the first trial's tensors; h0 is a
    // property of the system, not the trial
    std::optional<HashUniverseTable> table;

    for (uint32_t trial = 0; trial < cfg.trials; ++trial) {
      std::vector<SparseTensor> inputs;
      WorkloadSpec spec = cfg.workload;
      spec.nodes = n;
      spec.seed = detail::derive_seed(cfg.workload.seed, uint64_t(n) * 100000 + trial);
      try {
        inputs = cfg.tensors_dir.empty() ? generate(spec)
                                         : load_trial_tensors(cfg.tensors_dir, trial, n);
      } catch (const Error& e) {
        for (const auto& scheme : cfg.schemes) {
          ExperimentRow row;
          row.scheme = scheme;
          row.n = n;
          row.trial = trial;
          row.universe = spec.universe;
          row.density = spec.density;
          row.omega = spec.omega;
          row.error = e.what();
          rows.push_back(row);
        }
        continue;
      }
      const uint64_t universe = inputs.front().universe();  // fixtures may differ from cfg
      if (need_bp && (!table || table->universe_size() != universe))
        table.emplace(bp_universe_table(universe, n, cfg.workload.seed));
      const SparseTensor oracle = aggregate(inputs);
      if (profiles != nullptr && trial == 0) {
        try {
          (*profiles)[n] = profile_sparsity({inputs});
        } catch (const Error&) {
          // profiles are best-effort; an unmeasurable workload is not a row failure
        }
      }

      for (const auto& scheme : cfg.schemes) {
        ExperimentRow row;
        row.scheme = scheme;
        row.n = n;
        row.trial = trial;
        row.universe = universe;
        row.density = spec.density;
        row.omega = spec.omega;
        try {
          HashParams hash;
          hash.rehash_depth = cfg.hash_depth;
          hash.r1_multiplier = cfg.r1_multiplier;
          hash.r2_ratio = cfg.r2_ratio;
          hash.lanes = cfg.lanes;
          hash.seed = cfg.workload.seed;

          SyncOutcome out = [&] {
            if (scheme == "balanced-parallelism")
              return run_bp_with_retry(inputs, cfg.bandwidth, hash, &*table);
            SimNet net(n, cfg.bandwidth);
            SchemeConfig sc = scheme_config_from_name(scheme);
            if (sc.format.kind == WireKind::TensorBlock)
              sc.format = WireFormat::tensor_block(cfg.block_size);
            return run_scheme(sc, inputs, net, RunParams{hash});
          }();

          row.simulated_time = out.traffic.simulated_time;
          row.total_bits = out.traffic.total_recv_bits;
          row.index_bits = out.traffic.total_index_bits;
          row.value_bits = out.traffic.total_value_bits;
          row.balance = out.balance;
          row.oracle_ok = true;
          for (const auto& r : out.results) row.oracle_ok = row.oracle_ok && r == oracle;
          row.normalized_to_allreduce =
              out.traffic.simulated_time /
              allreduce_dense_time_bits(n, universe, cfg.bandwidth);
        } catch (const Error& e) {
          row.error = e.what();
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

inline nlohmann::json rows_to_json(const ExperimentConfig& cfg,
                                   const std::vector<ExperimentRow>& rows) {
  nlohmann::json j;
  j["seed"] = cfg.workload.seed;
  j["config_hash"] = config_hash(cfg);
  j["rows"] = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json r = {{"scheme", row.scheme},
                        {"n", row.n},
                        {"trial", row.trial},
                        {"M", row.universe},
                        {"density", row.density},
                        {"omega", row.omega},
                        {"simulated_time", row.simulated_time},
                        {"total_bits", row.total_bits},
                        {"index_bits", row.index_bits},
                        {"value_bits", row.value_bits},
                        {"oracle_ok", row.oracle_ok},
                        {"normalized_to_allreduce", row.normalized_to_allreduce},
                        {"error", row.error}};
    if (row.balance) {
      r["push_imbalance"] = row.balance->push_imbalance;
      r["pull_imbalance"] = row.balance->pull_imbalance;
    }
    j["rows"].push_back(r);
  }
  return j;
}

// Column schema, stable: scheme,n,trial,M,density,omega,simulated_time,
// total_bits,index_bits,value_bits,push_imbalance,pull_imbalance,oracle_ok,
// normalized_to_allreduce,error. Imbalance columns are empty for schemes
// without a partition dimension.
inline std::string rows_to_csv(const std::vector<ExperimentRow>& rows) {
  std::ostringstream os;
  os << "scheme,n,trial,M,density,omega,simulated_time,total_bits,index_bits,value_bits,"
        "push_imbalance,pull_imbalance,oracle_ok,normalized_to_allreduce,error\n";
  for (const auto& row : rows) {
    std::string err = row.error;
    for (auto& c : err)
      if (c == ',' || c == '\n') c = ';';
    os << row.scheme << ',' << row.n << ',' << row.trial << ',' << row.universe << ','
       << row.density << ',' << row.omega << ',' << row.simulated_time << ',' << row.total_bits
       << ',' << row.index_bits << ',' << row.value_bits << ',';
    if (row.balance)
      os << row.balance->push_imbalance << ',' << row.balance->pull_imbalance;
    else
      os << ',';
    os << ',' << (row.oracle_ok ? "true" : "false") << ',' << row.normalized_to_allreduce << ','
       << err << '\n';
  }
  return os.str();
}

// Structural validation mirroring schemas/report.schema.json.
inline void validate_report_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("report must be a json object");
  if (!j.contains("seed") || !j["seed"].is_number_unsigned())
    throw Error("report.seed must be an unsigned integer");
  if (!j.contains("config_hash") || !j["config_hash"].is_string())
    throw Error("report.config_hash must be a string");
  if (!j.contains("rows") || !j["rows"].is_array()) throw Error("report.rows must be an array");
  for (const auto& r : j["rows"]) {
    for (const char* key : {"scheme", "error"})
      if (!r.contains(key) || !r[key].is_string())
        throw Error(std::string("row.") + key + " must be a string");
    for (const char* key : {"n", "trial", "M", "total_bits", "index_bits", "value_bits"})
      if (!r.contains(key) || !r[key].is_number_unsigned())
        throw Error(std::string("row.") + key + " must be an unsigned integer");
    for (const char* key : {"density", "omega", "simulated_time", "normalized_to_allreduce"})
      if (!r.contains(key) || !r[key].is_number())
        throw Error(std::string("row.") + key + " must be a number");
    if (!r.contains("oracle_ok") || !r["oracle_ok"].is_boolean())
      throw Error("row.oracle_ok must be a boolean");
  }
}

struct HashSweepCell {
  double r1_multiplier = 0.0;
  uint32_t rehash_depth = 0;
  double serial_fraction = 0.0;
  std::vector<uint64_t> placed_at_depth;
  uint64_t loss = 0;
  double wall_ms = 0.0;
  bool overflow = false;
};

// Sweeps the hash memory geometry on one generated tensor. The serial region
// is opened wide (r2 = r1) so the serial-write fraction is measured rather
// than censored by overflow; an overflow is still recorded if it happens.
inline std::vector<HashSweepCell> bench_hash(const ExperimentConfig& cfg) {
  WorkloadSpec spec = cfg.workload;
  spec.nodes = 1;
  const SparseTensor t = generate(spec)[0];
  const uint64_t nnz = t.nnz();
  const uint32_t n = cfg.workload.nodes;

  std::vector<HashSweepCell> cells;
  for (double mult : {1.0, 2.0, 4.0}) {
    for (uint32_t k : {1u, 2u, 3u, 4u}) {
      HashSweepCell cell;
      cell.r1_multiplier = mult;
      cell.rehash_depth = k;
      const HashFamily family = HashFamily::make_worker(cfg.workload.seed, 0, n, k);
      const uint64_t r1 = std::max<uint64_t>(1, uint64_t(mult * double(nnz) / double(n)));
      const uint64_t r2 = std::max<uint64_t>(1, r1);
      try {
        const auto t0 = std::chrono::steady_clock::now();
        auto [parts, stats] =
            detail::run_hierarchical_hash(t, n, family, r1, r2, cfg.lanes);
        const auto t1 = std::chrono::steady_clock::now();
        cell.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        cell.serial_fraction = double(stats.serial_writes) / double(nnz);
        cell.placed_at_depth = stats.placed_at_depth;
        cell.loss = nnz - parts.total_nnz();
      } catch (const SerialOverflow&) {
        cell.overflow = true;
      }
      cells.push_back(cell);
    }
  }
  return cells;
}

inline nlohmann::json bench_to_json(const ExperimentConfig& cfg,
                                    const std::vector<HashSweepCell>& cells) {
  nlohmann::json j;
  j["seed"] = cfg.workload.seed;
  j["config_hash"] = config_hash(cfg);
  j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    j["cells"].push_back({{"r1_multiplier", c.r1_multiplier},
                          {"k", c.rehash_depth},
                          {"serial_fraction", c.serial_fraction},
                          {"placed_at_depth", c.placed_at_depth},
                          {"loss", c.loss},
                          {"wall_ms", c.wall_ms},
                          {"overflow", c.overflow}});
  }
  return j;
}

}  // namespace zen
