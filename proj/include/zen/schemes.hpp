#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "zen/codec.hpp"
#include "zen/errors.hpp"
#include "zen/hashing.hpp"
#include "zen/simnet.hpp"
#include "zen/tensor.hpp"

namespace zen {

enum class CommPattern { Ring, Hierarchy, PointToPoint };
enum class Aggregation { Incremental, OneShot };
enum class PartitionPattern { Centralization, Parallelism };
enum class BalancePattern { Balanced, Imbalanced, NotApplicable };

// One point in the four-dimension design space, plus the wire format.
struct SchemeConfig {
  CommPattern communication = CommPattern::PointToPoint;
  Aggregation aggregation = Aggregation::OneShot;
  PartitionPattern partition = PartitionPattern::Centralization;
  BalancePattern balance = BalancePattern::NotApplicable;
  WireFormat format = WireFormat::coo();

  void validate() const {
    const bool centralized = partition == PartitionPattern::Centralization;
    if (centralized != (balance == BalancePattern::NotApplicable))
      throw UnsupportedCombination(
          "the balance dimension applies exactly when the partition pattern is Parallelism");
  }
};

struct BalanceDetails {
  double push_imbalance = 1.0;
  double pull_imbalance = 1.0;
};

// What a scheme run produced: one result per node (all equal as sets), the
// traffic ledger, and balance measurements where partitioning applies.
struct SyncOutcome {
  std::vector<SparseTensor> results;
  TrafficReport traffic;
  std::optional<BalanceDetails> balance;
};

struct HashParams {
  uint32_t rehash_depth = 3;   // k
  double r1_multiplier = 2.0;  // r1 = r1_multiplier * nnz / n per partition
  double r2_ratio = 0.1;       // r2 = r2_ratio * r1
  uint32_t lanes = 1;
  uint64_t seed = 1;
};

namespace detail {

inline void check_inputs(const std::vector<SparseTensor>& inputs, const SimNet& net) {
  if (inputs.size() < 2) throw Error("synchronization needs at least two nodes");
  if (inputs.size() != net.nodes()) throw Error("input count must match the network size");
  for (const auto& t : inputs)
    if (t.universe() != inputs.front().universe()) throw UniverseMismatch();
}

inline void check_power_of_two(size_t n) {
  if (n == 0 || (n & (n - 1)) != 0) throw NonPowerOfTwo();
}

// Accounting-only message: exact wire sizes, no payload bytes. Byte-level
// encode/decode equivalence is covered by the codec round-trip properties.
inline EncodedMessage sized_message(const SparseTensor& t, const WireFormat& fmt,
                                    const HashUniverse* universe = nullptr) {
  const MessageSizes sizes = message_sizes(t, fmt, universe);
  EncodedMessage msg;
  msg.format = fmt;
  msg.universe_size = t.universe();
  msg.count = t.nnz();
  msg.index_bits = sizes.index_bits;
  msg.value_bits = sizes.value_bits;
  return msg;
}

// Merges index-disjoint sorted tensors into one sorted tensor.
inline SparseTensor merge_disjoint(const std::vector<const SparseTensor*>& parts,
                                   uint64_t universe) {
  using Head = std::pair<uint64_t, uint32_t>;  // next index, part id
  std::priority_queue<Head, std::vector<Head>, std::greater<>> heads;
  std::vector<size_t> cursor(parts.size(), 0);
  uint64_t total = 0;
  for (uint32_t p = 0; p < parts.size(); ++p) {
    total += parts[p]->nnz();
    if (!parts[p]->empty()) heads.push({parts[p]->indices()[0], p});
  }
  std::vector<uint64_t> idx;
  std::vector<float> val;
  idx.reserve(total);
  val.reserve(total);
  while (!heads.empty()) {
    auto [index, p] = heads.top();
    heads.pop();
    idx.push_back(index);
    val.push_back(parts[p]->values()[cursor[p]]);
    if (++cursor[p] < parts[p]->nnz()) heads.push({parts[p]->indices()[cursor[p]], p});
  }
  return SparseTensor(universe, std::move(idx), std::move(val));
}

}  // namespace detail

// Allgather of whole COO tensors; nothing is aggregated until every tensor has
// arrived, so received traffic grows linearly with the node count.
inline SyncOutcome run_agsparse(const std::vector<SparseTensor>& inputs, SimNet& net,
                                CommPattern pattern = CommPattern::PointToPoint,
                                WireFormat fmt = WireFormat::coo()) {
  detail::check_inputs(inputs, net);
  const uint32_t n = static_cast<uint32_t>(inputs.size());

  switch (pattern) {
    case CommPattern::PointToPoint: {
      for (uint32_t w = 0; w < n; ++w)
        for (uint32_t to = 0; to < n; ++to)
          if (to != w) net.send(0, w, to, detail::sized_message(inputs[w], fmt));
      break;
    }
    case CommPattern::Ring: {
      detail::check_power_of_two(n);
      // Stage s forwards the tensor that originated s hops back.
      for (uint32_t s = 0; s < n - 1; ++s) {
        for (uint32_t w = 0; w < n; ++w) {
          const uint32_t origin = (w + n - s) % n;
          net.send(s, w, (w + 1) % n, detail::sized_message(inputs[origin], fmt));
        }
      }
      break;
    }
    case CommPattern::Hierarchy: {
      detail::check_power_of_two(n);
      std::vector<std::vector<uint32_t>> holdings(n);
      for (uint32_t w = 0; w < n; ++w) holdings[w] = {w};
      for (uint32_t bit = 1; bit < n; bit <<= 1) {
        const uint32_t stage = static_cast<uint32_t>(std::countr_zero(bit));
        auto previous = holdings;
        for (uint32_t w = 0; w < n; ++w) {
          const uint32_t partner = w ^ bit;
          for (uint32_t id : previous[w])
            net.send(stage, w, partner, detail::sized_message(inputs[id], fmt));
          holdings[w].insert(holdings[w].end(), previous[partner].begin(),
                             previous[partner].end());
        }
      }
      break;
    }
  }

  // One-shot aggregation after the final stage; every node folds the same set.
  SparseTensor result = aggregate(inputs);
  SyncOutcome out;
  out.results.assign(n, result);
  out.traffic = net.finalize();
  return out;
}

// Recursive doubling with aggregation at every stage. Stage i exchanges
// aggregates of 2^(i-1) tensors, so its traffic follows the densification
// ratio at that group size.
inline SyncOutcome run_hier_centralization(const std::vector<SparseTensor>& inputs, SimNet& net,
                                           WireFormat fmt = WireFormat::coo()) {
  detail::check_inputs(inputs, net);
  detail::check_power_of_two(inputs.size());
  const uint32_t n = static_cast<uint32_t>(inputs.size());

  std::vector<SparseTensor> states = inputs;
  for (uint32_t bit = 1; bit < n; bit <<= 1) {
    const uint32_t stage = static_cast<uint32_t>(std::countr_zero(bit));
    for (uint32_t w = 0; w < n; ++w)
      net.send(stage, w, w ^ bit, detail::sized_message(states[w], fmt));
    std::vector<SparseTensor> next(n);
    for (uint32_t w = 0; w < n; ++w) next[w] = merge_sum(states[w], states[w ^ bit]);
    states = std::move(next);
  }

  SyncOutcome out;
  out.results = std::move(states);
  out.traffic = net.finalize();
  return out;
}

// Ring with incremental aggregation: each node forwards a running aggregate
// that covers one more tensor per stage.
inline SyncOutcome run_ring_centralization(const std::vector<SparseTensor>& inputs, SimNet& net,
                                           WireFormat fmt = WireFormat::coo()) {
  detail::check_inputs(inputs, net);
  detail::check_power_of_two(inputs.size());
  const uint32_t n = static_cast<uint32_t>(inputs.size());

  std::vector<SparseTensor> tokens = inputs;
  for (uint32_t s = 0; s + 1 < n; ++s) {
    for (uint32_t w = 0; w < n; ++w)
      net.send(s, w, (w + 1) % n, detail::sized_message(tokens[w], fmt));
    std::vector<SparseTensor> next(n);
    for (uint32_t w = 0; w < n; ++w)
      next[w] = merge_sum(tokens[(w + n - 1) % n], inputs[w]);
    tokens = std::move(next);
  }

  SyncOutcome out;
  out.results = std::move(tokens);
  out.traffic = net.finalize();
  return out;
}

// Even contiguous partitioning with block transport. The aggregator owning a
// hot range receives proportionally more traffic; that skew is the point of
// measuring this scheme.
inline SyncOutcome run_omnireduce_like(const std::vector<SparseTensor>& inputs, SimNet& net,
                                       uint32_t block_size = 256) {
  detail::check_inputs(inputs, net);
  if (block_size < 1) throw Error("block size must be at least 1");
  const uint32_t n = static_cast<uint32_t>(inputs.size());
  const uint64_t m = inputs.front().universe();
  const uint64_t range = (m + n - 1) / n;

  // Slice every worker's tensor by owning range.
  std::vector<std::vector<SparseTensor>> slices(n);
  for (uint32_t w = 0; w < n; ++w) {
    std::vector<std::vector<std::pair<uint64_t, float>>> bucket(n);
    for (size_t i = 0; i < inputs[w].nnz(); ++i) {
      const uint64_t idx = inputs[w].indices()[i];
      bucket[idx / range].emplace_back(idx, inputs[w].values()[i]);
    }
    slices[w].reserve(n);
    for (uint32_t p = 0; p < n; ++p)
      slices[w].push_back(SparseTensor::from_pairs(m, std::move(bucket[p])));
  }

  // Blocks are laid out from the start of each range.
  auto block_sizes = [&](const SparseTensor& slice, uint32_t p) {
    const uint64_t lo = uint64_t(p) * range;
    const uint64_t hi = std::min(m, lo + range);
    MessageSizes sizes;
    uint64_t current_block = UINT64_MAX;
    for (uint64_t idx : slice.indices()) {
      const uint64_t block = (idx - lo) / block_size;
      if (block != current_block) {
        current_block = block;
        const uint64_t begin = lo + block * uint64_t(block_size);
        sizes.index_bits += 64;
        sizes.value_bits += 32 * std::min<uint64_t>(block_size, hi - begin);
      }
    }
    return sizes;
  };

  // Push: non-zero blocks of each range go to the range's aggregator.
  for (uint32_t w = 0; w < n; ++w) {
    for (uint32_t p = 0; p < n; ++p) {
      if (p == w || slices[w][p].empty()) continue;
      EncodedMessage msg;
      msg.format = WireFormat::tensor_block(block_size);
      msg.universe_size = m;
      const MessageSizes sizes = block_sizes(slices[w][p], p);
      msg.count = sizes.index_bits / 64;
      msg.index_bits = sizes.index_bits;
      msg.value_bits = sizes.value_bits;
      net.send(0, w, p, msg);
    }
  }

  // Aggregate per range, then broadcast the non-zero blocks back.
  std::vector<SparseTensor> aggregated(n);
  for (uint32_t p = 0; p < n; ++p) {
    SparseTensor acc = slices[0][p];
    for (uint32_t w = 1; w < n; ++w) acc = merge_sum(acc, slices[w][p]);
    aggregated[p] = std::move(acc);
  }
  for (uint32_t p = 0; p < n; ++p) {
    if (aggregated[p].empty()) continue;
    const MessageSizes sizes = block_sizes(aggregated[p], p);
    for (uint32_t w = 0; w < n; ++w) {
      if (w == p) continue;
      EncodedMessage msg;
      msg.format = WireFormat::tensor_block(block_size);
      msg.universe_size = m;
      msg.count = sizes.index_bits / 64;
      msg.index_bits = sizes.index_bits;
      msg.value_bits = sizes.value_bits;
      net.send(1, p, w, msg);
    }
  }

  // Block decoding strips entries whose aggregated value is exactly zero.
  std::vector<std::pair<uint64_t, float>> survivors;
  for (uint32_t p = 0; p < n; ++p)
    for (size_t i = 0; i < aggregated[p].nnz(); ++i)
      if (aggregated[p].values()[i] != 0.0f)
        survivors.emplace_back(aggregated[p].indices()[i], aggregated[p].values()[i]);
  SparseTensor result = SparseTensor::from_pairs(m, std::move(survivors));

  std::optional<BalanceDetails> balance;
  bool all_loaded = true;
  for (const auto& t : inputs) all_loaded = all_loaded && !t.empty();
  if (all_loaded) {
    balance.emplace();
    std::vector<PartitionedSparseTensor> parted(n);
    for (uint32_t w = 0; w < n; ++w) parted[w].parts = std::move(slices[w]);
    balance->push_imbalance = imbalance_push(parted);
    std::vector<uint64_t> loads(n);
    uint64_t union_size = 0;
    for (uint32_t p = 0; p < n; ++p) {
      loads[p] = aggregated[p].nnz();
      union_size += loads[p];
    }
    balance->pull_imbalance = imbalance_pull(loads, union_size);
  }

  SyncOutcome out;
  out.results.assign(n, result);
  out.traffic = net.finalize();
  out.balance = balance;
  return out;
}

// The universe table matching a balanced-parallelism run with this seed.
// Build it once when running many configurations that share (M, n, seed).
inline HashUniverseTable bp_universe_table(uint64_t universe_size, uint32_t servers,
                                           uint64_t seed) {
  return HashUniverseTable(universe_size, servers, detail::derive_seed(seed, 0));
}

// Push: every worker partitions its tensor with the hierarchical hash and
// sends partition j to server j as COO. Pull: every server returns its
// aggregated partition as a hash bitmap over its index universe. The pull leg
// runs through the real encoder and decoder.
inline SyncOutcome run_balanced_parallelism(const std::vector<SparseTensor>& inputs, SimNet& net,
                                            const HashParams& params = {},
                                            const HashUniverseTable* table = nullptr) {
  detail::check_inputs(inputs, net);
  const uint32_t n = static_cast<uint32_t>(inputs.size());
  const uint64_t m = inputs.front().universe();

  std::unique_ptr<HashUniverseTable> local_table;
  const uint64_t partition_seed = detail::derive_seed(params.seed, 0);
  if (table == nullptr) {
    local_table = std::make_unique<HashUniverseTable>(m, n, partition_seed);
    table = local_table.get();
  } else {
    if (table->universe_size() != m || table->servers() != n ||
        table->partition_seed() != partition_seed)
      throw Error("hash universe table does not match this run");
  }

  // Push: consistent h0 everywhere, worker-private h1..hk.
  std::vector<PartitionedSparseTensor> parted(n);
  for (uint32_t w = 0; w < n; ++w) {
    const HashFamily family = HashFamily::make_worker(params.seed, w, n, params.rehash_depth);
    const uint64_t nnz = inputs[w].nnz();
    const uint64_t r1 = std::max<uint64_t>(
        1, static_cast<uint64_t>(std::ceil(params.r1_multiplier * double(nnz) / double(n))));
    const uint64_t r2 = std::max<uint64_t>(
        1, static_cast<uint64_t>(std::ceil(params.r2_ratio * double(r1))));
    parted[w] = hierarchical_hash(inputs[w], n, family, r1, r2, params.lanes);
    for (uint32_t server = 0; server < n; ++server) {
      if (server == w || parted[w].parts[server].empty()) continue;
      net.send(0, w, server, detail::sized_message(parted[w].parts[server], WireFormat::coo()));
    }
  }

  std::vector<SparseTensor> aggregated(n);
  for (uint32_t server = 0; server < n; ++server) {
    SparseTensor acc = parted[0].parts[server];
    for (uint32_t w = 1; w < n; ++w) acc = merge_sum(acc, parted[w].parts[server]);
    aggregated[server] = std::move(acc);
  }

  // Pull: hash bitmaps through the real codec.
  std::vector<SparseTensor> decoded(n);
  for (uint32_t server = 0; server < n; ++server) {
    const HashUniverse& universe = table->universe(server);
    EncodedMessage msg = encode(aggregated[server], WireFormat::hash_bitmap(), &universe);
    for (uint32_t w = 0; w < n; ++w)
      if (w != server) net.send(1, server, w, msg);
    decoded[server] = decode(msg, &universe);
  }

  std::vector<const SparseTensor*> parts;
  parts.reserve(n);
  for (const auto& t : decoded) parts.push_back(&t);
  SparseTensor result = detail::merge_disjoint(parts, m);

  std::optional<BalanceDetails> balance;
  bool all_loaded = true;
  for (const auto& t : inputs) all_loaded = all_loaded && !t.empty();
  if (all_loaded) {
    balance.emplace();
    balance->push_imbalance = imbalance_push(parted);
    std::vector<uint64_t> loads(n);
    uint64_t union_size = 0;
    for (uint32_t server = 0; server < n; ++server) {
      loads[server] = aggregated[server].nnz();
      union_size += loads[server];
    }
    balance->pull_imbalance = imbalance_pull(loads, union_size);
  }

  SyncOutcome out;
  out.results.assign(n, result);
  out.traffic = net.finalize();
  out.balance = balance;
  return out;
}

struct RunParams {
  HashParams hash;
};

// Dispatch over the design space; combinations outside the implemented rows
// are rejected.
inline SyncOutcome run_scheme(const SchemeConfig& cfg, const std::vector<SparseTensor>& inputs,
                              SimNet& net, const RunParams& params = {}) {
  cfg.validate();
  if (cfg.partition == PartitionPattern::Centralization) {
    if (cfg.aggregation == Aggregation::OneShot)
      return run_agsparse(inputs, net, cfg.communication, cfg.format);
    if (cfg.communication == CommPattern::Hierarchy)
      return run_hier_centralization(inputs, net, cfg.format);
    if (cfg.communication == CommPattern::Ring)
      return run_ring_centralization(inputs, net, cfg.format);
    throw UnsupportedCombination("point-to-point incremental centralization is not implemented");
  }
  if (cfg.communication == CommPattern::PointToPoint) {
    if (cfg.aggregation == Aggregation::OneShot && cfg.balance == BalancePattern::Imbalanced &&
        cfg.format.kind == WireKind::TensorBlock)
      return run_omnireduce_like(inputs, net, cfg.format.block_size);
    if (cfg.aggregation == Aggregation::Incremental && cfg.balance == BalancePattern::Balanced)
      return run_balanced_parallelism(inputs, net, params.hash);
  }
  throw UnsupportedCombination("no implemented scheme matches this configuration");
}

// Table-row names addressable from the command line.
inline SchemeConfig scheme_config_from_name(const std::string& name) {
  if (name == "agsparse")
    return {CommPattern::PointToPoint, Aggregation::OneShot, PartitionPattern::Centralization,
            BalancePattern::NotApplicable, WireFormat::coo()};
  if (name == "sparcml")
    return {CommPattern::Hierarchy, Aggregation::Incremental, PartitionPattern::Centralization,
            BalancePattern::NotApplicable, WireFormat::coo()};
  if (name == "ring-centralization")
    return {CommPattern::Ring, Aggregation::Incremental, PartitionPattern::Centralization,
            BalancePattern::NotApplicable, WireFormat::coo()};
  if (name == "omnireduce")
    return {CommPattern::PointToPoint, Aggregation::OneShot, PartitionPattern::Parallelism,
            BalancePattern::Imbalanced, WireFormat::tensor_block()};
  if (name == "balanced-parallelism")
    return {CommPattern::PointToPoint, Aggregation::Incremental, PartitionPattern::Parallelism,
            BalancePattern::Balanced, WireFormat::hash_bitmap()};
  throw UnsupportedCombination("unknown scheme name: " + name);
}

inline const std::vector<std::string>& known_scheme_names() {
  static const std::vector<std::string> names = {
      "agsparse", "sparcml", "ring-centralization", "omnireduce", "balanced-parallelism"};
  return names;
}

}  // namespace zen
