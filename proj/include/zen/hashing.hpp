#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <thread>
#include <utility>
#include <vector>

#include "zen/errors.hpp"
#include "zen/tensor.hpp"

namespace zen {
namespace detail {

// Seeded 64-bit avalanche mixer (splitmix64 finalizer). Deterministic across
// processes and platforms; seeds select members of the hash family.
inline uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline uint64_t seeded_hash(uint64_t x, uint64_t seed) {
  return mix64(x + 0x9e3779b97f4a7c15ULL * (seed + 1));
}

// Maps a 64-bit hash onto [0, range) using the high bits.
inline uint64_t map_to_range(uint64_t h, uint64_t range) {
  return static_cast<uint64_t>((static_cast<__uint128_t>(h) * range) >> 64);
}

// Derives independent sub-seeds from one master seed.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return mix64(master ^ mix64(stream + 0x5851f42d4c957f2dULL));
}

}  // namespace detail

// A first-level hash h0 that assigns indices to partitions, plus k slot-level
// hashes h1..hk. Indices are shifted by +1 before hashing so slot value 0 can
// mean "empty".
struct HashFamily {
  uint64_t partition_seed = 0;
  std::vector<uint64_t> slot_seeds;
  uint32_t partitions = 1;

  static HashFamily make(uint64_t seed, uint32_t n, uint32_t k) {
    if (n == 0) throw Error("hash family needs at least one partition");
    if (k == 0) throw Error("hash family needs at least one slot hash");
    HashFamily f;
    f.partitions = n;
    f.partition_seed = detail::derive_seed(seed, 0);
    f.slot_seeds.resize(k);
    for (uint32_t i = 0; i < k; ++i) f.slot_seeds[i] = detail::derive_seed(seed, 1 + i);
    return f;
  }

  // Same h0 on every worker, worker-specific h1..hk. Sharing h0 is what keeps
  // an index on the same server across workers.
  static HashFamily make_worker(uint64_t shared_seed, uint32_t worker, uint32_t n, uint32_t k) {
    HashFamily f = make(shared_seed, n, k);
    for (uint32_t i = 0; i < k; ++i)
      f.slot_seeds[i] = detail::derive_seed(shared_seed, (uint64_t(worker) + 2) * 1024 + i);
    return f;
  }

  uint32_t depth() const { return static_cast<uint32_t>(slot_seeds.size()); }

  uint32_t partition_of(uint64_t index) const {
    return static_cast<uint32_t>(
        detail::map_to_range(detail::seeded_hash(index + 1, partition_seed), partitions));
  }

  // round is 1-based, matching the rehash sequence h1, h2, ...
  uint64_t slot_of(uint64_t index, uint32_t round, uint64_t r1) const {
    return detail::map_to_range(detail::seeded_hash(index + 1, slot_seeds[round - 1]), r1);
  }
};

// Standalone h0, used wherever only partition assignment matters.
inline uint32_t partition_of(uint64_t index, uint64_t partition_seed, uint32_t n) {
  return static_cast<uint32_t>(
      detail::map_to_range(detail::seeded_hash(index + 1, partition_seed), n));
}

// One sparse tensor per server; parts are index-disjoint and their union is
// the input index set.
struct PartitionedSparseTensor {
  std::vector<SparseTensor> parts;

  uint64_t total_nnz() const {
    uint64_t s = 0;
    for (const auto& p : parts) s += p.nnz();
    return s;
  }
};

// Where indices landed: how many succeeded at each rehash depth and how many
// fell through to the serial region.
struct CollisionStats {
  uint64_t serial_writes = 0;
  std::vector<uint64_t> placed_at_depth;  // placed_at_depth[i] = count placed by h_{i+1}

  uint64_t total() const {
    uint64_t s = serial_writes;
    for (uint64_t c : placed_at_depth) s += c;
    return s;
  }
};

namespace detail {

// n partitions of r1 parallel slots plus r2 serial slots each. Slots hold
// shifted indices (0 = empty). Claims go through compare-exchange; the serial
// cursor is a fetch-add. Values ride in a plain array because a slot has
// exactly one writer after its claim succeeds.
struct HashMemory {
  uint32_t n;
  uint64_t r1, r2, stride;
  std::unique_ptr<std::atomic<uint64_t>[]> slots;
  std::unique_ptr<float[]> values;
  std::unique_ptr<std::atomic<uint64_t>[]> cursors;

  HashMemory(uint32_t n_, uint64_t r1_, uint64_t r2_)
      : n(n_), r1(r1_), r2(r2_), stride(r1_ + r2_) {
    slots = std::make_unique<std::atomic<uint64_t>[]>(n * stride);
    values = std::make_unique<float[]>(n * stride);
    cursors = std::make_unique<std::atomic<uint64_t>[]>(n);
    for (uint64_t i = 0; i < uint64_t(n) * stride; ++i)
      slots[i].store(0, std::memory_order_relaxed);
    for (uint32_t p = 0; p < n; ++p) cursors[p].store(r1, std::memory_order_relaxed);
  }

  bool try_claim(uint64_t cell, uint64_t shifted, float value) {
    uint64_t expected = 0;
    if (slots[cell].compare_exchange_strong(expected, shifted, std::memory_order_relaxed)) {
      values[cell] = value;
      return true;
    }
    return false;
  }
};

struct LaneStats {
  uint64_t serial = 0;
  std::vector<uint64_t> at_depth;
};

// Places one index. Returns the depth it was placed at, or 0 for a serial or
// fallback placement. Sets overflow when the partition is truly full.
inline uint32_t place_index(HashMemory& mem, const HashFamily& family, uint64_t index, float value,
                            std::atomic<int64_t>& overflow) {
  const uint64_t shifted = index + 1;
  const uint32_t p = family.partition_of(index);
  const uint64_t base = uint64_t(p) * mem.stride;
  for (uint32_t round = 1; round <= family.depth(); ++round) {
    const uint64_t q = family.slot_of(index, round, mem.r1);
    if (mem.try_claim(base + q, shifted, value)) return round;
  }
  const uint64_t q = mem.cursors[p].fetch_add(1, std::memory_order_relaxed);
  if (q < mem.stride) {
    mem.slots[base + q].store(shifted, std::memory_order_relaxed);
    mem.values[base + q] = value;
    return 0;
  }
  // Serial region exhausted. As long as the partition has capacity for its
  // load (r1 + r2 >= partition size) some parallel slot must still be free,
  // so scan for it instead of dropping the index.
  for (uint64_t s = 0; s < mem.r1; ++s) {
    if (mem.try_claim(base + s, shifted, value)) return 0;
  }
  int64_t none = -1;
  overflow.compare_exchange_strong(none, int64_t(p), std::memory_order_relaxed);
  return 0;
}

inline std::pair<PartitionedSparseTensor, CollisionStats> run_hierarchical_hash(
    const SparseTensor& t, uint32_t n, const HashFamily& family, uint64_t r1, uint64_t r2,
    uint32_t lanes) {
  if (n == 0) throw Error("hierarchical hash needs at least one partition");
  if (family.partitions != n) throw Error("hash family partition count mismatch");
  if (r1 < 1) throw Error("parallel region must have at least one slot");
  if (lanes < 1) throw Error("lane count must be at least 1");

  HashMemory mem(n, r1, r2);
  std::atomic<int64_t> overflow{-1};
  const auto& idx = t.indices();
  const auto& val = t.values();
  const size_t count = idx.size();
  const uint32_t k = family.depth();

  std::vector<LaneStats> stats(lanes);
  for (auto& s : stats) s.at_depth.assign(k, 0);

  auto work = [&](uint32_t lane) {
    const size_t lo = count * lane / lanes;
    const size_t hi = count * (lane + 1) / lanes;
    LaneStats& ls = stats[lane];
    for (size_t i = lo; i < hi; ++i) {
      const uint32_t depth = place_index(mem, family, idx[i], val[i], overflow);
      if (depth == 0)
        ++ls.serial;
      else
        ++ls.at_depth[depth - 1];
    }
  };

  if (lanes == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(lanes);
    for (uint32_t lane = 0; lane < lanes; ++lane) threads.emplace_back(work, lane);
    for (auto& th : threads) th.join();
  }

  const int64_t overflowed = overflow.load(std::memory_order_relaxed);
  if (overflowed >= 0) throw SerialOverflow(static_cast<uint32_t>(overflowed));

  CollisionStats total;
  total.placed_at_depth.assign(k, 0);
  for (const auto& s : stats) {
    total.serial_writes += s.serial;
    for (uint32_t d = 0; d < k; ++d) total.placed_at_depth[d] += s.at_depth[d];
  }

  PartitionedSparseTensor out;
  out.parts.reserve(n);
  for (uint32_t p = 0; p < n; ++p) {
    const uint64_t base = uint64_t(p) * mem.stride;
    std::vector<std::pair<uint64_t, float>> pairs;
    for (uint64_t s = 0; s < mem.stride; ++s) {
      const uint64_t shifted = mem.slots[base + s].load(std::memory_order_relaxed);
      if (shifted != 0) pairs.emplace_back(shifted - 1, mem.values[base + s]);
    }
    out.parts.push_back(SparseTensor::from_pairs(t.universe(), std::move(pairs)));
  }
  return {std::move(out), std::move(total)};
}

}  // namespace detail

// Two-level hashing with rehashing and a serial overflow region. Every input
// index ends up in exactly one partition, the partition of an index is h0's
// choice on every worker that shares h0, and the result as a set does not
// depend on the lane count.
inline PartitionedSparseTensor hierarchical_hash(const SparseTensor& t, uint32_t n,
                                                 const HashFamily& family, uint64_t r1,
                                                 uint64_t r2, uint32_t lanes = 1) {
  return detail::run_hierarchical_hash(t, n, family, r1, r2, lanes).first;
}

// Single-threaded instrumentation run: counts placements per rehash depth and
// serial writes. The sum over all buckets equals the input size.
inline CollisionStats collision_stats(const SparseTensor& t, uint32_t n, const HashFamily& family,
                                      uint64_t r1, uint64_t r2) {
  return detail::run_hierarchical_hash(t, n, family, r1, r2, 1).second;
}

// Single-function last-writer-wins hashing into n*r cells. Collisions lose
// data; the loss count is returned, not raised. Baseline only.
inline std::pair<PartitionedSparseTensor, uint64_t> strawman_hash(const SparseTensor& t,
                                                                  uint32_t n, uint64_t r,
                                                                  uint64_t seed) {
  if (n == 0 || r == 0) throw Error("strawman hash needs n >= 1 and r >= 1");
  const uint64_t cells = uint64_t(n) * r;
  std::vector<uint64_t> slots(cells, 0);
  std::vector<float> values(cells, 0.0f);
  const uint64_t h_seed = detail::derive_seed(seed, 77);
  for (size_t i = 0; i < t.indices().size(); ++i) {
    const uint64_t idx = t.indices()[i];
    const uint64_t h = detail::map_to_range(detail::seeded_hash(idx + 1, h_seed), cells);
    slots[h] = idx + 1;
    values[h] = t.values()[i];
  }
  PartitionedSparseTensor out;
  out.parts.reserve(n);
  uint64_t kept = 0;
  for (uint32_t p = 0; p < n; ++p) {
    std::vector<std::pair<uint64_t, float>> pairs;
    for (uint64_t q = 0; q < r; ++q) {
      const uint64_t shifted = slots[uint64_t(p) * r + q];
      if (shifted != 0) pairs.emplace_back(shifted - 1, values[uint64_t(p) * r + q]);
    }
    kept += pairs.size();
    out.parts.push_back(SparseTensor::from_pairs(t.universe(), std::move(pairs)));
  }
  return {std::move(out), t.nnz() - kept};
}

// max over workers i and partitions j of n * |I_i^j| / |I_i|.
inline double imbalance_push(const std::vector<PartitionedSparseTensor>& per_worker) {
  if (per_worker.empty()) throw Error("imbalance requires at least one worker");
  double worst = 0.0;
  for (const auto& worker : per_worker) {
    const uint64_t total = worker.total_nnz();
    if (total == 0) throw EmptyTensor("imbalance undefined for a worker with no gradients");
    const double n = static_cast<double>(worker.parts.size());
    for (const auto& part : worker.parts) {
      worst = std::max(worst, n * static_cast<double>(part.nnz()) / static_cast<double>(total));
    }
  }
  return worst;
}

// max over servers i of n * |server load i| / |union|.
inline double imbalance_pull(const std::vector<uint64_t>& server_loads, uint64_t union_size) {
  if (server_loads.empty()) throw Error("imbalance requires at least one server");
  if (union_size == 0) throw EmptyTensor("imbalance undefined for an empty union");
  const double n = static_cast<double>(server_loads.size());
  double worst = 0.0;
  for (uint64_t load : server_loads) {
    worst = std::max(worst, n * static_cast<double>(load) / static_cast<double>(union_size));
  }
  return worst;
}

}  // namespace zen
