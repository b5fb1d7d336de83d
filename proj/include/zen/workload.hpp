#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "zen/errors.hpp"
#include "zen/hashing.hpp"
#include "zen/tensor.hpp"

namespace zen {

// Synthetic workload knobs: per-node density d, target pairwise overlap omega
// realized through a shared core, and a two-tier hot/cold index distribution
// (hot_mass of the draws land in the first hot_fraction*M indices).
struct WorkloadSpec {
  uint64_t universe = 0;   // M
  uint32_t nodes = 1;      // n
  double density = 0.0;    // d, per-node
  double omega = 0.0;      // target pairwise overlap in [0,1]
  double hot_fraction = 0.125;
  double hot_mass = 0.125;
  uint64_t seed = 0;

  uint64_t nnz_per_node() const {
    return static_cast<uint64_t>(std::ceil(density * static_cast<double>(universe)));
  }

  void validate() const {
    if (universe < 1) throw InfeasibleSpec("universe must be at least 1");
    if (nodes < 1) throw InfeasibleSpec("node count must be at least 1");
    if (!(density > 0.0 && density <= 1.0)) throw InfeasibleSpec("density must be in (0,1]");
    if (density * static_cast<double>(universe) < 1.0)
      throw InfeasibleSpec("density*universe must be at least 1");
    if (omega < 0.0 || omega > 1.0) throw InfeasibleSpec("omega must be in [0,1]");
    if (!(hot_fraction > 0.0 && hot_fraction <= 1.0))
      throw InfeasibleSpec("hot_fraction must be in (0,1]");
    if (hot_mass < 0.0 || hot_mass > 1.0) throw InfeasibleSpec("hot_mass must be in [0,1]");
    const double demand = density * static_cast<double>(universe) *
                          (1.0 + static_cast<double>(nodes) * (1.0 - omega));
    if (demand > static_cast<double>(universe))
      throw InfeasibleSpec("cannot fit disjoint remainders: d*M*(1+n*(1-omega)) > M");
  }
};

namespace detail {

// Draws distinct indices from the hot/cold mixture, skipping anything in
// `used`. Falls back to the other tier when one saturates.
class TwoTierSampler {
 public:
  TwoTierSampler(const WorkloadSpec& spec, std::mt19937_64& rng,
                 std::unordered_set<uint64_t>& used)
      : rng_(rng), used_(used) {
    hot_size_ = std::min<uint64_t>(
        spec.universe, std::max<uint64_t>(1, static_cast<uint64_t>(
                                                 std::llround(spec.hot_fraction *
                                                              static_cast<double>(spec.universe)))));
    cold_size_ = spec.universe - hot_size_;
    hot_mass_ = cold_size_ == 0 ? 1.0 : spec.hot_mass;
    universe_ = spec.universe;
    for (uint64_t idx : used_) {
      if (idx < hot_size_)
        ++hot_used_;
      else
        ++cold_used_;
    }
  }

  uint64_t draw() {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (;;) {
      bool hot = coin(rng_) < hot_mass_;
      if (hot && hot_used_ >= hot_size_) hot = false;
      if (!hot && cold_used_ >= cold_size_) hot = true;
      if (hot && hot_used_ >= hot_size_) throw InfeasibleSpec("index universe exhausted");
      uint64_t idx;
      if (hot) {
        std::uniform_int_distribution<uint64_t> pick(0, hot_size_ - 1);
        idx = pick(rng_);
      } else {
        std::uniform_int_distribution<uint64_t> pick(hot_size_, universe_ - 1);
        idx = pick(rng_);
      }
      if (used_.insert(idx).second) {
        if (idx < hot_size_)
          ++hot_used_;
        else
          ++cold_used_;
        return idx;
      }
    }
  }

 private:
  std::mt19937_64& rng_;
  std::unordered_set<uint64_t>& used_;
  uint64_t universe_ = 0;
  uint64_t hot_size_ = 0;
  uint64_t cold_size_ = 0;
  uint64_t hot_used_ = 0;
  uint64_t cold_used_ = 0;
  double hot_mass_ = 0.0;
};

inline float small_integer_value(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(1, 16);
  return static_cast<float>(pick(rng));
}

}  // namespace detail

// Generates n tensors: a shared core of ceil(omega*d*M) indices common to all
// nodes, the remainder drawn per node from the two-tier distribution. Values
// are small integers so aggregation checks can be exact. Same seed, same
// tensors.
inline std::vector<SparseTensor> generate(const WorkloadSpec& spec) {
  spec.validate();
  const uint64_t nnz = spec.nnz_per_node();
  const uint64_t core_size = std::min<uint64_t>(
      nnz, static_cast<uint64_t>(std::ceil(spec.omega * spec.density *
                                           static_cast<double>(spec.universe))));

  std::mt19937_64 core_rng(detail::derive_seed(spec.seed, 0xc07e));
  std::unordered_set<uint64_t> core_set;
  core_set.reserve(core_size * 2);
  {
    detail::TwoTierSampler sampler(spec, core_rng, core_set);
    for (uint64_t i = 0; i < core_size; ++i) sampler.draw();
  }

  std::vector<SparseTensor> tensors;
  tensors.reserve(spec.nodes);
  for (uint32_t node = 0; node < spec.nodes; ++node) {
    std::mt19937_64 rng(detail::derive_seed(spec.seed, 0x10000 + node));
    std::unordered_set<uint64_t> used = core_set;
    used.reserve(nnz * 2);
    detail::TwoTierSampler sampler(spec, rng, used);
    std::vector<uint64_t> indices(core_set.begin(), core_set.end());
    indices.reserve(nnz);
    for (uint64_t i = core_size; i < nnz; ++i) indices.push_back(sampler.draw());
    std::sort(indices.begin(), indices.end());
    std::vector<float> values(indices.size());
    for (auto& v : values) v = detail::small_integer_value(rng);
    tensors.emplace_back(spec.universe, std::move(indices), std::move(values));
  }
  return tensors;
}

// Keeps the ceil(fraction*M) largest-magnitude entries, ties broken toward the
// lower index, then drops entries that are exactly zero.
inline SparseTensor sparsify_topk(const DenseTensor& dense, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("top-k fraction must be in (0,1]");
  const uint64_t m = dense.size();
  const uint64_t keep = std::min<uint64_t>(
      m, static_cast<uint64_t>(std::ceil(fraction * static_cast<double>(m))));
  std::vector<uint64_t> order(m);
  for (uint64_t i = 0; i < m; ++i) order[i] = i;
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](uint64_t a, uint64_t b) {
                      const float ma = std::fabs(dense.values[a]);
                      const float mb = std::fabs(dense.values[b]);
                      if (ma != mb) return ma > mb;
                      return a < b;
                    });
  std::vector<std::pair<uint64_t, float>> pairs;
  pairs.reserve(keep);
  for (uint64_t i = 0; i < keep; ++i) {
    if (dense.values[order[i]] != 0.0f) pairs.emplace_back(order[i], dense.values[order[i]]);
  }
  return SparseTensor::from_pairs(m, std::move(pairs));
}

struct WorkloadMeasurement {
  double mean_pairwise_overlap = 0.0;
  std::map<uint64_t, double> gamma;  // densification after aggregating the first k tensors
  std::map<uint32_t, double> skew;   // mean per-tensor skewness at each partition count
};

// The three characteristic measurements: mean pairwise overlap, the
// densification curve over k = 1..n, and mean skewness over power-of-two
// partition counts.
inline WorkloadMeasurement measure(const std::vector<SparseTensor>& tensors) {
  if (tensors.size() < 2) throw Error("measurement requires at least two tensors");
  for (const auto& t : tensors)
    if (t.empty()) throw EmptyTensor("measurement undefined with empty tensors");

  WorkloadMeasurement out;
  double pair_sum = 0.0;
  uint64_t pair_count = 0;
  for (size_t i = 0; i < tensors.size(); ++i) {
    for (size_t j = i + 1; j < tensors.size(); ++j) {
      pair_sum += overlap_ratio(tensors[i], tensors[j]);
      ++pair_count;
    }
  }
  out.mean_pairwise_overlap = pair_sum / static_cast<double>(pair_count);

  double density_sum = 0.0;
  SparseTensor prefix = tensors.front();
  density_sum = density(prefix);
  out.gamma[1] = 1.0;
  for (size_t k = 2; k <= tensors.size(); ++k) {
    prefix = merge_sum(prefix, tensors[k - 1]);
    density_sum += density(tensors[k - 1]);
    out.gamma[k] = density(prefix) / (density_sum / static_cast<double>(k));
  }

  for (uint32_t parts = 1; parts <= tensors.size(); parts *= 2) {
    double s = 0.0;
    for (const auto& t : tensors) s += skewness_ratio(t, parts);
    out.skew[parts] = s / static_cast<double>(tensors.size());
  }
  return out;
}

}  // namespace zen
