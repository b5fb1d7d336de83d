#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zen/errors.hpp"
#include "zen/tensor.hpp"

#include "json.hpp"

namespace zen {

// Inputs to the closed-form communication-time formulas. M and the formulas
// are in FP32-element units: one element is one 32-bit gradient, and a COO
// entry counts as two elements. Bandwidth is elements per time unit.
struct CostInputs {
  uint32_t n = 1;
  double universe = 0.0;  // M
  double d = 0.0;
  double b = 1.0;              // elements per time unit
  std::map<uint64_t, double> gamma;
  double skew = 1.0;           // s_G^n of the per-node tensor
  double broadcast_rounds = 1.0;  // rounds parameter of a broadcast algorithm
};

namespace detail {

inline bool is_power_of_two(uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline uint32_t log2_exact(uint64_t v) {
  uint32_t l = 0;
  while (v > 1) {
    v >>= 1;
    ++l;
  }
  return l;
}

inline double gamma_at(const CostInputs& c, uint64_t k) {
  if (k == 1) return 1.0;
  auto it = c.gamma.find(k);
  if (it == c.gamma.end())
    throw MissingProfileEntry("densification ratio for k=" + std::to_string(k) +
                              " missing from profile");
  return it->second;
}

}  // namespace detail

// Dimensionless coefficient of Balanced Parallelism: (n-1)/n * (gamma_n + 1).
// Total time is the coefficient times 2*M*d/b.
inline double t_bp_coefficient(uint32_t n, double gamma_n) {
  if (n <= 1) return 0.0;
  return (static_cast<double>(n) - 1.0) / static_cast<double>(n) * (gamma_n + 1.0);
}

// Dimensionless coefficient of Hierarchical Centralization:
// sum over log n stages of gamma at 2^(i-1).
inline double t_hc_coefficient(uint32_t n, const std::map<uint64_t, double>& gamma) {
  if (!detail::is_power_of_two(n)) throw NonPowerOfTwo("hierarchy requires a power-of-two n");
  double sum = 0.0;
  for (uint64_t k = 1; k < n; k *= 2) {
    if (k == 1) {
      sum += 1.0;
      continue;
    }
    auto it = gamma.find(k);
    if (it == gamma.end())
      throw MissingProfileEntry("densification ratio for k=" + std::to_string(k) +
                                " missing from profile");
    sum += it->second;
  }
  return sum;
}

inline double t_bp(const CostInputs& c) {
  if (c.n <= 1) return 0.0;
  return t_bp_coefficient(c.n, detail::gamma_at(c, c.n)) * 2.0 * c.universe * c.d / c.b;
}

inline double t_hc(const CostInputs& c) {
  return t_hc_coefficient(c.n, c.gamma) * 2.0 * c.universe * c.d / c.b;
}

// Sparse parameter server with contiguous partitions: the skew of the hot
// partition multiplies both push and pull.
inline double t_sparse_ps(const CostInputs& c) {
  if (c.n <= 1) return 0.0;
  const double gamma_n = detail::gamma_at(c, c.n);
  return 2.0 * (static_cast<double>(c.n) - 1.0) * (1.0 + gamma_n) * c.skew * c.d * c.universe /
         static_cast<double>(c.n) / c.b;
}

// Sparse PS whose pull is a broadcast collective with `broadcast_rounds` rounds.
inline double t_sparse_ps_broadcast(const CostInputs& c) {
  if (c.n <= 1) return 0.0;
  const double gamma_n = detail::gamma_at(c, c.n);
  const double push = 2.0 * (static_cast<double>(c.n) - 1.0) * c.skew * c.d * c.universe /
                      static_cast<double>(c.n) / c.b;
  const double pull = 2.0 * c.broadcast_rounds * gamma_n * c.d * c.universe / c.b;
  return push + pull;
}

// Ring with incremental aggregation: n-1 stages whose received density grows
// with the stage's densification ratio. Needs gamma at every k in [1, n-1].
inline double t_ring_incremental(const CostInputs& c) {
  if (c.n <= 1) return 0.0;
  double sum = 0.0;
  for (uint64_t k = 1; k < c.n; ++k) sum += detail::gamma_at(c, k);
  return 2.0 * sum * c.d * c.universe / static_cast<double>(c.n) / c.b;
}

// Lower bound for hierarchy with incremental aggregation under Parallelism:
// each node receives at least 2*(n-1)*d*M/n elements.
inline double t_hierarchy_incremental_lb(const CostInputs& c) {
  if (c.n <= 1) return 0.0;
  return 2.0 * (static_cast<double>(c.n) - 1.0) * c.d * c.universe / static_cast<double>(c.n) /
         c.b;
}

// Dense ring allreduce baseline: 2*(n-1)/n*M elements per node.
inline double t_allreduce_dense(const CostInputs& c) {
  if (c.n <= 1) return 0.0;
  return 2.0 * (static_cast<double>(c.n) - 1.0) / static_cast<double>(c.n) * c.universe / c.b;
}

enum class SchemeChoice { BalancedParallelism, HierarchicalCentralization };

inline const char* to_string(SchemeChoice s) {
  return s == SchemeChoice::BalancedParallelism ? "balanced-parallelism"
                                                : "hierarchical-centralization";
}

// Picks the cheaper of the two optimal schemes from a measured profile.
// Both formulas share the 2*M*d/b factor, so only the coefficients matter;
// ties go to Balanced Parallelism.
inline SchemeChoice select_scheme(const SparsityProfile& profile, uint32_t n) {
  auto it = profile.gamma.find(n);
  if (it == profile.gamma.end())
    throw MissingProfileEntry("densification ratio for k=" + std::to_string(n) +
                              " missing from profile");
  const double bp = t_bp_coefficient(n, it->second);
  const double hc = t_hc_coefficient(n, profile.gamma);
  return bp <= hc ? SchemeChoice::BalancedParallelism : SchemeChoice::HierarchicalCentralization;
}

// Measures d, the densification ladder gamma[k] for k in {1,2,4,...,n}, and
// the skewness at n partitions, averaged over profiling rounds.
inline SparsityProfile profile_sparsity(const std::vector<std::vector<SparseTensor>>& rounds) {
  if (rounds.empty()) throw Error("profiling requires at least one round");
  const size_t n = rounds.front().size();
  if (n == 0) throw Error("profiling requires at least one tensor per round");

  SparsityProfile profile;
  std::map<uint64_t, double> gamma_sums;
  double skew_sum = 0.0;
  double density_sum = 0.0;
  uint64_t density_count = 0;

  for (const auto& round : rounds) {
    if (round.size() != n) throw Error("profiling rounds must have matching node counts");
    double prefix_density_sum = 0.0;
    SparseTensor prefix;
    for (size_t i = 0; i < n; ++i) {
      const SparseTensor& t = round[i];
      if (t.empty()) throw EmptyTensor("profiling requires non-empty tensors");
      density_sum += density(t);
      ++density_count;
      prefix = i == 0 ? t : merge_sum(prefix, t);
      prefix_density_sum += density(t);
      const uint64_t k = i + 1;
      if (detail::is_power_of_two(k)) {
        gamma_sums[k] +=
            density(prefix) / (prefix_density_sum / static_cast<double>(k));
      }
      skew_sum += skewness_ratio(t, static_cast<uint32_t>(n));
    }
  }

  profile.d = density_sum / static_cast<double>(density_count);
  for (const auto& [k, sum] : gamma_sums)
    profile.gamma[k] = sum / static_cast<double>(rounds.size());
  profile.gamma[1] = 1.0;
  profile.skew[static_cast<uint32_t>(n)] =
      skew_sum / static_cast<double>(rounds.size() * n);
  return profile;
}

inline nlohmann::json profile_to_json(const SparsityProfile& p) {
  nlohmann::json j;
  j["d"] = p.d;
  j["gamma"] = nlohmann::json::object();
  for (const auto& [k, g] : p.gamma) j["gamma"][std::to_string(k)] = g;
  j["skew"] = nlohmann::json::object();
  for (const auto& [n, s] : p.skew) j["skew"][std::to_string(n)] = s;
  return j;
}

inline SparsityProfile profile_from_json(const nlohmann::json& j) {
  SparsityProfile p;
  if (!j.contains("d") || !j["d"].is_number())
    throw MissingProfileEntry("profile json lacks a numeric 'd'");
  p.d = j["d"].get<double>();
  if (!j.contains("gamma") || !j["gamma"].is_object())
    throw MissingProfileEntry("profile json lacks a 'gamma' object");
  for (const auto& [key, value] : j["gamma"].items()) {
    if (!value.is_number()) throw MissingProfileEntry("gamma entries must be numeric");
    p.gamma[std::stoull(key)] = value.get<double>();
  }
  if (j.contains("skew")) {
    for (const auto& [key, value] : j["skew"].items())
      p.skew[static_cast<uint32_t>(std::stoul(key))] = value.get<double>();
  }
  return p;
}

}  // namespace zen
