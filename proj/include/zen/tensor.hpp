#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "zen/errors.hpp"

namespace zen {

// Full gradient vector of one layer, zeros included.
struct DenseTensor {
  std::vector<float> values;

  DenseTensor() = default;
  explicit DenseTensor(std::vector<float> v) : values(std::move(v)) {
    if (values.empty()) throw Error("dense tensor must have at least one element");
  }
  uint64_t size() const { return values.size(); }
};

// Non-zero entries of a gradient tensor over a universe of M elements.
// Indices are stored strictly sorted, so identical index/value sets compare
// equal no matter how the tensor was assembled.
class SparseTensor {
 public:
  SparseTensor() : universe_(1) {}

  SparseTensor(uint64_t universe, std::vector<uint64_t> indices, std::vector<float> values)
      : universe_(universe), indices_(std::move(indices)), values_(std::move(values)) {
    if (universe_ == 0) throw Error("sparse tensor universe must be at least 1");
    if (indices_.size() != values_.size())
      throw Error("sparse tensor index/value lengths differ");
    if (!std::is_sorted(indices_.begin(), indices_.end())) canonicalize();
    for (size_t i = 0; i < indices_.size(); ++i) {
      if (indices_[i] >= universe_) throw Error("sparse tensor index outside [0, M)");
      if (i > 0 && indices_[i] == indices_[i - 1]) throw Error("duplicate index in sparse tensor");
    }
  }

  static SparseTensor from_pairs(uint64_t universe,
                                 std::vector<std::pair<uint64_t, float>> pairs) {
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<uint64_t> idx(pairs.size());
    std::vector<float> val(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      idx[i] = pairs[i].first;
      val[i] = pairs[i].second;
    }
    return SparseTensor(universe, std::move(idx), std::move(val));
  }

  uint64_t universe() const { return universe_; }
  uint64_t nnz() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  const std::vector<uint64_t>& indices() const { return indices_; }
  const std::vector<float>& values() const { return values_; }

  friend bool operator==(const SparseTensor& a, const SparseTensor& b) {
    return a.universe_ == b.universe_ && a.indices_ == b.indices_ && a.values_ == b.values_;
  }
  friend bool operator!=(const SparseTensor& a, const SparseTensor& b) { return !(a == b); }

 private:
  void canonicalize() {
    std::vector<size_t> order(indices_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [this](size_t a, size_t b) { return indices_[a] < indices_[b]; });
    std::vector<uint64_t> idx(indices_.size());
    std::vector<float> val(values_.size());
    for (size_t i = 0; i < order.size(); ++i) {
      idx[i] = indices_[order[i]];
      val[i] = values_[order[i]];
    }
    indices_ = std::move(idx);
    values_ = std::move(val);
  }

  uint64_t universe_;
  std::vector<uint64_t> indices_;
  std::vector<float> values_;
};

// Extracts the non-zero entries of a dense tensor.
inline SparseTensor to_sparse(const DenseTensor& dense) {
  std::vector<uint64_t> idx;
  std::vector<float> val;
  for (uint64_t i = 0; i < dense.size(); ++i) {
    if (dense.values[i] != 0.0f) {
      idx.push_back(i);
      val.push_back(dense.values[i]);
    }
  }
  return SparseTensor(dense.size(), std::move(idx), std::move(val));
}

inline double density(const SparseTensor& t) {
  return static_cast<double>(t.nnz()) / static_cast<double>(t.universe());
}

// |I_a ∩ I_b| / min(|I_a|, |I_b|).
inline double overlap_ratio(const SparseTensor& a, const SparseTensor& b) {
  if (a.universe() != b.universe()) throw UniverseMismatch();
  if (a.empty() || b.empty()) throw EmptyTensor("overlap ratio undefined for empty tensors");
  const auto& ia = a.indices();
  const auto& ib = b.indices();
  uint64_t common = 0;
  size_t i = 0, j = 0;
  while (i < ia.size() && j < ib.size()) {
    if (ia[i] < ib[j]) {
      ++i;
    } else if (ia[i] > ib[j]) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(std::min(ia.size(), ib.size()));
}

// Merges two sparse tensors, summing values on shared indices.
inline SparseTensor merge_sum(const SparseTensor& a, const SparseTensor& b) {
  if (a.universe() != b.universe()) throw UniverseMismatch();
  std::vector<uint64_t> idx;
  std::vector<float> val;
  idx.reserve(a.nnz() + b.nnz());
  val.reserve(a.nnz() + b.nnz());
  size_t i = 0, j = 0;
  const auto& ia = a.indices();
  const auto& ib = b.indices();
  while (i < ia.size() && j < ib.size()) {
    if (ia[i] < ib[j]) {
      idx.push_back(ia[i]);
      val.push_back(a.values()[i]);
      ++i;
    } else if (ia[i] > ib[j]) {
      idx.push_back(ib[j]);
      val.push_back(b.values()[j]);
      ++j;
    } else {
      idx.push_back(ia[i]);
      val.push_back(a.values()[i] + b.values()[j]);
      ++i;
      ++j;
    }
  }
  for (; i < ia.size(); ++i) {
    idx.push_back(ia[i]);
    val.push_back(a.values()[i]);
  }
  for (; j < ib.size(); ++j) {
    idx.push_back(ib[j]);
    val.push_back(b.values()[j]);
  }
  return SparseTensor(a.universe(), std::move(idx), std::move(val));
}

// Index set becomes the union of the inputs; values with the same index are
// summed. This is the reference result every synchronization scheme must match.
inline SparseTensor aggregate(const std::vector<SparseTensor>& tensors) {
  if (tensors.empty()) throw Error("aggregate requires at least one tensor");
  SparseTensor acc = tensors.front();
  for (size_t i = 1; i < tensors.size(); ++i) acc = merge_sum(acc, tensors[i]);
  return acc;
}

// density(aggregate) / mean(density). 1 when tensors fully overlap, n when disjoint.
inline double densification_ratio(const std::vector<SparseTensor>& tensors) {
  if (tensors.empty()) throw Error("densification ratio requires at least one tensor");
  double mean_d = 0.0;
  for (const auto& t : tensors) {
    if (t.empty()) throw EmptyTensor("densification ratio undefined with an empty tensor");
    mean_d += density(t);
  }
  mean_d /= static_cast<double>(tensors.size());
  return density(aggregate(tensors)) / mean_d;
}

// Max per-partition density over whole-tensor density, with n contiguous
// ranges of size ceil(M/n); the last range may be short.
inline double skewness_ratio(const SparseTensor& t, uint32_t partitions) {
  if (partitions == 0) throw Error("skewness ratio requires at least one partition");
  if (t.empty()) throw EmptyTensor("skewness ratio undefined for an empty tensor");
  const uint64_t m = t.universe();
  const uint64_t range = (m + partitions - 1) / partitions;
  double max_density = 0.0;
  size_t pos = 0;
  const auto& idx = t.indices();
  for (uint64_t p = 0; p < partitions; ++p) {
    const uint64_t lo = p * range;
    if (lo >= m) break;
    const uint64_t hi = std::min(m, lo + range);
    uint64_t count = 0;
    while (pos < idx.size() && idx[pos] < hi) {
      ++count;
      ++pos;
    }
    max_density = std::max(max_density, static_cast<double>(count) / static_cast<double>(hi - lo));
  }
  return max_density / density(t);
}

// Measured sparsity statistics: density, densification per GPU count, and
// skewness per partition count.
struct SparsityProfile {
  double d = 0.0;
  std::map<uint64_t, double> gamma;
  std::map<uint32_t, double> skew;

  void validate() const {
    if (!(d > 0.0 && d <= 1.0)) throw Error("profile density must be in (0,1]");
    auto it = gamma.find(1);
    if (it == gamma.end() || it->second != 1.0) throw Error("profile gamma[1] must equal 1");
    double prev = 0.0;
    for (const auto& [k, g] : gamma) {
      if (g < prev - 1e-9) throw Error("profile gamma must be non-decreasing in k");
      if (g > static_cast<double>(k) + 1e-9) throw Error("profile gamma[k] must not exceed k");
      if (d * g > 1.0 + 1e-9) throw Error("profile d*gamma[k] must not exceed 1");
      prev = g;
    }
    for (const auto& [n, s] : skew) {
      (void)n;
      if (s < 1.0 - 1e-9) throw Error("profile skew must be at least 1");
    }
  }
};

// --- binary serialization ---------------------------------------------------
//
// Layout, little-endian: magic "ZSPT", u32 version, u64 M, u64 count,
// count u64 indices, count f32 values.

namespace detail {

template <typename T>
inline void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
inline T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw MalformedPayload("unexpected end of stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline constexpr char kSparseMagic[4] = {'Z', 'S', 'P', 'T'};
inline constexpr uint32_t kSparseVersion = 1;

inline void write_sparse(std::ostream& os, const SparseTensor& t) {
  os.write(kSparseMagic, 4);
  detail::write_le<uint32_t>(os, kSparseVersion);
  detail::write_le<uint64_t>(os, t.universe());
  detail::write_le<uint64_t>(os, t.nnz());
  for (uint64_t i : t.indices()) detail::write_le<uint64_t>(os, i);
  for (float v : t.values()) detail::write_le<float>(os, v);
}

inline SparseTensor read_sparse(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kSparseMagic, 4) != 0)
    throw MalformedPayload("bad sparse tensor magic");
  const uint32_t version = detail::read_le<uint32_t>(is);
  if (version != kSparseVersion) throw MalformedPayload("unsupported sparse tensor version");
  const uint64_t m = detail::read_le<uint64_t>(is);
  const uint64_t count = detail::read_le<uint64_t>(is);
  std::vector<uint64_t> idx(count);
  for (auto& i : idx) i = detail::read_le<uint64_t>(is);
  std::vector<float> val(count);
  for (auto& v : val) v = detail::read_le<float>(is);
  return SparseTensor(m, std::move(idx), std::move(val));
}

inline void write_sparse_file(const std::string& path, const SparseTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_sparse(os, t);
}

inline SparseTensor read_sparse_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_sparse(is);
}

}  // namespace zen
