#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "zen/errors.hpp"
#include "zen/hashing.hpp"
#include "zen/tensor.hpp"

namespace zen {

enum class WireKind : uint8_t { Coo = 1, Bitmap = 2, TensorBlock = 3, HashBitmap = 4 };

struct WireFormat {
  WireKind kind = WireKind::Coo;
  uint32_t block_size = 256;   // TensorBlock only
  uint32_t coo_index_bits = 64;  // 64 for the library default, 32 reproduces the 2x accounting

  static WireFormat coo(uint32_t index_bits = 64) {
    if (index_bits != 32 && index_bits != 64) throw Error("COO index width must be 32 or 64");
    return {WireKind::Coo, 256, index_bits};
  }
  static WireFormat bitmap() { return {WireKind::Bitmap, 256, 64}; }
  static WireFormat tensor_block(uint32_t block_size = 256) {
    if (block_size < 1) throw Error("tensor block size must be at least 1");
    return {WireKind::TensorBlock, block_size, 64};
  }
  static WireFormat hash_bitmap() { return {WireKind::HashBitmap, 256, 64}; }
};

// The indices a given server owns under h0: sorted, disjoint across servers,
// and together covering [0, M).
struct HashUniverse {
  uint32_t server_id = 0;
  uint64_t universe_size = 0;
  std::vector<uint64_t> indices;
};

// All n universes for one (M, h0 seed, n). Built with a single scan; read-only
// afterwards, so instances can be shared freely across threads.
class HashUniverseTable {
 public:
  HashUniverseTable(uint64_t universe_size, uint32_t servers, uint64_t partition_seed)
      : universe_size_(universe_size), servers_(servers), partition_seed_(partition_seed) {
    if (servers == 0) throw Error("hash universe table needs at least one server");
    universes_.resize(servers);
    for (uint32_t s = 0; s < servers; ++s) {
      universes_[s].server_id = s;
      universes_[s].universe_size = universe_size;
    }
    for (uint64_t idx = 0; idx < universe_size; ++idx) {
      universes_[partition_of(idx, partition_seed, servers)].indices.push_back(idx);
    }
  }

  uint64_t universe_size() const { return universe_size_; }
  uint32_t servers() const { return servers_; }
  uint64_t partition_seed() const { return partition_seed_; }
  const HashUniverse& universe(uint32_t server) const { return universes_.at(server); }

 private:
  uint64_t universe_size_;
  uint32_t servers_;
  uint64_t partition_seed_;
  std::vector<HashUniverse> universes_;
};

// Σ_i |I_i| over the hashed universes. Always exactly M bits: the universes
// partition [0, M).
inline uint64_t pull_hash_bitmap_total_bits(uint64_t universe_size, uint32_t servers,
                                            uint64_t partition_seed) {
  std::vector<uint64_t> counts(servers, 0);
  for (uint64_t idx = 0; idx < universe_size; ++idx)
    ++counts[partition_of(idx, partition_seed, servers)];
  uint64_t total = 0;
  for (uint64_t c : counts) total += c;
  return total;
}

// A plain bitmap cannot exploit hashed (non-contiguous) ownership: every
// server must describe the full range, so each worker receives n*M bits.
inline uint64_t pull_plain_bitmap_total_bits(uint64_t universe_size, uint32_t servers) {
  return static_cast<uint64_t>(servers) * universe_size;
}

struct MessageSizes {
  uint64_t index_bits = 0;
  uint64_t value_bits = 0;
  uint64_t payload_bits() const { return index_bits + value_bits; }
};

// One encoded sparse tensor. index_bits/value_bits always carry the exact wire
// cost; payload bytes are present after encode() and may be left empty where
// only the accounting is needed.
struct EncodedMessage {
  WireFormat format;
  uint64_t universe_size = 0;
  uint64_t count = 0;  // entries for Coo/Bitmap/HashBitmap, non-zero blocks for TensorBlock
  uint64_t index_bits = 0;
  uint64_t value_bits = 0;
  std::vector<uint8_t> payload;

  uint64_t payload_bits() const { return index_bits + value_bits; }
  bool materialized() const { return !payload.empty() || payload_bits() == 0; }
};

namespace detail {

inline void append_le(std::vector<uint8_t>& out, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename T>
inline void append_value(std::vector<uint8_t>& out, T v) {
  append_le(out, &v, sizeof(T));
}

template <typename T>
inline T take_value(const std::vector<uint8_t>& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw MalformedPayload("payload truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

// Bit b lives in byte b/8 at position b%8, LSB first; equivalent to packing
// 64-bit little-endian words and serializing them byte-wise.
inline void set_bit(std::vector<uint8_t>& bytes, uint64_t bit) {
  bytes[bit >> 3] |= uint8_t(1u << (bit & 7));
}

inline bool get_bit(const std::vector<uint8_t>& bytes, size_t base, uint64_t bit) {
  return (bytes[base + (bit >> 3)] >> (bit & 7)) & 1u;
}

// Position of each tensor index within the universe list; error if some index
// is not owned by this server.
inline std::vector<uint64_t> universe_positions(const SparseTensor& t, const HashUniverse& u) {
  std::vector<uint64_t> positions;
  positions.reserve(t.nnz());
  size_t upos = 0;
  for (uint64_t idx : t.indices()) {
    while (upos < u.indices.size() && u.indices[upos] < idx) ++upos;
    if (upos == u.indices.size() || u.indices[upos] != idx)
      throw IndexOutsideUniverse("index " + std::to_string(idx) + " is not owned by server " +
                                 std::to_string(u.server_id));
    positions.push_back(upos);
  }
  return positions;
}

struct BlockRun {
  uint64_t block_id;
  uint64_t begin;  // first element index of the block
  uint64_t length;
};

inline std::vector<BlockRun> nonzero_blocks(const SparseTensor& t, uint32_t block_size) {
  std::vector<BlockRun> blocks;
  const uint64_t m = t.universe();
  for (size_t i = 0; i < t.indices().size();) {
    const uint64_t block_id = t.indices()[i] / block_size;
    const uint64_t begin = block_id * block_size;
    const uint64_t length = std::min<uint64_t>(block_size, m - begin);
    blocks.push_back({block_id, begin, length});
    while (i < t.indices().size() && t.indices()[i] < begin + length) ++i;
  }
  return blocks;
}

}  // namespace detail

// Exact wire cost of a tensor in a format, without building the payload.
inline MessageSizes message_sizes(const SparseTensor& t, const WireFormat& fmt,
                                  const HashUniverse* universe = nullptr) {
  MessageSizes s;
  switch (fmt.kind) {
    case WireKind::Coo:
      s.index_bits = uint64_t(fmt.coo_index_bits) * t.nnz();
      s.value_bits = 32 * t.nnz();
      break;
    case WireKind::Bitmap:
      s.index_bits = t.universe();
      s.value_bits = 32 * t.nnz();
      break;
    case WireKind::TensorBlock: {
      uint64_t values = 0;
      const auto blocks = detail::nonzero_blocks(t, fmt.block_size);
      for (const auto& b : blocks) values += b.length;
      s.index_bits = 64 * blocks.size();
      s.value_bits = 32 * values;
      break;
    }
    case WireKind::HashBitmap: {
      if (universe == nullptr) throw Error("hash bitmap requires a hash universe");
      detail::universe_positions(t, *universe);  // validates ownership
      s.index_bits = universe->indices.size();
      s.value_bits = 32 * t.nnz();
      break;
    }
  }
  return s;
}

inline EncodedMessage encode(const SparseTensor& t, const WireFormat& fmt,
                             const HashUniverse* universe = nullptr) {
  EncodedMessage msg;
  msg.format = fmt;
  msg.universe_size = t.universe();

  switch (fmt.kind) {
    case WireKind::Coo: {
      msg.count = t.nnz();
      msg.index_bits = uint64_t(fmt.coo_index_bits) * t.nnz();
      msg.value_bits = 32 * t.nnz();
      msg.payload.reserve((fmt.coo_index_bits / 8 + 4) * t.nnz());
      for (uint64_t idx : t.indices()) {
        if (fmt.coo_index_bits == 32) {
          if (idx > 0xffffffffULL) throw Error("index does not fit a 32-bit COO entry");
          detail::append_value<uint32_t>(msg.payload, static_cast<uint32_t>(idx));
        } else {
          detail::append_value<uint64_t>(msg.payload, idx);
        }
      }
      for (float v : t.values()) detail::append_value<float>(msg.payload, v);
      break;
    }
    case WireKind::Bitmap: {
      msg.count = t.nnz();
      msg.index_bits = t.universe();
      msg.value_bits = 32 * t.nnz();
      msg.payload.assign((t.universe() + 7) / 8, 0);
      for (uint64_t idx : t.indices()) detail::set_bit(msg.payload, idx);
      for (float v : t.values()) detail::append_value<float>(msg.payload, v);
      break;
    }
    case WireKind::TensorBlock: {
      const auto blocks = detail::nonzero_blocks(t, fmt.block_size);
      msg.count = blocks.size();
      uint64_t values = 0;
      size_t pos = 0;
      for (const auto& b : blocks) {
        detail::append_value<uint64_t>(msg.payload, b.block_id);
        for (uint64_t e = b.begin; e < b.begin + b.length; ++e) {
          float v = 0.0f;
          if (pos < t.indices().size() && t.indices()[pos] == e) {
            v = t.values()[pos];
            ++pos;
          }
          detail::append_value<float>(msg.payload, v);
        }
        values += b.length;
      }
      msg.index_bits = 64 * blocks.size();
      msg.value_bits = 32 * values;
      break;
    }
    case WireKind::HashBitmap: {
      if (universe == nullptr) throw Error("hash bitmap requires a hash universe");
      const auto positions = detail::universe_positions(t, *universe);
      msg.count = t.nnz();
      msg.index_bits = universe->indices.size();
      msg.value_bits = 32 * t.nnz();
      msg.payload.assign((universe->indices.size() + 7) / 8, 0);
      for (uint64_t p : positions) detail::set_bit(msg.payload, p);
      // values in ascending universe-position order == ascending index order
      for (float v : t.values()) detail::append_value<float>(msg.payload, v);
      break;
    }
  }
  return msg;
}

inline SparseTensor decode(const EncodedMessage& msg, const HashUniverse* universe = nullptr) {
  if (!msg.materialized()) throw MalformedPayload("message has no payload to decode");
  const auto& payload = msg.payload;
  switch (msg.format.kind) {
    case WireKind::Coo: {
      const uint64_t entry = msg.format.coo_index_bits / 8 + 4;
      if (payload.size() != entry * msg.count) throw MalformedPayload("COO payload size mismatch");
      size_t pos = 0;
      std::vector<uint64_t> idx(msg.count);
      for (auto& i : idx)
        i = msg.format.coo_index_bits == 32 ? detail::take_value<uint32_t>(payload, pos)
                                            : detail::take_value<uint64_t>(payload, pos);
      std::vector<float> val(msg.count);
      for (auto& v : val) v = detail::take_value<float>(payload, pos);
      return SparseTensor(msg.universe_size, std::move(idx), std::move(val));
    }
    case WireKind::Bitmap: {
      const size_t bitmap_bytes = (msg.universe_size + 7) / 8;
      if (payload.size() != bitmap_bytes + 4 * msg.count)
        throw MalformedPayload("bitmap payload size mismatch");
      std::vector<uint64_t> idx;
      idx.reserve(msg.count);
      for (uint64_t b = 0; b < msg.universe_size; ++b)
        if (detail::get_bit(payload, 0, b)) idx.push_back(b);
      if (idx.size() != msg.count) throw MalformedPayload("bitmap population mismatch");
      size_t pos = bitmap_bytes;
      std::vector<float> val(msg.count);
      for (auto& v : val) v = detail::take_value<float>(payload, pos);
      return SparseTensor(msg.universe_size, std::move(idx), std::move(val));
    }
    case WireKind::TensorBlock: {
      size_t pos = 0;
      std::vector<uint64_t> idx;
      std::vector<float> val;
      const uint32_t block = msg.format.block_size;
      for (uint64_t b = 0; b < msg.count; ++b) {
        const uint64_t block_id = detail::take_value<uint64_t>(payload, pos);
        const uint64_t begin = block_id * block;
        if (begin >= msg.universe_size) throw MalformedPayload("block id outside universe");
        const uint64_t length = std::min<uint64_t>(block, msg.universe_size - begin);
        for (uint64_t e = 0; e < length; ++e) {
          const float v = detail::take_value<float>(payload, pos);
          if (v != 0.0f) {
            idx.push_back(begin + e);
            val.push_back(v);
          }
        }
      }
      if (pos != payload.size()) throw MalformedPayload("tensor block payload size mismatch");
      return SparseTensor(msg.universe_size, std::move(idx), std::move(val));
    }
    case WireKind::HashBitmap: {
      if (universe == nullptr) throw Error("hash bitmap requires the encoding universe");
      const size_t bitmap_bytes = (universe->indices.size() + 7) / 8;
      if (payload.size() != bitmap_bytes + 4 * msg.count)
        throw MalformedPayload("hash bitmap payload size mismatch");
      std::vector<uint64_t> idx;
      idx.reserve(msg.count);
      for (uint64_t p = 0; p < universe->indices.size(); ++p)
        if (detail::get_bit(payload, 0, p)) idx.push_back(universe->indices[p]);
      if (idx.size() != msg.count) throw MalformedPayload("hash bitmap population mismatch");
      size_t pos = bitmap_bytes;
      std::vector<float> val(msg.count);
      for (auto& v : val) v = detail::take_value<float>(payload, pos);
      return SparseTensor(msg.universe_size, std::move(idx), std::move(val));
    }
  }
  throw MalformedPayload("unknown wire format");
}

// --- message framing ---------------------------------------------------------
//
// On-disk layout, little-endian:
//   u8 format tag, u32 block_size, u32 coo_index_bits,
//   u64 universe size, u64 count, u64 payload_bits, payload bytes.

inline void write_framed(std::ostream& os, const EncodedMessage& msg) {
  if (!msg.materialized()) throw Error("cannot frame a message without payload");
  zen::detail::write_le<uint8_t>(os, static_cast<uint8_t>(msg.format.kind));
  zen::detail::write_le<uint32_t>(os, msg.format.block_size);
  zen::detail::write_le<uint32_t>(os, msg.format.coo_index_bits);
  zen::detail::write_le<uint64_t>(os, msg.universe_size);
  zen::detail::write_le<uint64_t>(os, msg.count);
  zen::detail::write_le<uint64_t>(os, msg.payload_bits());
  os.write(reinterpret_cast<const char*>(msg.payload.data()),
           static_cast<std::streamsize>(msg.payload.size()));
}

inline EncodedMessage read_framed(std::istream& is) {
  EncodedMessage msg;
  const uint8_t tag = zen::detail::read_le<uint8_t>(is);
  if (tag < 1 || tag > 4) throw MalformedPayload("unknown wire format tag");
  msg.format.kind = static_cast<WireKind>(tag);
  msg.format.block_size = zen::detail::read_le<uint32_t>(is);
  msg.format.coo_index_bits = zen::detail::read_le<uint32_t>(is);
  msg.universe_size = zen::detail::read_le<uint64_t>(is);
  msg.count = zen::detail::read_le<uint64_t>(is);
  const uint64_t payload_bits = zen::detail::read_le<uint64_t>(is);

  // Rebuild the bit accounting from the format, then cross-check.
  switch (msg.format.kind) {
    case WireKind::Coo:
      msg.index_bits = uint64_t(msg.format.coo_index_bits) * msg.count;
      msg.value_bits = 32 * msg.count;
      msg.payload.resize((msg.format.coo_index_bits / 8 + 4) * msg.count);
      break;
    case WireKind::Bitmap:
      msg.index_bits = msg.universe_size;
      msg.value_bits = 32 * msg.count;
      msg.payload.resize((msg.universe_size + 7) / 8 + 4 * msg.count);
      break;
    case WireKind::TensorBlock:
      msg.index_bits = 64 * msg.count;
      msg.value_bits = payload_bits >= msg.index_bits ? payload_bits - msg.index_bits : 0;
      if (msg.value_bits % 32 != 0) throw MalformedPayload("tensor block value bits not 32-aligned");
      msg.payload.resize(8 * msg.count + msg.value_bits / 8);
      break;
    case WireKind::HashBitmap:
      msg.index_bits = payload_bits >= 32 * msg.count ? payload_bits - 32 * msg.count : 0;
      msg.value_bits = 32 * msg.count;
      msg.payload.resize((msg.index_bits + 7) / 8 + 4 * msg.count);
      break;
  }
  if (msg.payload_bits() != payload_bits) throw MalformedPayload("frame bit accounting mismatch");
  is.read(reinterpret_cast<char*>(msg.payload.data()),
          static_cast<std::streamsize>(msg.payload.size()));
  if (!is) throw MalformedPayload("frame payload truncated");
  return msg;
}

}  // namespace zen
