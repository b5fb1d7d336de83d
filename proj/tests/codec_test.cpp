#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <unordered_set>
#include <vector>

#include "zen/codec.hpp"

namespace {

using zen::EncodedMessage;
using zen::HashUniverse;
using zen::HashUniverseTable;
using zen::SparseTensor;
using zen::WireFormat;

SparseTensor random_tensor(uint64_t m, uint64_t nnz, std::mt19937_64& rng) {
  std::unordered_set<uint64_t> seen;
  std::vector<std::pair<uint64_t, float>> pairs;
  std::uniform_int_distribution<uint64_t> pick(0, m - 1);
  std::uniform_real_distribution<float> value(-100.0f, 100.0f);
  while (pairs.size() < nnz) {
    const uint64_t idx = pick(rng);
    float v = value(rng);
    if (v == 0.0f) v = 1.0f;
    if (seen.insert(idx).second) pairs.emplace_back(idx, v);
  }
  return SparseTensor::from_pairs(m, std::move(pairs));
}

TEST(CooEncoding, SizesFollowTheWidth) {
  std::mt19937_64 rng(1);
  auto t = random_tensor(1000, 25, rng);
  auto msg64 = zen::encode(t, WireFormat::coo(64));
  EXPECT_EQ(msg64.index_bits, 64u * 25);
  EXPECT_EQ(msg64.value_bits, 32u * 25);
  auto msg32 = zen::encode(t, WireFormat::coo(32));
  EXPECT_EQ(msg32.index_bits, 32u * 25);
  EXPECT_EQ(zen::decode(msg64), t);
  EXPECT_EQ(zen::decode(msg32), t);
}

TEST(BitmapEncoding, IndexCostIsTheUniverse) {
  std::mt19937_64 rng(2);
  auto t = random_tensor(500, 100, rng);
  auto msg = zen::encode(t, WireFormat::bitmap());
  EXPECT_EQ(msg.index_bits, 500u);
  EXPECT_EQ(msg.value_bits, 3200u);
  EXPECT_EQ(zen::decode(msg), t);
}

TEST(EmptyTensor, AllFormatsCarryZeroValueBits) {
  SparseTensor t(64, {}, {});
  for (auto fmt : {WireFormat::coo(), WireFormat::bitmap(), WireFormat::tensor_block(16)}) {
    auto msg = zen::encode(t, fmt);
    EXPECT_EQ(msg.value_bits, 0u);
    EXPECT_EQ(zen::decode(msg), t);
  }
}

TEST(TensorBlockEncoding, ReconstructsAndStripsZeros) {
  SparseTensor t(32, {3, 4, 17}, {1.0f, 2.0f, 3.0f});
  auto msg = zen::encode(t, WireFormat::tensor_block(8));
  // two non-zero blocks of 8 gradients
  EXPECT_EQ(msg.index_bits, 2u * 64);
  EXPECT_EQ(msg.value_bits, 2u * 8 * 32);
  EXPECT_EQ(zen::decode(msg), t);
}

TEST(TensorBlockEncoding, ShortLastBlockUsesActualLength) {
  SparseTensor t(20, {19}, {5.0f});
  auto msg = zen::encode(t, WireFormat::tensor_block(8));
  // last block covers [16, 20): 4 gradients
  EXPECT_EQ(msg.value_bits, 4u * 32);
  EXPECT_EQ(zen::decode(msg), t);
}

TEST(TensorBlockEncoding, CanExceedCooPayload) {
  // one non-zero per 256-gradient block: block transport pays 64+256*32 bits
  // per gradient versus 96 for COO
  std::vector<uint64_t> idx;
  std::vector<float> val;
  for (uint64_t b = 0; b < 8; ++b) {
    idx.push_back(b * 256 + 7);
    val.push_back(1.0f);
  }
  SparseTensor t(8 * 256, std::move(idx), std::move(val));
  auto block = zen::encode(t, WireFormat::tensor_block(256));
  auto coo = zen::encode(t, WireFormat::coo());
  EXPECT_GT(block.payload_bits(), coo.payload_bits());
}

TEST(HashUniverseTable, PartitionsTheFullRange) {
  HashUniverseTable table(1000, 7, 12345);
  uint64_t total = 0;
  std::unordered_set<uint64_t> seen;
  for (uint32_t s = 0; s < 7; ++s) {
    const auto& u = table.universe(s);
    EXPECT_TRUE(std::is_sorted(u.indices.begin(), u.indices.end()));
    for (uint64_t idx : u.indices) EXPECT_TRUE(seen.insert(idx).second);
    total += u.indices.size();
  }
  EXPECT_EQ(total, 1000u);
}

TEST(HashBitmap, WorkedExampleWithFifteenElements) {
  // Find a seed where server 0 owns one index below 5, then 5, then 7 (and
  // not 6), so 5 and 7 sit at local positions 1 and 2. Encoding gradients
  // {5, 7} must then set the second and third bits, and decoding must return
  // exactly {5, 7}.
  for (uint64_t seed = 0;; ++seed) {
    ASSERT_LT(seed, 200000u);
    HashUniverseTable table(15, 3, seed);
    const auto& u = table.universe(0);
    if (u.indices.size() < 3) continue;
    auto pos_of = [&](uint64_t idx) {
      auto it = std::find(u.indices.begin(), u.indices.end(), idx);
      return it == u.indices.end() ? size_t(-1) : size_t(it - u.indices.begin());
    };
    if (pos_of(5) != 1 || pos_of(7) != 2) continue;

    SparseTensor t(15, {5, 7}, {0.3f, 0.9f});
    auto msg = zen::encode(t, WireFormat::hash_bitmap(), &u);
    EXPECT_EQ(msg.index_bits, u.indices.size());
    ASSERT_FALSE(msg.payload.empty());
    EXPECT_EQ(msg.payload[0] & 0b111, 0b110);  // bits 1 and 2 set, bit 0 clear
    auto back = zen::decode(msg, &u);
    EXPECT_EQ(back.indices(), (std::vector<uint64_t>{5, 7}));
    EXPECT_EQ(back, t);
    break;
  }
}

TEST(HashBitmap, RejectsIndicesOutsideTheUniverse) {
  HashUniverseTable table(100, 4, 9);
  const auto& u = table.universe(0);
  uint64_t foreign = 0;
  while (std::binary_search(u.indices.begin(), u.indices.end(), foreign)) ++foreign;
  SparseTensor t(100, {foreign}, {1.0f});
  EXPECT_THROW(zen::encode(t, WireFormat::hash_bitmap(), &u), zen::IndexOutsideUniverse);
}

TEST(RoundTrip, RandomTensorsAcrossAllFormats) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const uint64_t m = 1 + rng() % 2000;
    const uint64_t nnz = rng() % (m / 2 + 1);
    auto t = random_tensor(m, nnz, rng);
    for (auto fmt : {WireFormat::coo(64), WireFormat::coo(32), WireFormat::bitmap(),
                     WireFormat::tensor_block(1 + uint32_t(rng() % 300))}) {
      auto msg = zen::encode(t, fmt);
      EXPECT_EQ(msg.payload_bits(), msg.index_bits + msg.value_bits);
      EXPECT_EQ(zen::decode(msg), t);
    }
    // hash bitmap round-trips per server slice
    HashUniverseTable table(m, 1 + uint32_t(rng() % 5), rng());
    for (uint32_t s = 0; s < table.servers(); ++s) {
      const auto& u = table.universe(s);
      std::vector<std::pair<uint64_t, float>> pairs;
      size_t upos = 0;
      for (size_t i = 0; i < t.nnz(); ++i) {
        while (upos < u.indices.size() && u.indices[upos] < t.indices()[i]) ++upos;
        if (upos < u.indices.size() && u.indices[upos] == t.indices()[i])
          pairs.emplace_back(t.indices()[i], t.values()[i]);
      }
      auto slice = SparseTensor::from_pairs(m, std::move(pairs));
      auto msg = zen::encode(slice, WireFormat::hash_bitmap(), &u);
      EXPECT_EQ(zen::decode(msg, &u), slice);
    }
  }
}

TEST(MessageSizes, AgreeWithEncode) {
  std::mt19937_64 rng(88);
  for (int trial = 0; trial < 100; ++trial) {
    const uint64_t m = 1 + rng() % 1000;
    auto t = random_tensor(m, rng() % (m / 2 + 1), rng);
    for (auto fmt : {WireFormat::coo(64), WireFormat::coo(32), WireFormat::bitmap(),
                     WireFormat::tensor_block(1 + uint32_t(rng() % 64))}) {
      auto sizes = zen::message_sizes(t, fmt);
      auto msg = zen::encode(t, fmt);
      EXPECT_EQ(sizes.index_bits, msg.index_bits);
      EXPECT_EQ(sizes.value_bits, msg.value_bits);
    }
  }
}

TEST(PullTotals, HashBitmapTotalIsExactlyM) {
  for (uint32_t n : {2u, 3u, 16u, 64u}) {
    EXPECT_EQ(zen::pull_hash_bitmap_total_bits(15, n, 4), 15u);
    EXPECT_EQ(zen::pull_hash_bitmap_total_bits(1000, n, 99), 1000u);
  }
}

TEST(PullTotals, EmbeddingTableScaleBitmapIsTwentyEightMegabytes) {
  // 224M gradients (an 856MB FP32 embedding table) -> 224M bits = 28 MB of
  // index metadata in total, independent of the server count.
  const uint64_t m = 224'000'000;
  const uint64_t bits = zen::pull_hash_bitmap_total_bits(m, 16, 1234);
  EXPECT_EQ(bits, m);
  EXPECT_DOUBLE_EQ(double(bits) / 8.0 / 1e6, 28.0);
}

TEST(PullTotals, PlainBitmapUnderHashedPartitioningIsLinearInN) {
  EXPECT_EQ(zen::pull_plain_bitmap_total_bits(1000, 2), 2000u);
  EXPECT_EQ(zen::pull_plain_bitmap_total_bits(1000, 16), 16000u);
}

TEST(FormatOrdering, HighDensityFavorsHashBitmap) {
  // at aggregated density > 0.5 with 16 servers: per-server payload
  // hash bitmap < full-range bitmap < COO
  std::mt19937_64 rng(99);
  const uint64_t m = 4096;
  auto t = random_tensor(m, m * 6 / 10, rng);
  HashUniverseTable table(m, 16, 7);
  for (uint32_t s = 0; s < 4; ++s) {
    const auto& u = table.universe(s);
    std::vector<std::pair<uint64_t, float>> pairs;
    size_t upos = 0;
    for (size_t i = 0; i < t.nnz(); ++i) {
      while (upos < u.indices.size() && u.indices[upos] < t.indices()[i]) ++upos;
      if (upos < u.indices.size() && u.indices[upos] == t.indices()[i])
        pairs.emplace_back(t.indices()[i], t.values()[i]);
    }
    auto slice = SparseTensor::from_pairs(m, std::move(pairs));
    const auto hash_bits = zen::message_sizes(slice, WireFormat::hash_bitmap(), &u).payload_bits();
    const auto bitmap_bits = zen::message_sizes(slice, WireFormat::bitmap()).payload_bits();
    const auto coo_bits = zen::message_sizes(slice, WireFormat::coo()).payload_bits();
    EXPECT_LT(hash_bits, bitmap_bits);
    EXPECT_LT(bitmap_bits, coo_bits);
  }
}

TEST(FormatOrdering, CooBeatsBitmapOnlyBelowHalfDensity) {
  // at 50% density COO costs 96*0.5*M = 48M bits, bitmap M + 16M = 17M bits
  std::mt19937_64 rng(101);
  const uint64_t m = 1000;
  auto t = random_tensor(m, m / 2, rng);
  const auto coo = zen::message_sizes(t, WireFormat::coo());
  const auto bitmap = zen::message_sizes(t, WireFormat::bitmap());
  EXPECT_EQ(coo.payload_bits(), 96u * (m / 2));
  EXPECT_EQ(bitmap.payload_bits(), m + 32u * (m / 2));
  EXPECT_GT(coo.payload_bits(), bitmap.payload_bits());
}

TEST(Framing, RoundTripsThroughAStream) {
  std::mt19937_64 rng(111);
  for (int trial = 0; trial < 50; ++trial) {
    const uint64_t m = 1 + rng() % 500;
    auto t = random_tensor(m, rng() % (m / 2 + 1), rng);
    for (auto fmt : {WireFormat::coo(64), WireFormat::coo(32), WireFormat::bitmap(),
                     WireFormat::tensor_block(7)}) {
      auto msg = zen::encode(t, fmt);
      std::stringstream ss;
      zen::write_framed(ss, msg);
      auto back = zen::read_framed(ss);
      EXPECT_EQ(back.index_bits, msg.index_bits);
      EXPECT_EQ(back.value_bits, msg.value_bits);
      EXPECT_EQ(back.payload, msg.payload);
      EXPECT_EQ(zen::decode(back), t);
    }
  }
}

TEST(Framing, RejectsTruncatedPayload) {
  std::mt19937_64 rng(121);
  auto t = random_tensor(100, 10, rng);
  auto msg = zen::encode(t, WireFormat::coo());
  std::stringstream ss;
  zen::write_framed(ss, msg);
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream truncated(bytes);
  EXPECT_THROW(zen::read_framed(truncated), zen::MalformedPayload);
}

TEST(Decode, RejectsCorruptCounts) {
  std::mt19937_64 rng(131);
  auto t = random_tensor(64, 6, rng);
  auto msg = zen::encode(t, WireFormat::bitmap());
  msg.count += 1;
  EXPECT_THROW(zen::decode(msg), zen::MalformedPayload);
}

// Committed fixtures pin the wire layout across versions.
TEST(Fixtures, DecodeCommittedFrames) {
  const std::string dir = ZEN_TEST_DATA;
  const SparseTensor expected = zen::read_sparse_file(dir + "/tensor_m48.zspt");
  ASSERT_EQ(expected.nnz(), 5u);
  for (const char* name : {"coo64_m48.bin", "bitmap_m48.bin", "block8_m48.bin"}) {
    std::ifstream is(dir + "/" + name, std::ios::binary);
    ASSERT_TRUE(is.good()) << name;
    EXPECT_EQ(zen::decode(zen::read_framed(is)), expected) << name;
  }
  {
    HashUniverseTable table(48, 3, 2024);
    std::ifstream is(dir + "/hashbitmap_s0_seed2024_m48.bin", std::ios::binary);
    ASSERT_TRUE(is.good());
    const SparseTensor slice = zen::read_sparse_file(dir + "/hashbitmap_s0_expected.zspt");
    EXPECT_EQ(zen::decode(zen::read_framed(is), &table.universe(0)), slice);
  }
}

TEST(Fixtures, EncodersReproduceCommittedBytes) {
  const std::string dir = ZEN_TEST_DATA;
  const SparseTensor t = zen::read_sparse_file(dir + "/tensor_m48.zspt");
  const struct {
    const char* name;
    WireFormat fmt;
  } cases[] = {{"coo64_m48.bin", WireFormat::coo(64)},
               {"bitmap_m48.bin", WireFormat::bitmap()},
               {"block8_m48.bin", WireFormat::tensor_block(8)}};
  for (const auto& c : cases) {
    std::stringstream fresh;
    zen::write_framed(fresh, zen::encode(t, c.fmt));
    std::ifstream is(dir + "/" + c.name, std::ios::binary);
    std::stringstream committed;
    committed << is.rdbuf();
    EXPECT_EQ(fresh.str(), committed.str()) << c.name;
  }
}

}  // namespace
