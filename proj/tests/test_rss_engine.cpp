#include <gtest/gtest.h>

#include <array>
#include <vector>

#include "atfn/rss_engine.hpp"
#include "oracles.hpp"

using namespace atfn;

namespace {

struct Vector {
  std::array<std::uint8_t, 4> src, dst;
  std::uint16_t sport, dport;
  std::uint32_t with_ports, addrs_only;
};

// Published verification suite for the default 40-byte key.
const Vector kVectors[] = {
    {{66, 9, 149, 187}, {161, 142, 100, 80}, 2794, 1766, 0x51ccc178, 0x323e8fc2},
    {{199, 92, 111, 2}, {65, 69, 140, 83}, 14230, 4739, 0xc626b0ea, 0xd718262a},
    {{24, 19, 198, 95}, {12, 22, 207, 184}, 12898, 38024, 0x5c2b394a, 0xd2d0a5de},
    {{38, 27, 205, 30}, {209, 142, 163, 6}, 48228, 2217, 0xafc7327f, 0x82989176},
    {{153, 39, 163, 191}, {202, 188, 127, 2}, 44251, 1303, 0x10e828a2, 0x5d1809c5},
};

FlowKey key_of(const Vector& v) {
  FlowKey k;
  k.src_addr = IpAddress::v4(v.src[0], v.src[1], v.src[2], v.src[3]);
  k.dst_addr = IpAddress::v4(v.dst[0], v.dst[1], v.dst[2], v.dst[3]);
  k.src_port = v.sport;
  k.dst_port = v.dport;
  return k;
}

}  // namespace

TEST(Toeplitz, VerificationVectorsFourTuple) {
  const rss::RssKey key;
  for (const auto& v : kVectors)
    EXPECT_EQ(rss::toeplitz_hash(key, rss::select_fields(key_of(v), rss::HashType::four_tuple())), v.with_ports);
}

TEST(Toeplitz, VerificationVectorsAddressesOnly) {
  const rss::RssKey key;
  for (const auto& v : kVectors)
    EXPECT_EQ(rss::toeplitz_hash(key, rss::select_fields(key_of(v), rss::HashType::addresses_only())),
              v.addrs_only);
}

TEST(Toeplitz, OracleAgreesOnVectors) {
  for (const auto& v : kVectors)
    EXPECT_EQ(oracle::toeplitz_bits(oracle::verification_key(), oracle::tuple_bytes(v.src, v.dst, v.sport, v.dport)),
              v.with_ports);
}

TEST(Toeplitz, MatchesBitOracleOnRandomInputs) {
  Rng rng(2024);
  const rss::RssKey key;
  const auto kbytes = oracle::verification_key();
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::uint8_t> in(rng.uniform(37));
    for (auto& b : in) b = static_cast<std::uint8_t>(rng.uniform(256));
    ASSERT_EQ(rss::toeplitz_hash(key, in), oracle::toeplitz_bits(kbytes, in)) << "input " << i;
  }
}

TEST(Toeplitz, LinearOverXor) {
  Rng rng(5);
  const rss::RssKey key;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::uint8_t> a(12), b(12), c(12);
    for (int j = 0; j < 12; ++j) {
      a[j] = static_cast<std::uint8_t>(rng.uniform(256));
      b[j] = static_cast<std::uint8_t>(rng.uniform(256));
      c[j] = a[j] ^ b[j];
    }
    ASSERT_EQ(rss::toeplitz_hash(key, c), rss::toeplitz_hash(key, a) ^ rss::toeplitz_hash(key, b));
  }
  EXPECT_EQ(rss::toeplitz_hash(key, std::vector<std::uint8_t>(12, 0)), 0u);
}

TEST(Toeplitz, ShortKeyIsAnError) {
  const rss::RssKey key(std::vector<std::uint8_t>(8, 0xff));
  EXPECT_THROW(rss::toeplitz_hash(key, std::vector<std::uint8_t>(12, 1)), std::invalid_argument);
}

TEST(RssKey, HexRoundTrip) {
  const rss::RssKey key;
  EXPECT_EQ(rss::RssKey::from_hex(key.to_hex()), key);
  EXPECT_EQ(key.size(), 40u);
  EXPECT_THROW(rss::RssKey::from_hex("zz"), std::invalid_argument);
}

TEST(HashFields, CanonicalOrderAndWidths) {
  FlowKey k;
  k.src_addr = IpAddress::v4(1, 2, 3, 4);
  k.dst_addr = IpAddress::v4(5, 6, 7, 8);
  k.src_port = 0x0102;
  k.dst_port = 0x0304;
  k.protocol = kProtoTcp;
  EXPECT_EQ(rss::select_fields(k, rss::HashType::four_tuple()),
            (std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6, 7, 8, 1, 2, 3, 4}));
  EXPECT_EQ(rss::select_fields(k, rss::HashType::all()).size(), 13u);
  EXPECT_THROW((rss::HashType{false, false, false, false, false}.validate()), std::invalid_argument);
}

TEST(Indirection, UsesLowHashBits) {
  const rss::IndirectionTable t({0, 0, 0, 0, 1, 1, 2, 3});
  EXPECT_EQ(t.mask_bits(), 3u);
  EXPECT_EQ(t.lookup(0x0), 0u);
  EXPECT_EQ(t.lookup(0x4), 1u);
  EXPECT_EQ(t.lookup(0x6), 2u);
  EXPECT_EQ(t.lookup(0xfffffff7), 3u);
  EXPECT_THROW(rss::IndirectionTable({0, 1, 2}), std::invalid_argument);
  EXPECT_THROW(t.validate(3), std::invalid_argument);
}

TEST(Indirection, UnevenTableShares) {
  const rss::IndirectionTable t({0, 0, 0, 0, 1, 1, 2, 3});
  Rng rng(11);
  std::array<int, 4> n{};
  const int total = 1'000'000;
  for (int i = 0; i < total; ++i) ++n[t.lookup(rng.next_u32())];
  const double expect[] = {0.5, 0.25, 0.125, 0.125};
  for (int q = 0; q < 4; ++q) EXPECT_NEAR(static_cast<double>(n[q]) / total, expect[q], 0.01);
}

TEST(DirectMap, EqualShares) {
  Rng rng(12);
  std::array<int, 4> n{};
  const int total = 400'000;
  for (int i = 0; i < total; ++i) ++n[rss::direct_map_lookup(rng.next_u32(), 4)];
  for (int q = 0; q < 4; ++q) EXPECT_NEAR(static_cast<double>(n[q]) / total, 0.25, 0.01);
  EXPECT_THROW(rss::direct_map_lookup(1, 0), std::invalid_argument);
}

TEST(Classifier, SameFlowSameQueue) {
  rss::RssConfig cfg;
  cfg.num_queues = 4;
  cfg.table = rss::IndirectionTable::round_robin(16, 4);
  const rss::Classifier c(cfg);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    FlowKey k;
    k.src_addr = IpAddress::v4(static_cast<std::uint32_t>(rng.next_u32()));
    k.dst_addr = IpAddress::v4(10, 0, 0, 2);
    k.src_port = static_cast<std::uint16_t>(rng.uniform(65536));
    k.dst_port = 5001;
    const auto q = c.queue_for(k);
    ASSERT_LT(q, 4u);
    ASSERT_EQ(c.queue_for(k), q);
  }
}
