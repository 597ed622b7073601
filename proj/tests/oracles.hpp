#pragma once

// Reference implementations used only to check the library. They are
// written against the definitions, not against the library code.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// Toeplitz hash computed from an explicit bit array of the key: bit j of
// the result for input bit i is key bit (i + j).
inline std::uint32_t toeplitz_bits(const std::vector<std::uint8_t>& key, const std::vector<std::uint8_t>& input) {
  std::vector<int> kbits;
  for (auto b : key)
    for (int i = 7; i >= 0; --i) kbits.push_back((b >> i) & 1);
  std::uint32_t out = 0;
  for (std::size_t i = 0; i < input.size() * 8; ++i) {
    const int bit = (input[i / 8] >> (7 - i % 8)) & 1;
    if (!bit) continue;
    std::uint32_t w = 0;
    for (int j = 0; j < 32; ++j) w = (w << 1) | static_cast<std::uint32_t>(kbits.at(i + j));
    out ^= w;
  }
  return out;
}

inline std::vector<std::uint8_t> verification_key() {
  return {0x6d, 0x5a, 0x56, 0xda, 0x25, 0x5b, 0x0e, 0xc2, 0x41, 0x67, 0x25, 0x3d, 0x43, 0xa3,
          0x8f, 0xb0, 0xd0, 0xca, 0x2b, 0xcb, 0xae, 0x7b, 0x30, 0xb4, 0x77, 0xcb, 0x2d, 0xa3,
          0x80, 0x30, 0xf2, 0x0c, 0x6a, 0x42, 0xb7, 0x3b, 0xbe, 0xac, 0x01, 0xfa};
}

// Input bytes of an IPv4 4-tuple: src, dst, sport, dport, big-endian.
inline std::vector<std::uint8_t> tuple_bytes(std::array<std::uint8_t, 4> src, std::array<std::uint8_t, 4> dst,
                                             std::uint16_t sport, std::uint16_t dport) {
  std::vector<std::uint8_t> v(src.begin(), src.end());
  v.insert(v.end(), dst.begin(), dst.end());
  v.push_back(static_cast<std::uint8_t>(sport >> 8));
  v.push_back(static_cast<std::uint8_t>(sport));
  v.push_back(static_cast<std::uint8_t>(dport >> 8));
  v.push_back(static_cast<std::uint8_t>(dport));
  return v;
}

// Expected admitted fraction when n flows land uniformly in b buckets
// capped at m entries each: b * E[min(X, m)] / n with X ~ Bin(n, 1/b).
inline double admitted_fraction(std::uint64_t n, std::uint64_t b, std::uint64_t m) {
  if (n == 0) return 1.0;
  if (m == 1) return static_cast<double>(b) * (1.0 - std::pow(1.0 - 1.0 / static_cast<double>(b), n)) / n;
  const double p = 1.0 / static_cast<double>(b);
  const double nd = static_cast<double>(n);
  // E[min(X, m)] = m - sum_{k<m} (m - k) P(X = k)
  double e = static_cast<double>(m);
  for (std::uint64_t k = 0; k < m && k <= n; ++k) {
    const double kd = static_cast<double>(k);
    const double logp = std::lgamma(nd + 1) - std::lgamma(kd + 1) - std::lgamma(nd - kd + 1) + kd * std::log(p) +
                        (nd - kd) * std::log1p(-p);
    e -= (static_cast<double>(m) - kd) * std::exp(logp);
  }
  return static_cast<double>(b) * e / nd;
}

}  // namespace oracle
