#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "atfn/packet.hpp"

namespace atfn::rss {

// Which header fields feed the hash. Enabled fields are concatenated in the
// canonical order src addr, dst addr, src port, dst port, protocol.
struct HashType {
  bool src_addr = true;
  bool dst_addr = true;
  bool src_port = true;
  bool dst_port = true;
  bool protocol = false;

  static HashType all() { return {true, true, true, true, true}; }
  static HashType four_tuple() { return {}; }
  static HashType addresses_only() { return {true, true, false, false, false}; }

  bool any() const noexcept { return src_addr || dst_addr || src_port || dst_port || protocol; }

  void validate() const {
    if (!any()) throw std::invalid_argument("hash type must enable at least one field");
  }

  bool operator==(const HashType&) const = default;
};

inline std::vector<std::uint8_t> select_fields(const FlowKey& key, const HashType& type) {
  std::vector<std::uint8_t> out;
  out.reserve(37);
  auto put_addr = [&out](const IpAddress& a) {
    out.insert(out.end(), a.bytes.begin(), a.bytes.begin() + static_cast<long>(a.width()));
  };
  auto put_port = [&out](std::uint16_t p) {
    out.push_back(static_cast<std::uint8_t>(p >> 8));
    out.push_back(static_cast<std::uint8_t>(p));
  };
  if (type.src_addr) put_addr(key.src_addr);
  if (type.dst_addr) put_addr(key.dst_addr);
  if (type.src_port) put_port(key.src_port);
  if (type.dst_port) put_port(key.dst_port);
  if (type.protocol) out.push_back(key.protocol);
  return out;
}

inline std::vector<std::uint8_t> select_fields(const Packet& packet, const HashType& type) {
  return select_fields(packet.key, type);
}

class RssKey {
 public:
  static constexpr std::size_t kDefaultLength = 40;

  RssKey() : RssKey(verification_key()) {}
  explicit RssKey(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  // The 40-byte key published with the RSS verification suite.
  static RssKey verification_key() {
    return from_hex(
        "6d5a56da255b0ec24167253d43a38fb0d0ca2bcbae7b30b477cb2da38030f20c6a42b73bbeac01fa");
  }

  static RssKey from_hex(std::string_view hex) {
    std::vector<std::uint8_t> out;
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      return -1;
    };
    std::string compact;
    for (char c : hex)
      if (c != ':' && c != ' ' && c != '-') compact.push_back(c);
    if (compact.size() % 2 != 0) throw std::invalid_argument("RSS key hex has odd length");
    for (std::size_t i = 0; i < compact.size(); i += 2) {
      const int hi = nibble(compact[i]);
      const int lo = nibble(compact[i + 1]);
      if (hi < 0 || lo < 0) throw std::invalid_argument("RSS key hex has invalid digit");
      out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return RssKey(std::move(out));
  }

  std::string to_hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (auto b : bytes_) {
      s.push_back(digits[b >> 4]);
      s.push_back(digits[b & 0xf]);
    }
    return s;
  }

  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }
  std::size_t size() const noexcept { return bytes_.size(); }

  bool operator==(const RssKey&) const = default;

 private:
  std::vector<std::uint8_t> bytes_;
};

// Toeplitz hash: for every set input bit i (MSB first), XOR in the 32-bit
// key window starting at key bit i.
inline std::uint32_t toeplitz_hash(const RssKey& key, std::span<const std::uint8_t> input) {
  const auto k = key.bytes();
  if (k.size() < input.size() + 4)
    throw std::invalid_argument("RSS key too short: " + std::to_string(k.size()) +
                                " bytes for " + std::to_string(input.size()) + "-byte input");
  std::uint32_t window = (std::uint32_t{k[0]} << 24) | (std::uint32_t{k[1]} << 16) |
                         (std::uint32_t{k[2]} << 8) | k[3];
  std::uint32_t result = 0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const std::uint8_t next = k[i + 4];
    for (int b = 7; b >= 0; --b) {
      if ((input[i] >> b) & 1u) result ^= window;
      window = (window << 1) | ((next >> b) & 1u);
    }
  }
  return result;
}

class IndirectionTable {
 public:
  IndirectionTable() = default;

  explicit IndirectionTable(std::vector<QueueId> entries) : entries_(std::move(entries)) {
    if (entries_.empty() || (entries_.size() & (entries_.size() - 1)) != 0)
      throw std::invalid_argument("indirection table size must be a power of two");
    while ((std::size_t{1} << mask_bits_) < entries_.size()) ++mask_bits_;
  }

  // Round-robin over `num_queues`, `size` entries.
  static IndirectionTable round_robin(std::size_t size, QueueId num_queues) {
    if (num_queues == 0) throw std::invalid_argument("num_queues must be >= 1");
    std::vector<QueueId> e(size);
    for (std::size_t i = 0; i < size; ++i) e[i] = static_cast<QueueId>(i % num_queues);
    return IndirectionTable(std::move(e));
  }

  void validate(QueueId num_queues) const {
    if (entries_.empty()) throw std::invalid_argument("indirection table is empty");
    for (auto q : entries_)
      if (q >= num_queues)
        throw std::invalid_argument("indirection entry names queue " + std::to_string(q) +
                                    " but only " + std::to_string(num_queues) + " exist");
  }

  QueueId lookup(std::uint32_t hash) const {
    const std::uint32_t mask = static_cast<std::uint32_t>((std::uint64_t{1} << mask_bits_) - 1);
    return entries_[hash & mask];
  }

  unsigned mask_bits() const noexcept { return mask_bits_; }
  const std::vector<QueueId>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  bool operator==(const IndirectionTable&) const = default;

 private:
  std::vector<QueueId> entries_;
  unsigned mask_bits_ = 0;
};

inline QueueId indirection_lookup(std::uint32_t hash, const IndirectionTable& table) {
  return table.lookup(hash);
}

// Linux/FreeBSD style: no indirection table, hash modulo queue count.
inline QueueId direct_map_lookup(std::uint32_t hash, QueueId num_queues) {
  if (num_queues == 0) throw std::invalid_argument("num_queues must be >= 1");
  return static_cast<QueueId>(hash % num_queues);
}

enum class LookupMode : std::uint8_t { Indirection, DirectMap };

struct RssConfig {
  HashType hash_type;
  RssKey key;
  LookupMode mode = LookupMode::Indirection;
  IndirectionTable table;  // used in Indirection mode
  QueueId num_queues = 1;

  void validate() const {
    hash_type.validate();
    if (num_queues == 0) throw std::invalid_argument("num_queues must be >= 1");
    if (mode == LookupMode::Indirection) table.validate(num_queues);
  }
};

// Stateless classifier over an immutable configuration.
class Classifier {
 public:
  explicit Classifier(RssConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  std::uint32_t hash(const FlowKey& key) const {
    const auto bytes = select_fields(key, cfg_.hash_type);
    return toeplitz_hash(cfg_.key, bytes);
  }

  QueueId queue_for_hash(std::uint32_t h) const {
    return cfg_.mode == LookupMode::Indirection ? indirection_lookup(h, cfg_.table)
                                                : direct_map_lookup(h, cfg_.num_queues);
  }

  QueueId queue_for(const FlowKey& key) const { return queue_for_hash(hash(key)); }
  QueueId queue_for(const Packet& p) const { return queue_for(p.key); }

  const RssConfig& config() const noexcept { return cfg_; }

 private:
  RssConfig cfg_;
};

}  // namespace atfn::rss
