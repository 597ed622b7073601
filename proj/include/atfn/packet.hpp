#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>

#include "atfn/sim_kernel.hpp"

namespace atfn {

using CoreId = std::uint8_t;  // one byte, as carried in a transmit descriptor
using QueueId = std::uint16_t;
using FlowId = std::uint32_t;

inline constexpr std::size_t kMaxCores = 256;

struct IpAddress {
  bool v6 = false;
  std::array<std::uint8_t, 16> bytes{};  // v4 uses the first four

  static IpAddress v4(std::uint32_t host_order) {
    IpAddress a;
    a.bytes[0] = static_cast<std::uint8_t>(host_order >> 24);
    a.bytes[1] = static_cast<std::uint8_t>(host_order >> 16);
    a.bytes[2] = static_cast<std::uint8_t>(host_order >> 8);
    a.bytes[3] = static_cast<std::uint8_t>(host_order);
    return a;
  }

  static IpAddress v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    return v4((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d);
  }

  static IpAddress v6_from(const std::array<std::uint8_t, 16>& raw) {
    IpAddress a;
    a.v6 = true;
    a.bytes = raw;
    return a;
  }

  // Dotted quad only; v6 scenario addresses are not parsed from text.
  static IpAddress parse_v4(const std::string& text) {
    unsigned p[4];
    char tail = 0;
    if (std::sscanf(text.c_str(), "%u.%u.%u.%u%c", &p[0], &p[1], &p[2], &p[3], &tail) != 4 ||
        p[0] > 255 || p[1] > 255 || p[2] > 255 || p[3] > 255)
      throw std::invalid_argument("bad IPv4 address: " + text);
    return v4(static_cast<std::uint8_t>(p[0]), static_cast<std::uint8_t>(p[1]),
              static_cast<std::uint8_t>(p[2]), static_cast<std::uint8_t>(p[3]));
  }

  std::size_t width() const noexcept { return v6 ? 16 : 4; }

  std::string to_string() const {
    if (v6) {
      std::string s;
      char buf[8];
      for (std::size_t i = 0; i < 16; i += 2) {
        std::snprintf(buf, sizeof buf, "%s%02x%02x", i ? ":" : "", bytes[i], bytes[i + 1]);
        s += buf;
      }
      return s;
    }
    return std::to_string(bytes[0]) + "." + std::to_string(bytes[1]) + "." +
           std::to_string(bytes[2]) + "." + std::to_string(bytes[3]);
  }

  auto operator<=>(const IpAddress&) const = default;
};

inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;

// 5-tuple. Flow-to-Core table keys are always in the receive direction.
struct FlowKey {
  IpAddress src_addr;
  IpAddress dst_addr;
  std::uint8_t protocol = kProtoTcp;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;

  auto operator<=>(const FlowKey&) const = default;

  std::string to_string() const {
    return src_addr.to_string() + ":" + std::to_string(src_port) + "->" + dst_addr.to_string() +
           ":" + std::to_string(dst_port) + "/" + std::to_string(protocol);
  }
};

// Maps an outgoing header {x, y, z, p, q} to the table key {y, x, z, q, p}.
inline FlowKey reverse_key(const FlowKey& k) {
  return FlowKey{k.dst_addr, k.src_addr, k.protocol, k.dst_port, k.src_port};
}

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint8_t b) {
      h ^= b;
      h *= 1099511628211ULL;
    };
    for (auto b : k.src_addr.bytes) mix(b);
    for (auto b : k.dst_addr.bytes) mix(b);
    mix(k.protocol);
    mix(static_cast<std::uint8_t>(k.src_port >> 8));
    mix(static_cast<std::uint8_t>(k.src_port));
    mix(static_cast<std::uint8_t>(k.dst_port >> 8));
    mix(static_cast<std::uint8_t>(k.dst_port));
    return static_cast<std::size_t>(h);
  }
};

enum class Direction : std::uint8_t { Rx, Tx };

enum class PacketKind : std::uint8_t { Syn, SynAck, Ack, Data, Fin };

inline const char* to_string(PacketKind k) {
  switch (k) {
    case PacketKind::Syn: return "SYN";
    case PacketKind::SynAck: return "SYNACK";
    case PacketKind::Ack: return "ACK";
    case PacketKind::Data: return "DATA";
    case PacketKind::Fin: return "FIN";
  }
  return "?";
}

struct Packet {
  FlowKey key;  // header as it appears on the wire in `direction`
  Direction direction = Direction::Rx;
  PacketKind kind = PacketKind::Data;
  std::uint64_t seq = 0;  // per-flow data sequence number
  SimTime arrival = 0;    // NIC arrival time (rx)
  std::uint32_t bytes = 0;
  FlowId flow = 0;  // simulator bookkeeping index

  FlowKey receive_key() const { return direction == Direction::Rx ? key : reverse_key(key); }
  bool is_tcp() const noexcept { return key.protocol == kProtoTcp; }
};

// Outgoing packet metadata handed from OS to NIC, extended with the core
// on which the packet was produced.
struct TransmitDescriptor {
  FlowKey key;  // transmit direction
  CoreId core_id = 0;
};

}  // namespace atfn
