#pragma once

#include <cstdint>

#include "atfn/flow_table.hpp"
#include "atfn/packet.hpp"

namespace th {

inline atfn::FlowKey key(std::uint16_t sport, std::uint16_t dport = 5001, std::uint8_t proto = atfn::kProtoTcp) {
  atfn::FlowKey k;
  k.src_addr = atfn::IpAddress::v4(10, 0, 0, 1);
  k.dst_addr = atfn::IpAddress::v4(10, 0, 0, 2);
  k.protocol = proto;
  k.src_port = sport;
  k.dst_port = dport;
  return k;
}

inline atfn::Packet rx(const atfn::FlowKey& k, atfn::PacketKind kind, std::uint64_t seq = 0,
                       std::uint32_t bytes = 256, atfn::FlowId flow = 0) {
  atfn::Packet p;
  p.key = k;
  p.direction = atfn::Direction::Rx;
  p.kind = kind;
  p.seq = seq;
  p.bytes = bytes;
  p.flow = flow;
  return p;
}

// Receiver-side packet for flow `k` (given in receive direction).
inline atfn::Packet tx(const atfn::FlowKey& k, atfn::PacketKind kind, atfn::FlowId flow = 0) {
  atfn::Packet p;
  p.key = atfn::reverse_key(k);
  p.direction = atfn::Direction::Tx;
  p.kind = kind;
  p.bytes = 64;
  p.flow = flow;
  return p;
}

inline atfn::TransmitDescriptor desc(const atfn::FlowKey& k, atfn::CoreId core) {
  return atfn::TransmitDescriptor{atfn::reverse_key(k), core};
}

// SYN, SYN-ACK, ACK through the table. Returns the admitted entry or null.
inline const atfn::ftable::FlowEntry* handshake(atfn::ftable::FlowTable& t, const atfn::FlowKey& k, atfn::SimTime at,
                                                atfn::CoreId core) {
  t.on_connection_tracking(rx(k, atfn::PacketKind::Syn, 0, 64), at, core);
  t.on_connection_tracking(tx(k, atfn::PacketKind::SynAck), at + 1, core);
  return t.on_connection_tracking(rx(k, atfn::PacketKind::Ack, 0, 64), at + 2, core);
}

}  // namespace th
