#pragma once

#include "types.hpp"

#include <optional>
#include <string_view>
#include <variant>

namespace eywa {

enum class ArpOp : std::uint8_t { Request, Reply };

// Structural ARP frame. `seq` is the per-request sequence number stamped by
// the requesting stack; replies echo the seq of the request they answer.
struct ArpFrame {
    ArpOp op = ArpOp::Request;
    Ip4Addr sender_ip;
    MacAddr sender_mac;
    Ip4Addr target_ip;
    MacAddr target_mac;
    MacAddr l2_dst;
    MacAddr l2_src;
    std::uint32_t seq = 0;

    bool is_request() const { return op == ArpOp::Request; }
    bool is_reply() const { return op == ArpOp::Reply; }
    bool is_broadcast() const { return l2_dst.is_broadcast(); }
    bool is_garp() const { return op == ArpOp::Request && sender_ip == target_ip && l2_dst.is_broadcast(); }

    friend bool operator==(const ArpFrame&, const ArpFrame&) = default;
};

enum class TrafficDirection : std::uint8_t { NorthSouth, EastWest, Private };

struct DataFrame {
    MacAddr l2_src;
    MacAddr l2_dst;
    Ip4Addr src_ip;
    Ip4Addr dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint64_t flow_id = 0;
    TrafficDirection direction = TrafficDirection::Private;

    friend bool operator==(const DataFrame&, const DataFrame&) = default;
};

using Frame = std::variant<ArpFrame, DataFrame>;

MacAddr l2_source(const Frame& f);
MacAddr l2_destination(const Frame& f);

struct HeadEndReplication {
    friend bool operator==(HeadEndReplication, HeadEndReplication) = default;
};

using TunnelDst = std::variant<HostId, HeadEndReplication>;

struct TunnelFrame {
    Vni vni;
    HostId src_vtep_host;
    TunnelDst dst;
    Frame inner;

    bool is_replicated() const { return std::holds_alternative<HeadEndReplication>(dst); }
};

enum class ArpKind : std::uint8_t {
    VRtoVM_Request,
    VMtoVR_Request,
    VMtoVM_Request,
    VRtoVM_Reply,
    VMtoVR_Reply,
    VMtoVM_Reply,
    GARP_VRtoVR,
};

inline constexpr ArpKind kAllArpKinds[] = {
    ArpKind::VRtoVM_Request, ArpKind::VMtoVR_Request, ArpKind::VMtoVM_Request, ArpKind::VRtoVM_Reply,
    ArpKind::VMtoVR_Reply,   ArpKind::VMtoVM_Reply,   ArpKind::GARP_VRtoVR,
};

std::string_view to_string(ArpKind kind);

ArpFrame make_arp_request(Ip4Addr sender_ip, MacAddr sender_mac, Ip4Addr target_ip, std::uint32_t seq = 0);

// Unicast reply answering `request` on behalf of (answer_ip, answer_mac).
ArpFrame make_arp_reply(const ArpFrame& request, Ip4Addr answer_ip, MacAddr answer_mac);

ArpFrame make_garp(Ip4Addr ip, MacAddr mac);

// Keys on the tenant's shared gateway IP; agents have no other way of telling
// a VR apart from a VM.
ArpKind classify(const ArpFrame& frame, Ip4Addr gateway_ip);

// Throws ProtocolError when the inner frame originates from an instance of a
// tenant other than the one owning `vni`.
TunnelFrame encapsulate(const Frame& frame, Vni vni, HostId src_host, TunnelDst dst);
const Frame& decapsulate(const TunnelFrame& tunnel);

}  // namespace eywa
