#include "frames.hpp"

namespace eywa {

MacAddr l2_source(const Frame& f)
{
    return std::visit([](const auto& x) { return x.l2_src; }, f);
}

MacAddr l2_destination(const Frame& f)
{
    return std::visit([](const auto& x) { return x.l2_dst; }, f);
}

std::string_view to_string(ArpKind kind)
{
    switch (kind) {
    case ArpKind::VRtoVM_Request: return "VRtoVM_Request";
    case ArpKind::VMtoVR_Request: return "VMtoVR_Request";
    case ArpKind::VMtoVM_Request: return "VMtoVM_Request";
    case ArpKind::VRtoVM_Reply: return "VRtoVM_Reply";
    case ArpKind::VMtoVR_Reply: return "VMtoVR_Reply";
    case ArpKind::VMtoVM_Reply: return "VMtoVM_Reply";
    case ArpKind::GARP_VRtoVR: return "GARP_VRtoVR";
    }
    return "?";
}

ArpFrame make_arp_request(Ip4Addr sender_ip, MacAddr sender_mac, Ip4Addr target_ip, std::uint32_t seq)
{
    ArpFrame f;
    f.op = ArpOp::Request;
    f.sender_ip = sender_ip;
    f.sender_mac = sender_mac;
    f.target_ip = target_ip;
    f.target_mac = MacAddr::zero();
    f.l2_dst = MacAddr::broadcast();
    f.l2_src = sender_mac;
    f.seq = seq;
    return f;
}

ArpFrame make_arp_reply(const ArpFrame& request, Ip4Addr answer_ip, MacAddr answer_mac)
{
    ArpFrame f;
    f.op = ArpOp::Reply;
    f.sender_ip = answer_ip;
    f.sender_mac = answer_mac;
    f.target_ip = request.sender_ip;
    f.target_mac = request.sender_mac;
    f.l2_dst = request.sender_mac;
    f.l2_src = answer_mac;
    f.seq = request.seq;
    return f;
}

ArpFrame make_garp(Ip4Addr ip, MacAddr mac)
{
    return make_arp_request(ip, mac, ip);
}

ArpKind classify(const ArpFrame& frame, Ip4Addr gateway_ip)
{
    if (frame.is_garp())
        return ArpKind::GARP_VRtoVR;
    if (frame.is_request()) {
        if (frame.sender_ip == gateway_ip)
            return ArpKind::VRtoVM_Request;
        if (frame.target_ip == gateway_ip)
            return ArpKind::VMtoVR_Request;
        return ArpKind::VMtoVM_Request;
    }
    if (frame.sender_ip == gateway_ip)
        return ArpKind::VRtoVM_Reply;
    if (frame.target_ip == gateway_ip)
        return ArpKind::VMtoVR_Reply;
    return ArpKind::VMtoVM_Reply;
}

TunnelFrame encapsulate(const Frame& frame, Vni vni, HostId src_host, TunnelDst dst)
{
    if (vni.value >= Vni::kSpace)
        throw ProtocolError("VNI " + std::to_string(vni.value) + " outside the 24-bit space");
    MacAddr src = l2_source(frame);
    if (src.is_instance() && src.instance_vni() != vni.value) {
        throw ProtocolError("frame from " + src.str() + " (VNI " + std::to_string(src.instance_vni()) +
                            ") cannot be tunneled on VNI " + std::to_string(vni.value));
    }
    return TunnelFrame{vni, src_host, dst, frame};
}

const Frame& decapsulate(const TunnelFrame& tunnel)
{
    return tunnel.inner;
}

}  // namespace eywa
