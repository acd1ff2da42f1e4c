#include "types.hpp"

#include <cmath>
#include <cstdio>

namespace eywa {

SimTime seconds(double s)
{
    return static_cast<SimTime>(std::llround(s * static_cast<double>(kSecond)));
}

double to_seconds(SimTime t)
{
    return static_cast<double>(t) / static_cast<double>(kSecond);
}

MacAddr MacAddr::for_instance(std::uint32_t vni, std::uint16_t index)
{
    return MacAddr{(0x02ULL << 40) | (static_cast<std::uint64_t>(vni & 0xff'ffff) << 16) | index};
}

MacAddr MacAddr::for_agent(std::uint32_t host_index)
{
    return MacAddr{(0x06ULL << 40) | (host_index & 0xffff)};
}

MacAddr MacAddr::vrrp_virtual(std::uint8_t vrid)
{
    return MacAddr{0x00'00'5e'00'01'00ULL | vrid};
}

std::string MacAddr::str() const
{
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x",
                  static_cast<unsigned>((value >> 40) & 0xff), static_cast<unsigned>((value >> 32) & 0xff),
                  static_cast<unsigned>((value >> 24) & 0xff), static_cast<unsigned>((value >> 16) & 0xff),
                  static_cast<unsigned>((value >> 8) & 0xff), static_cast<unsigned>(value & 0xff));
    return buf;
}

MacAddr MacAddr::parse(std::string_view text)
{
    if (!text.empty() && text.back() == ':')
        throw ValidationError("malformed MAC address '" + std::string(text) + "'");
    std::uint64_t v = 0;
    int octets = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned octet = 0;
        int digits = 0;
        while (i < text.size() && text[i] != ':') {
            char c = text[i];
            unsigned d;
            if (c >= '0' && c <= '9')
                d = static_cast<unsigned>(c - '0');
            else if (c >= 'a' && c <= 'f')
                d = static_cast<unsigned>(c - 'a' + 10);
            else if (c >= 'A' && c <= 'F')
                d = static_cast<unsigned>(c - 'A' + 10);
            else
                throw ValidationError("malformed MAC address '" + std::string(text) + "'");
            octet = octet * 16 + d;
            ++digits;
            ++i;
        }
        if (digits == 0 || digits > 2)
            throw ValidationError("malformed MAC address '" + std::string(text) + "'");
        v = (v << 8) | octet;
        ++octets;
        if (i < text.size())
            ++i;
    }
    if (octets != 6)
        throw ValidationError("malformed MAC address '" + std::string(text) + "'");
    return MacAddr{v};
}

std::string Ip4Addr::str() const
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", (value >> 24) & 0xff, (value >> 16) & 0xff, (value >> 8) & 0xff,
                  value & 0xff);
    return buf;
}

Ip4Addr Ip4Addr::parse(std::string_view text)
{
    std::uint32_t v = 0;
    int parts = 0;
    std::size_t i = 0;
    while (parts < 4) {
        unsigned part = 0;
        int digits = 0;
        while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
            part = part * 10 + static_cast<unsigned>(text[i] - '0');
            ++digits;
            ++i;
        }
        if (digits == 0 || digits > 3 || part > 255)
            throw ValidationError("malformed IPv4 address '" + std::string(text) + "'");
        v = (v << 8) | part;
        ++parts;
        if (parts < 4) {
            if (i >= text.size() || text[i] != '.')
                throw ValidationError("malformed IPv4 address '" + std::string(text) + "'");
            ++i;
        }
    }
    if (i != text.size())
        throw ValidationError("malformed IPv4 address '" + std::string(text) + "'");
    return Ip4Addr{v};
}

}  // namespace eywa
