#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eywa {

// Simulated time in integer nanoseconds.
using SimTime = std::int64_t;

inline constexpr SimTime kNanosecond = 1;
inline constexpr SimTime kMicrosecond = 1'000;
inline constexpr SimTime kMillisecond = 1'000'000;
inline constexpr SimTime kSecond = 1'000'000'000;

SimTime seconds(double s);
double to_seconds(SimTime t);

// Error taxonomy. Everything thrown by the core derives from Error so the C
// boundary can map it onto a status code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

struct MacAddr {
    std::uint64_t value = 0;

    static constexpr MacAddr broadcast() { return MacAddr{0xffff'ffff'ffffULL}; }
    static constexpr MacAddr zero() { return MacAddr{0}; }

    // Locally administered instance MAC: 02:VV:VV:VV:II:II (24-bit VNI, 16-bit
    // per-tenant instance index).
    static MacAddr for_instance(std::uint32_t vni, std::uint16_t index);
    // Per-host agent tap MAC: 06:00:00:00:HH:HH.
    static MacAddr for_agent(std::uint32_t host_index);
    // VRRP virtual router MAC 00:00:5e:00:01:VRID.
    static MacAddr vrrp_virtual(std::uint8_t vrid);

    constexpr bool is_broadcast() const { return value == broadcast().value; }
    constexpr bool is_zero() const { return value == 0; }
    bool is_instance() const { return (value >> 40) == 0x02; }
    std::uint32_t instance_vni() const { return static_cast<std::uint32_t>((value >> 16) & 0xff'ffff); }

    std::string str() const;
    static MacAddr parse(std::string_view text);

    friend constexpr auto operator<=>(MacAddr, MacAddr) = default;
};

struct Ip4Addr {
    std::uint32_t value = 0;

    static constexpr Ip4Addr any() { return Ip4Addr{0}; }
    constexpr bool is_any() const { return value == 0; }

    std::string str() const;
    static Ip4Addr parse(std::string_view text);

    Ip4Addr offset(std::uint32_t n) const { return Ip4Addr{value + n}; }

    friend constexpr auto operator<=>(Ip4Addr, Ip4Addr) = default;
};

struct TenantId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(TenantId, TenantId) = default;
};

struct HostId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(HostId, HostId) = default;
};

struct Vni {
    static constexpr std::uint32_t kSpace = 1u << 24;  // 16,777,216
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(Vni, Vni) = default;
};

}  // namespace eywa
