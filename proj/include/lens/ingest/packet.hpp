#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace lens::ingest {

struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadMagic : IngestError {
    using IngestError::IngestError;
};
struct TruncatedRecord : IngestError {
    using IngestError::IngestError;
};
struct AlreadyAnonymized : IngestError {
    using IngestError::IngestError;
};
struct NotAnonymized : IngestError {
    using IngestError::IngestError;
};
struct EmptyFlow : IngestError {
    using IngestError::IngestError;
};

// One pcap record, unparsed.
struct RawPacket {
    uint32_t ts_sec = 0;
    uint32_t ts_usec = 0;
    uint32_t link_type = 0;
    std::vector<uint8_t> bytes;
};

enum class Transport : uint8_t { TCP = 6, UDP = 17 };

struct Endpoint {
    uint32_t ip = 0;   // host byte order
    uint16_t port = 0;

    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

std::string endpoint_to_string(const Endpoint& e);

// Canonical bidirectional 5-tuple: endpoint_a <= endpoint_b so both
// directions of a conversation map to the same key.
struct FlowKey {
    Endpoint endpoint_a;
    Endpoint endpoint_b;
    Transport transport = Transport::TCP;

    static FlowKey canonical(Endpoint src, Endpoint dst, Transport t) {
        FlowKey k;
        if (dst < src) std::swap(src, dst);
        k.endpoint_a = src;
        k.endpoint_b = dst;
        k.transport = t;
        return k;
    }

    friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

// A packet split at the transport-payload offset. header_bytes covers the
// full frame up to and including the transport header (Ethernet + IPv4 +
// TCP/UDP); payload_bytes is the rest. Offsets are into header_bytes.
struct ParsedPacket {
    std::vector<uint8_t> header_bytes;
    std::vector<uint8_t> payload_bytes;
    size_t arrival_index = 0;
    uint16_t ip_offset = 0;
    uint16_t transport_offset = 0;
    Transport transport = Transport::TCP;
};

struct SessionFlow {
    FlowKey key;
    std::vector<ParsedPacket> packets; // sorted by arrival_index
    bool anonymized = false;
    // Endpoints as first seen (pre-anonymization direction of packet 0);
    // retained so generation-task labels can be derived after anonymization.
    Endpoint first_src;
    Endpoint first_dst;
};

enum class Granularity : uint8_t { FLOW = 0, PACKET = 1 };

struct PacketHex {
    std::string header_hex;
    std::string payload_hex;
};

// Hex serialization of one model input unit. FLOW units carry up to three
// packets with per-packet header/payload boundaries; PACKET units exactly one.
struct HexUnit {
    std::vector<PacketHex> packets;
    Granularity granularity = Granularity::FLOW;

    size_t packet_count() const { return packets.size(); }
    // Single-packet convenience accessors.
    const std::string& header_hex() const { return packets.at(0).header_hex; }
    const std::string& payload_hex() const { return packets.at(0).payload_hex; }
};

} // namespace lens::ingest
