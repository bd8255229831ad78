#include "lens/ingest/flow.hpp"

#include "lens/util/hex.hpp"

#include "json.hpp"

#include <algorithm>

namespace lens::ingest {

namespace {

constexpr size_t kEthHeaderSize = 14;
constexpr uint16_t kEtherTypeIPv4 = 0x0800;
constexpr uint32_t kLinkTypeEthernet = 1;

uint16_t be16(const uint8_t* p) { return static_cast<uint16_t>((p[0] << 8) | p[1]); }
uint32_t be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

struct ParseOutcome {
    bool ok = false;
    std::string reason;
    ParsedPacket packet;
    Endpoint src, dst;
};

ParseOutcome parse_frame(const RawPacket& raw, size_t arrival_index) {
    ParseOutcome out;
    const auto& b = raw.bytes;

    if (raw.link_type != kLinkTypeEthernet) {
        out.reason = "non-ethernet-link";
        return out;
    }
    if (b.size() < kEthHeaderSize) {
        out.reason = "short-frame";
        return out;
    }
    uint16_t ethertype = be16(b.data() + 12);
    if (ethertype != kEtherTypeIPv4) {
        out.reason = "non-ipv4";
        return out;
    }
    size_t ip_off = kEthHeaderSize;
    if (b.size() < ip_off + 20) {
        out.reason = "short-ipv4-header";
        return out;
    }
    const uint8_t* ip = b.data() + ip_off;
    if ((ip[0] >> 4) != 4) {
        out.reason = "non-ipv4";
        return out;
    }
    size_t ihl = static_cast<size_t>(ip[0] & 0x0f) * 4;
    if (ihl < 20 || b.size() < ip_off + ihl) {
        out.reason = "short-ipv4-header";
        return out;
    }
    uint8_t proto = ip[9];
    size_t tr_off = ip_off + ihl;
    size_t header_end;
    Transport transport;
    if (proto == 6) {
        transport = Transport::TCP;
        if (b.size() < tr_off + 20) {
            out.reason = "short-tcp-header";
            return out;
        }
        size_t data_off = static_cast<size_t>(b[tr_off + 12] >> 4) * 4;
        if (data_off < 20 || b.size() < tr_off + data_off) {
            out.reason = "short-tcp-header";
            return out;
        }
        header_end = tr_off + data_off;
    } else if (proto == 17) {
        transport = Transport::UDP;
        if (b.size() < tr_off + 8) {
            out.reason = "short-udp-header";
            return out;
        }
        header_end = tr_off + 8;
    } else {
        out.reason = "non-tcp-udp";
        return out;
    }

    out.src = Endpoint{be32(ip + 12), be16(b.data() + tr_off)};
    out.dst = Endpoint{be32(ip + 16), be16(b.data() + tr_off + 2)};
    out.packet.header_bytes.assign(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(header_end));
    out.packet.payload_bytes.assign(b.begin() + static_cast<std::ptrdiff_t>(header_end), b.end());
    out.packet.arrival_index = arrival_index;
    out.packet.ip_offset = static_cast<uint16_t>(ip_off);
    out.packet.transport_offset = static_cast<uint16_t>(tr_off);
    out.packet.transport = transport;
    out.ok = true;
    return out;
}

} // namespace

std::string endpoint_to_string(const Endpoint& e) {
    return std::to_string((e.ip >> 24) & 0xff) + "." + std::to_string((e.ip >> 16) & 0xff) + "." +
           std::to_string((e.ip >> 8) & 0xff) + "." + std::to_string(e.ip & 0xff) + ":" +
           std::to_string(e.port);
}

FlowExtraction extract_flows(const std::vector<RawPacket>& packets) {
    FlowExtraction result;
    std::map<FlowKey, size_t> index; // key -> position in result.flows

    for (size_t i = 0; i < packets.size(); ++i) {
        ParseOutcome parsed = parse_frame(packets[i], i);
        if (!parsed.ok) {
            ++result.skipped;
            ++result.skip_reasons[parsed.reason];
            continue;
        }
        FlowKey key = FlowKey::canonical(parsed.src, parsed.dst, parsed.packet.transport);
        auto it = index.find(key);
        if (it == index.end()) {
            SessionFlow flow;
            flow.key = key;
            flow.first_src = parsed.src;
            flow.first_dst = parsed.dst;
            flow.packets.push_back(std::move(parsed.packet));
            index.emplace(key, result.flows.size());
            result.flows.push_back(std::move(flow));
        } else {
            result.flows[it->second].packets.push_back(std::move(parsed.packet));
        }
    }
    return result;
}

SessionFlow anonymize(const SessionFlow& flow) {
    if (flow.anonymized)
        throw AlreadyAnonymized("anonymize: flow already anonymized");

    SessionFlow out = flow;
    out.anonymized = true;
    for (ParsedPacket& pkt : out.packets) {
        auto& h = pkt.header_bytes;
        size_t ip = pkt.ip_offset;
        size_t tr = pkt.transport_offset;
        // IPv4 source/destination addresses and header checksum.
        std::fill(h.begin() + ip + 12, h.begin() + ip + 20, uint8_t{0});
        h[ip + 10] = 0;
        h[ip + 11] = 0;
        // Transport ports.
        std::fill(h.begin() + tr, h.begin() + tr + 4, uint8_t{0});
        // Transport checksum: TCP at offset 16, UDP at offset 6.
        size_t ck = tr + (pkt.transport == Transport::TCP ? 16 : 6);
        h[ck] = 0;
        h[ck + 1] = 0;
    }
    return out;
}

std::vector<HexUnit> to_hex_unit(const SessionFlow& flow, Granularity granularity, int max_packets) {
    if (!flow.anonymized)
        throw NotAnonymized("to_hex_unit: flow must be anonymized first");
    if (flow.packets.empty())
        throw EmptyFlow("to_hex_unit: flow has no packets");

    if (max_packets < 0) max_packets = (granularity == Granularity::FLOW) ? 3 : 5;
    if (granularity == Granularity::FLOW && max_packets > 3)
        throw IngestError("to_hex_unit: FLOW units carry at most 3 packets");

    size_t take = std::min(flow.packets.size(), static_cast<size_t>(max_packets));
    std::vector<HexUnit> units;
    if (granularity == Granularity::FLOW) {
        HexUnit unit;
        unit.granularity = Granularity::FLOW;
        for (size_t i = 0; i < take; ++i) {
            const ParsedPacket& p = flow.packets[i];
            unit.packets.push_back(PacketHex{to_hex(p.header_bytes), to_hex(p.payload_bytes)});
        }
        units.push_back(std::move(unit));
    } else {
        for (size_t i = 0; i < take; ++i) {
            const ParsedPacket& p = flow.packets[i];
            HexUnit unit;
            unit.granularity = Granularity::PACKET;
            unit.packets.push_back(PacketHex{to_hex(p.header_bytes), to_hex(p.payload_bytes)});
            units.push_back(std::move(unit));
        }
    }
    return units;
}

std::string IngestReport::to_json() const {
    nlohmann::json j;
    j["files"] = files;
    j["packets"] = packets;
    j["flows"] = flows;
    j["skipped"] = skipped;
    j["reasons"] = reasons;
    return j.dump(2);
}

} // namespace lens::ingest
