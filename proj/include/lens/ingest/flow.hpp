#pragma once

#include "lens/ingest/packet.hpp"

#include <map>
#include <string>
#include <vector>

namespace lens::ingest {

struct FlowExtraction {
    std::vector<SessionFlow> flows;   // order of first appearance
    size_t skipped = 0;               // packets not assigned to any flow
    std::map<std::string, size_t> skip_reasons;
};

// Groups IPv4 TCP/UDP packets into bidirectional session flows. Non-IPv4
// and non-TCP/UDP packets are skipped and counted, never an error.
FlowExtraction extract_flows(const std::vector<RawPacket>& packets);

// Returns a copy with IPs, ports and checksums zeroed in every packet's
// header bytes. Throws AlreadyAnonymized on a second application.
SessionFlow anonymize(const SessionFlow& flow);

// FLOW: one unit covering the first max_packets packets (default 3, cap 3).
// PACKET: one single-packet unit per packet, at most max_packets (default 5).
std::vector<HexUnit> to_hex_unit(const SessionFlow& flow, Granularity granularity, int max_packets = -1);

// Aggregate counters for the ingest report JSON.
struct IngestReport {
    size_t files = 0;
    size_t packets = 0;
    size_t flows = 0;
    size_t skipped = 0;
    std::map<std::string, size_t> reasons;

    std::string to_json() const;
};

} // namespace lens::ingest
