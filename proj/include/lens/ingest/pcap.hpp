#pragma once

#include "lens/ingest/packet.hpp"

#include <string>
#include <vector>

namespace lens::ingest {

// Classic pcap only (magic 0xa1b2c3d4, either endianness). pcapng is not
// supported. Throws BadMagic / TruncatedRecord with the offending byte offset.
std::vector<RawPacket> parse_pcap(const std::string& path);

// Same reader over an in-memory buffer; `name` is used in diagnostics.
std::vector<RawPacket> parse_pcap_buffer(const std::vector<uint8_t>& data, const std::string& name);

} // namespace lens::ingest
