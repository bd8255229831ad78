#include "lens/ingest/pcap.hpp"

#include <cstring>
#include <fstream>

namespace lens::ingest {

namespace {

constexpr uint32_t kMagicNative = 0xa1b2c3d4u;
constexpr uint32_t kMagicSwapped = 0xd4c3b2a1u;
constexpr size_t kGlobalHeaderSize = 24;
constexpr size_t kRecordHeaderSize = 16;

uint32_t read_u32(const uint8_t* p, bool swap) {
    uint32_t v;
    std::memcpy(&v, p, 4);
    if (swap) v = __builtin_bswap32(v);
    return v;
}

} // namespace

std::vector<RawPacket> parse_pcap_buffer(const std::vector<uint8_t>& data, const std::string& name) {
    if (data.size() < kGlobalHeaderSize) {
        throw BadMagic(name + ": not a pcap file (only " + std::to_string(data.size()) +
                       " bytes, global header needs 24)");
    }
    uint32_t magic;
    std::memcpy(&magic, data.data(), 4);
    bool swap;
    if (magic == kMagicNative) {
        swap = false;
    } else if (magic == kMagicSwapped) {
        swap = true;
    } else {
        throw BadMagic(name + ": bad magic at offset 0 (not a classic pcap file)");
    }
    uint32_t link_type = read_u32(data.data() + 20, swap);

    std::vector<RawPacket> packets;
    size_t off = kGlobalHeaderSize;
    while (off < data.size()) {
        if (data.size() - off < kRecordHeaderSize) {
            throw TruncatedRecord(name + ": truncated record header at offset " + std::to_string(off));
        }
        RawPacket pkt;
        pkt.ts_sec = read_u32(data.data() + off, swap);
        pkt.ts_usec = read_u32(data.data() + off + 4, swap);
        uint32_t incl_len = read_u32(data.data() + off + 8, swap);
        off += kRecordHeaderSize;
        if (data.size() - off < incl_len) {
            throw TruncatedRecord(name + ": record at offset " + std::to_string(off - kRecordHeaderSize) +
                                  " claims " + std::to_string(incl_len) + " bytes but only " +
                                  std::to_string(data.size() - off) + " remain");
        }
        pkt.link_type = link_type;
        pkt.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(off),
                         data.begin() + static_cast<std::ptrdiff_t>(off + incl_len));
        off += incl_len;
        packets.push_back(std::move(pkt));
    }
    return packets;
}

std::vector<RawPacket> parse_pcap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open pcap file: " + path);
    std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_pcap_buffer(data, path);
}

} // namespace lens::ingest
