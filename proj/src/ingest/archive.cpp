#include "lens/ingest/archive.hpp"

#include "lens/util/binio.hpp"

#include <fstream>

namespace lens::ingest {

namespace {
constexpr char kMagic[8] = {'L', 'E', 'N', 'S', 'F', 'L', 'O', 'W'};
}

void save_flow_archive(const FlowArchive& archive, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError("cannot open archive for writing: " + path);
    out.write(kMagic, 8);
    binio::put_u32(out, archive.version);
    binio::put_u64(out, archive.seed);
    binio::put_u32(out, static_cast<uint32_t>(archive.inputs.size()));
    for (const auto& [name, checksum] : archive.inputs) {
        binio::put_string(out, name);
        binio::put_u64(out, checksum);
    }
    binio::put_u32(out, static_cast<uint32_t>(archive.flows.size()));
    for (const SessionFlow& flow : archive.flows) {
        binio::put_u32(out, flow.key.endpoint_a.ip);
        binio::put_u16(out, flow.key.endpoint_a.port);
        binio::put_u32(out, flow.key.endpoint_b.ip);
        binio::put_u16(out, flow.key.endpoint_b.port);
        binio::put_u8(out, static_cast<uint8_t>(flow.key.transport));
        binio::put_u32(out, flow.first_src.ip);
        binio::put_u16(out, flow.first_src.port);
        binio::put_u32(out, flow.first_dst.ip);
        binio::put_u16(out, flow.first_dst.port);
        binio::put_u8(out, flow.anonymized ? 1 : 0);
        binio::put_u32(out, static_cast<uint32_t>(flow.packets.size()));
        for (const ParsedPacket& p : flow.packets) {
            binio::put_u32(out, static_cast<uint32_t>(p.arrival_index));
            binio::put_u16(out, p.ip_offset);
            binio::put_u16(out, p.transport_offset);
            binio::put_u8(out, static_cast<uint8_t>(p.transport));
            binio::put_bytes(out, p.header_bytes);
            binio::put_bytes(out, p.payload_bytes);
        }
    }
    if (!out) throw IngestError("write failure on archive: " + path);
}

FlowArchive load_flow_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open archive: " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::string(magic, 8) != std::string(kMagic, 8))
        throw IngestError("not a flow archive (bad magic): " + path);

    FlowArchive archive;
    archive.version = binio::get_u32(in);
    archive.seed = binio::get_u64(in);
    uint32_t n_inputs = binio::get_u32(in);
    for (uint32_t i = 0; i < n_inputs; ++i) {
        std::string name = binio::get_string(in);
        uint64_t checksum = binio::get_u64(in);
        archive.inputs.emplace_back(std::move(name), checksum);
    }
    uint32_t n_flows = binio::get_u32(in);
    archive.flows.resize(n_flows);
    for (SessionFlow& flow : archive.flows) {
        flow.key.endpoint_a.ip = binio::get_u32(in);
        flow.key.endpoint_a.port = binio::get_u16(in);
        flow.key.endpoint_b.ip = binio::get_u32(in);
        flow.key.endpoint_b.port = binio::get_u16(in);
        flow.key.transport = static_cast<Transport>(binio::get_u8(in));
        flow.first_src.ip = binio::get_u32(in);
        flow.first_src.port = binio::get_u16(in);
        flow.first_dst.ip = binio::get_u32(in);
        flow.first_dst.port = binio::get_u16(in);
        flow.anonymized = binio::get_u8(in) != 0;
        uint32_t n_packets = binio::get_u32(in);
        flow.packets.resize(n_packets);
        for (ParsedPacket& p : flow.packets) {
            p.arrival_index = binio::get_u32(in);
            p.ip_offset = binio::get_u16(in);
            p.transport_offset = binio::get_u16(in);
            p.transport = static_cast<Transport>(binio::get_u8(in));
            p.header_bytes = binio::get_bytes(in);
            p.payload_bytes = binio::get_bytes(in);
        }
    }
    return archive;
}

} // namespace lens::ingest
