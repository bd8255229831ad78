#pragma once

#include "lens/ingest/packet.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lens::ingest {

// Flow archive: the on-disk product of `lens ingest`, consumed by the
// tokenizer trainer and corpus builder. Little-endian, magic "LENSFLOW".
struct FlowArchive {
    uint32_t version = 1;
    uint64_t seed = 0;
    std::vector<std::pair<std::string, uint64_t>> inputs; // (path, checksum)
    std::vector<SessionFlow> flows;
};

void save_flow_archive(const FlowArchive& archive, const std::string& path);
FlowArchive load_flow_archive(const std::string& path);

} // namespace lens::ingest
