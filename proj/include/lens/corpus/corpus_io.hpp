#pragma once

// On-disk pre-training corpus: length-prefixed binary records under a
// "LENSCORP" header carrying version, vocabulary checksum, and seed.  A JSON
// manifest with per-task counts is written alongside the corpus file.

#include "lens/corpus/sampler.hpp"

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace lens::corpus {

struct CorpusMeta {
    uint32_t version = 1;
    uint64_t vocab_checksum = 0;
    uint64_t archive_checksum = 0; // file checksum of the source flow archive
    uint64_t seed = 0;
};

struct CorpusStats {
    uint64_t examples = 0;
    uint64_t pop_applied = 0;
    uint64_t htp_applied = 0;
    uint64_t htp_homologous = 0;
    uint64_t heterologous = 0;
    uint64_t total_spans = 0;
    uint64_t forced_spans = 0;
};

std::string manifest_path(const std::string& corpus_path);

class CorpusWriter {
public:
    CorpusWriter(const std::string& path, const CorpusMeta& meta);
    void write(const PretrainExample& example);
    // Flushes the record stream and writes the manifest sidecar.
    void close();
    const CorpusStats& stats() const { return stats_; }

private:
    std::ofstream out_;
    std::string path_;
    CorpusMeta meta_;
    CorpusStats stats_;
    bool closed_ = false;
};

class CorpusReader {
public:
    explicit CorpusReader(const std::string& path);
    const CorpusMeta& meta() const { return meta_; }
    // False at clean end of file; throws CorpusError on truncation.
    bool next(PretrainExample& out);

    static std::vector<PretrainExample> read_all(const std::string& path,
                                                 CorpusMeta* meta = nullptr);

private:
    std::ifstream in_;
    std::string path_;
    CorpusMeta meta_;
};

} // namespace lens::corpus
