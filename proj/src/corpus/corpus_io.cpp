#include "lens/corpus/corpus_io.hpp"

#include "lens/util/binio.hpp"

#include "json.hpp"

namespace lens::corpus {

namespace {
constexpr char kMagic[8] = {'L', 'E', 'N', 'S', 'C', 'O', 'R', 'P'};

void put_i32_list(std::ostream& out, const std::vector<int32_t>& v) {
    binio::put_u32(out, static_cast<uint32_t>(v.size()));
    for (int32_t x : v) binio::put_u32(out, static_cast<uint32_t>(x));
}

std::vector<int32_t> get_i32_list(std::istream& in) {
    uint32_t n = binio::get_u32(in);
    std::vector<int32_t> v(n);
    for (uint32_t i = 0; i < n; ++i) v[i] = static_cast<int32_t>(binio::get_u32(in));
    return v;
}
} // namespace

std::string manifest_path(const std::string& corpus_path) {
    return corpus_path + ".manifest.json";
}

CorpusWriter::CorpusWriter(const std::string& path, const CorpusMeta& meta)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path), meta_(meta) {
    if (!out_) throw CorpusError("cannot open corpus file for writing: " + path);
    out_.write(kMagic, 8);
    binio::put_u32(out_, meta_.version);
    binio::put_u64(out_, meta_.vocab_checksum);
    binio::put_u64(out_, meta_.archive_checksum);
    binio::put_u64(out_, meta_.seed);
}

void CorpusWriter::write(const PretrainExample& ex) {
    if (closed_) throw CorpusError("corpus writer already closed");
    put_i32_list(out_, ex.encoder_input.ids);
    binio::put_u32(out_, static_cast<uint32_t>(ex.encoder_input.header_mask.size()));
    for (uint8_t b : ex.encoder_input.header_mask) binio::put_u8(out_, b);
    put_i32_list(out_, ex.encoder_input.packet_ids);
    put_i32_list(out_, ex.msp.decoder_target);
    binio::put_u8(out_, ex.pop.applied ? 1 : 0);
    put_i32_list(out_, ex.pop.original_position);
    binio::put_u8(out_, ex.htp.applied ? 1 : 0);
    binio::put_u8(out_, ex.htp.label);
    binio::put_u8(out_, ex.z ? 1 : 0);

    ++stats_.examples;
    if (ex.pop.applied) ++stats_.pop_applied;
    if (ex.htp.applied) {
        ++stats_.htp_applied;
        if (ex.htp.label == 1) ++stats_.htp_homologous;
    }
    if (!ex.z) ++stats_.heterologous;
    stats_.total_spans += ex.msp.spans.size();
    if (ex.msp.forced) ++stats_.forced_spans;
    if (!out_) throw CorpusError("write failure on corpus file: " + path_);
}

void CorpusWriter::close() {
    if (closed_) return;
    closed_ = true;
    out_.flush();
    if (!out_) throw CorpusError("write failure on corpus file: " + path_);
    out_.close();

    nlohmann::json manifest{
        {"examples", stats_.examples},
        {"pop_applied", stats_.pop_applied},
        {"htp_applied", stats_.htp_applied},
        {"htp_homologous", stats_.htp_homologous},
        {"heterologous", stats_.heterologous},
        {"total_spans", stats_.total_spans},
        {"forced_spans", stats_.forced_spans},
        {"vocab_checksum", meta_.vocab_checksum},
        {"archive_checksum", meta_.archive_checksum},
        {"seed", meta_.seed},
        {"version", meta_.version},
    };
    std::ofstream mf(manifest_path(path_), std::ios::trunc);
    if (!mf) throw CorpusError("cannot write manifest: " + manifest_path(path_));
    mf << manifest.dump(2) << "\n";
}

CorpusReader::CorpusReader(const std::string& path)
    : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw CorpusError("cannot open corpus file: " + path);
    char magic[8];
    in_.read(magic, 8);
    if (in_.gcount() != 8 || std::string(magic, 8) != std::string(kMagic, 8))
        throw CorpusError("not a corpus file (bad magic): " + path);
    meta_.version = binio::get_u32(in_);
    meta_.vocab_checksum = binio::get_u64(in_);
    meta_.archive_checksum = binio::get_u64(in_);
    meta_.seed = binio::get_u64(in_);
}

bool CorpusReader::next(PretrainExample& out) {
    // Probe one byte to distinguish clean EOF from a truncated record.
    int c = in_.peek();
    if (c == std::char_traits<char>::eof()) return false;
    try {
        out = PretrainExample{};
        out.encoder_input.ids = get_i32_list(in_);
        uint32_t n_mask = binio::get_u32(in_);
        out.encoder_input.header_mask.resize(n_mask);
        for (uint32_t i = 0; i < n_mask; ++i)
            out.encoder_input.header_mask[i] = binio::get_u8(in_);
        out.encoder_input.packet_ids = get_i32_list(in_);
        out.msp.decoder_target = get_i32_list(in_);
        out.pop.applied = binio::get_u8(in_) != 0;
        out.pop.original_position = get_i32_list(in_);
        out.htp.applied = binio::get_u8(in_) != 0;
        out.htp.label = binio::get_u8(in_);
        out.z = binio::get_u8(in_) != 0;
    } catch (const std::exception& e) {
        throw CorpusError("truncated corpus record in " + path_ + ": " + e.what());
    }
    for (size_t j = 0; j < out.pop.original_position.size(); ++j)
        out.pop.same_position.push_back(
            out.pop.original_position[j] == static_cast<int32_t>(j) + 1 ? 1 : 0);
    return true;
}

std::vector<PretrainExample> CorpusReader::read_all(const std::string& path,
                                                    CorpusMeta* meta) {
    CorpusReader reader(path);
    if (meta) *meta = reader.meta();
    std::vector<PretrainExample> out;
    PretrainExample ex;
    while (reader.next(ex)) out.push_back(ex);
    return out;
}

} // namespace lens::corpus
