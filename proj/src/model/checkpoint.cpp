#include "lens/model/checkpoint.hpp"

#include "lens/util/binio.hpp"

#include "json.hpp"

#include <fstream>
#include <map>

namespace lens::model {

namespace {
constexpr char kMagic[8] = {'L', 'E', 'N', 'S', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const Params<float>& params, const ModelConfig& config,
                     const std::string& path, const std::string& provenance) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 8);
    binio::put_u32(out, 1);
    binio::put_string(out, config.to_json().dump());
    binio::put_string(out, provenance);

    struct Entry {
        std::string name;
        const MatX<float>* mat;
    };
    std::vector<Entry> entries;
    params.visit([&](const std::string& name, const MatX<float>& m) {
        entries.push_back({name, &m});
    });

    binio::put_u32(out, static_cast<uint32_t>(entries.size()));
    uint64_t offset = 0;
    for (const Entry& e : entries) {
        binio::put_string(out, e.name);
        binio::put_u32(out, static_cast<uint32_t>(e.mat->rows()));
        binio::put_u32(out, static_cast<uint32_t>(e.mat->cols()));
        binio::put_u64(out, offset);
        offset += static_cast<uint64_t>(e.mat->size()) * 4;
    }
    for (const Entry& e : entries)
        for (Eigen::Index i = 0; i < e.mat->size(); ++i)
            binio::put_f32(out, e.mat->data()[i]);
    if (!out) throw CheckpointError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::string(magic, 8) != std::string(kMagic, 8))
        throw CheckpointError("not a checkpoint file (bad magic): " + path);
    uint32_t version = binio::get_u32(in);
    if (version != 1)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    try {
        ckpt.config = ModelConfig::from_json(nlohmann::json::parse(binio::get_string(in)));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad config blob in checkpoint: ") + e.what());
    }
    ckpt.provenance = binio::get_string(in);
    ckpt.params = alloc_params<float>(ckpt.config);

    std::map<std::string, MatX<float>*> by_name;
    ckpt.params.visit([&](const std::string& name, MatX<float>& m) { by_name[name] = &m; });

    uint32_t n_tensors = binio::get_u32(in);
    if (n_tensors != by_name.size())
        throw CheckpointError("checkpoint lists " + std::to_string(n_tensors) +
                              " tensors, model needs " + std::to_string(by_name.size()));
    struct Entry {
        std::string name;
        uint32_t rows, cols;
        uint64_t offset;
    };
    std::vector<Entry> entries;
    entries.reserve(n_tensors);
    uint64_t expect_offset = 0;
    for (uint32_t i = 0; i < n_tensors; ++i) {
        Entry e;
        e.name = binio::get_string(in);
        e.rows = binio::get_u32(in);
        e.cols = binio::get_u32(in);
        e.offset = binio::get_u64(in);
        auto it = by_name.find(e.name);
        if (it == by_name.end())
            throw CheckpointError("unknown tensor in checkpoint: " + e.name);
        if (static_cast<Eigen::Index>(e.rows) != it->second->rows() ||
            static_cast<Eigen::Index>(e.cols) != it->second->cols())
            throw CheckpointError("shape mismatch for tensor " + e.name);
        if (e.offset != expect_offset)
            throw CheckpointError("non-contiguous tensor offset for " + e.name);
        expect_offset += static_cast<uint64_t>(e.rows) * e.cols * 4;
        entries.push_back(std::move(e));
    }
    for (const Entry& e : entries) {
        MatX<float>& m = *by_name[e.name];
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = binio::get_f32(in);
    }
    return ckpt;
}

} // namespace lens::model
