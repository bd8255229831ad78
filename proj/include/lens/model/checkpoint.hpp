#pragma once

// Checkpoint files: magic "LENSCKPT", version, the model configuration as a
// JSON blob, a provenance JSON blob (free-form, may be empty), a manifest of
// (name, shape, offset), then raw little-endian float32 tensors in manifest
// order.

#include "lens/model/config.hpp"
#include "lens/model/transformer.hpp"

#include <string>

namespace lens::model {

class CheckpointError : public ModelError {
public:
    using ModelError::ModelError;
};

struct Checkpoint {
    ModelConfig config;
    std::string provenance; // JSON text: seed, input checksums, step count
    Params<float> params;
};

void save_checkpoint(const Params<float>& params, const ModelConfig& config,
                     const std::string& path, const std::string& provenance = "");
Checkpoint load_checkpoint(const std::string& path);

} // namespace lens::model
