#pragma once

// Model and training configuration, JSON round-trippable so runs are fully
// described by a config file plus a seed.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace lens::model {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public ModelError {
public:
    using ModelError::ModelError;
};

class ShapeMismatch : public ModelError {
public:
    using ModelError::ModelError;
};

class PositionOverflow : public ModelError {
public:
    using ModelError::ModelError;
};

class IdOutOfRange : public ModelError {
public:
    using ModelError::ModelError;
};

class NonFiniteLoss : public ModelError {
public:
    using ModelError::ModelError;
};

class EmptyEvalSet : public ModelError {
public:
    using ModelError::ModelError;
};

struct ModelConfig {
    int32_t d_model = 128;
    int32_t n_layers_enc = 2;
    int32_t n_layers_dec = 2;
    int32_t n_heads = 4;
    int32_t d_ffn = 512;
    int32_t vocab_size = 0;
    int32_t max_positions = 512;
    int32_t max_packets = 3;
    double dropout = 0.1;
    double alpha = 0.2;
    double beta = 0.2;
    uint64_t seed = 0;
    bool tie_lm_head = false;
    // Structural token ids, copied from the bound vocabulary.
    int32_t pad_id = 0;
    int32_t end_id = 1;
    int32_t pkt_id = 5;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

struct TrainConfig {
    int32_t batch_size = 8;
    int32_t grad_accum = 1;
    double lr = 1e-3;
    int64_t total_steps = 1000;
    int64_t warmup_steps = 100;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Linear warmup from 0 to peak over warmup_steps, then inverse-square-root
// decay peak * sqrt(warmup / step).
double lr_at(const TrainConfig& config, int64_t step);

} // namespace lens::model
