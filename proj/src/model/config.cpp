#include "lens/model/config.hpp"

#include <cmath>

#include "json.hpp"

namespace lens::model {

void ModelConfig::validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
        throw ConfigError("d_model must be a positive multiple of n_heads");
    if (n_layers_enc < 1 || n_layers_dec < 1)
        throw ConfigError("need at least one encoder and one decoder layer");
    if (d_ffn <= 0) throw ConfigError("d_ffn must be positive");
    if (vocab_size <= 0) throw ConfigError("vocab_size must be positive");
    if (max_positions <= 0) throw ConfigError("max_positions must be positive");
    if (max_packets <= 0) throw ConfigError("max_packets must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("alpha and beta must be >= 0");
    if (pad_id < 0 || pad_id >= vocab_size || end_id < 0 || end_id >= vocab_size ||
        pkt_id < 0 || pkt_id >= vocab_size)
        throw ConfigError("structural token ids must lie inside the vocabulary");
}

nlohmann::json ModelConfig::to_json() const {
    return nlohmann::json{
        {"d_model", d_model},
        {"n_layers_enc", n_layers_enc},
        {"n_layers_dec", n_layers_dec},
        {"n_heads", n_heads},
        {"d_ffn", d_ffn},
        {"vocab_size", vocab_size},
        {"max_positions", max_positions},
        {"max_packets", max_packets},
        {"dropout", dropout},
        {"alpha", alpha},
        {"beta", beta},
        {"seed", seed},
        {"tie_lm_head", tie_lm_head},
        {"pad_id", pad_id},
        {"end_id", end_id},
        {"pkt_id", pkt_id},
    };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers_enc = j.value("n_layers_enc", c.n_layers_enc);
    c.n_layers_dec = j.value("n_layers_dec", c.n_layers_dec);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ffn = j.value("d_ffn", c.d_ffn);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.max_packets = j.value("max_packets", c.max_packets);
    c.dropout = j.value("dropout", c.dropout);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.seed = j.value("seed", c.seed);
    c.tie_lm_head = j.value("tie_lm_head", c.tie_lm_head);
    c.pad_id = j.value("pad_id", c.pad_id);
    c.end_id = j.value("end_id", c.end_id);
    c.pkt_id = j.value("pkt_id", c.pkt_id);
    return c;
}

void TrainConfig::validate() const {
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (grad_accum <= 0) throw ConfigError("grad_accum must be positive");
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (total_steps <= 0) throw ConfigError("total_steps must be positive");
    if (warmup_steps < 0 || warmup_steps > total_steps)
        throw ConfigError("warmup_steps must lie in [0, total_steps]");
}

nlohmann::json TrainConfig::to_json() const {
    return nlohmann::json{
        {"batch_size", batch_size},
        {"grad_accum", grad_accum},
        {"lr", lr},
        {"total_steps", total_steps},
        {"warmup_steps", warmup_steps},
        {"weight_decay", weight_decay},
        {"adam_beta1", adam_beta1},
        {"adam_beta2", adam_beta2},
        {"adam_eps", adam_eps},
    };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.grad_accum = j.value("grad_accum", c.grad_accum);
    c.lr = j.value("lr", c.lr);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    return c;
}

double lr_at(const TrainConfig& config, int64_t step) {
    if (step < 0) throw ConfigError("schedule step must be >= 0");
    // No warmup (the fine-tuning setting): constant peak rate.
    if (config.warmup_steps == 0) return config.lr;
    if (step <= config.warmup_steps)
        return config.lr * static_cast<double>(step) /
               static_cast<double>(config.warmup_steps);
    return config.lr * std::sqrt(static_cast<double>(config.warmup_steps) /
                                 static_cast<double>(step));
}

} // namespace lens::model
