#pragma once

// Training loop machinery: AdamW with decoupled weight decay, the warmup /
// inverse-sqrt schedule, gradient accumulation, JSON-lines training logs,
// finite-difference gradient checking, and corpus-level evaluation.

#include "lens/model/config.hpp"
#include "lens/model/transformer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace lens::model {

template <typename T>
std::vector<MatX<T>*> tensor_list(Params<T>& p) {
    std::vector<MatX<T>*> out;
    p.visit([&](const std::string&, MatX<T>& m) { out.push_back(&m); });
    return out;
}

template <typename T>
std::vector<std::string> tensor_names(const Params<T>& p) {
    std::vector<std::string> out;
    p.visit([&](const std::string& name, const MatX<T>&) { out.push_back(name); });
    return out;
}

template <typename T>
void check_finite(const Params<T>& p, const char* what) {
    std::string bad;
    p.visit([&](const std::string& name, const MatX<T>& m) {
        if (bad.empty() && !m.allFinite()) bad = name;
    });
    if (!bad.empty())
        throw NonFiniteLoss(std::string(what) + " contains non-finite values in " + bad);
}

// Per-head gradient norms, the diagnostic attached to aborted steps.
template <typename T>
std::string grad_norm_report(const Params<T>& g) {
    std::ostringstream os;
    os << "grad norms:";
    double total = 0.0;
    g.visit([&](const std::string& name, const MatX<T>& m) {
        double n = std::sqrt(static_cast<double>(m.template cast<double>().squaredNorm()));
        total += n * n;
        if (name == "lm_head" || name == "pop_head" || name == "htp_head" ||
            name == "token_table")
            os << " " << name << "=" << n;
    });
    os << " total=" << std::sqrt(total);
    return os.str();
}

template <typename T>
struct AdamState {
    Params<T> m, v;
    int64_t updates = 0;
};

template <typename T>
AdamState<T> make_adam_state(const Params<T>& params) {
    return AdamState<T>{zeros_like(params), zeros_like(params), 0};
}

// One decoupled-weight-decay Adam update.  Decay skips normalization gains.
template <typename T>
void adamw_update(Params<T>& params, Params<T>& grads, AdamState<T>& state,
                  const TrainConfig& tc, double lr) {
    ++state.updates;
    const double t = static_cast<double>(state.updates);
    const double bc1 = 1.0 - std::pow(tc.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(tc.adam_beta2, t);
    auto ps = tensor_list(params);
    auto gs = tensor_list(grads);
    auto ms = tensor_list(state.m);
    auto vs = tensor_list(state.v);
    auto names = tensor_names(params);
    for (size_t i = 0; i < ps.size(); ++i) {
        auto& p = *ps[i];
        auto& g = *gs[i];
        auto& m = *ms[i];
        auto& v = *vs[i];
        m = tc.adam_beta1 * m + (1.0 - tc.adam_beta1) * g;
        v = (tc.adam_beta2 * v.array() + (1.0 - tc.adam_beta2) * g.array().square()).matrix();
        auto m_hat = m.array() / bc1;
        auto v_hat = v.array() / bc2;
        p.array() -= lr * (m_hat / (v_hat.sqrt() + tc.adam_eps));
        if (tc.weight_decay > 0.0 && !is_norm_gain(names[i]))
            p.array() -= lr * tc.weight_decay * p.array();
        if (!p.allFinite())
            throw NonFiniteLoss("parameters non-finite after update in " + names[i]);
    }
}

struct LossRecord {
    int64_t step = 0; // completed optimizer updates
    double lr = 0.0;
    double msp = 0.0, pop = 0.0, htp = 0.0, total = 0.0;
    bool applied_update = false;

    std::string to_json_line() const {
        std::ostringstream os;
        os.precision(10);
        os << "{\"step\":" << step << ",\"lr\":" << lr << ",\"msp\":" << msp
           << ",\"pop\":" << pop << ",\"htp\":" << htp << ",\"total\":" << total << "}";
        return os.str();
    }
};

class TrainLog {
public:
    TrainLog() = default;
    explicit TrainLog(const std::string& path) : out_(path, std::ios::trunc) {
        if (!out_) throw ConfigError("cannot open training log: " + path);
    }
    void append(const LossRecord& rec) {
        if (out_.is_open()) out_ << rec.to_json_line() << "\n" << std::flush;
    }

private:
    std::ofstream out_;
};

template <typename T>
class Trainer {
public:
    Trainer(const ModelConfig& mc, const TrainConfig& tc)
        : mc_(mc), tc_(tc), init_rng_(mc.seed), drop_rng_(mc.seed ^ 0x5851f42d4c957f2dULL) {
        mc_.validate();
        tc_.validate();
        params_ = init_params<T>(mc_, init_rng_);
        state_ = make_adam_state(params_);
        accum_ = zeros_like(params_);
    }

    // Adopt externally loaded parameters (e.g. a pre-trained checkpoint).
    void set_params(Params<T> p) {
        params_ = std::move(p);
        state_ = make_adam_state(params_);
        accum_ = zeros_like(params_);
        micro_in_cycle_ = 0;
    }

    // One micro-batch: forward, backward, and an optimizer update every
    // grad_accum micro-steps.  The returned record carries this
    // micro-batch's losses and, when an update fired, the rate used.
    LossRecord micro_step(const Batch& batch) {
        Rng* drop = mc_.dropout > 0.0 ? &drop_rng_ : nullptr;
        LossBreakdown lb;
        try {
            lb = forward_backward(params_, mc_, batch, Mode::Train, drop, &accum_);
        } catch (const NonFiniteLoss& e) {
            throw NonFiniteLoss(std::string(e.what()) + "; " + grad_norm_report(accum_));
        }
        ++micro_in_cycle_;
        LossRecord rec;
        rec.msp = lb.msp;
        rec.pop = lb.pop;
        rec.htp = lb.htp;
        rec.total = lb.total;
        rec.step = state_.updates;
        if (micro_in_cycle_ >= tc_.grad_accum) {
            check_grads();
            if (tc_.grad_accum > 1)
                accum_.visit([&](const std::string&, MatX<T>& m) {
                    m /= static_cast<T>(tc_.grad_accum);
                });
            double lr = lr_at(tc_, state_.updates + 1);
            adamw_update(params_, accum_, state_, tc_, lr);
            accum_.visit([](const std::string&, MatX<T>& m) { m.setZero(); });
            micro_in_cycle_ = 0;
            rec.applied_update = true;
            rec.lr = lr;
            rec.step = state_.updates;
        }
        return rec;
    }

    const Params<T>& params() const { return params_; }
    Params<T>& params() { return params_; }
    const ModelConfig& model_config() const { return mc_; }
    const TrainConfig& train_config() const { return tc_; }
    int64_t updates() const { return state_.updates; }

private:
    void check_grads() {
        std::string bad;
        accum_.visit([&](const std::string& name, const MatX<T>& m) {
            if (bad.empty() && !m.allFinite()) bad = name;
        });
        if (!bad.empty())
            throw NonFiniteLoss("non-finite gradient in " + bad + "; " +
                                grad_norm_report(accum_));
    }

    ModelConfig mc_;
    TrainConfig tc_;
    Rng init_rng_;
    Rng drop_rng_;
    Params<T> params_;
    AdamState<T> state_;
    Params<T> accum_;
    int32_t micro_in_cycle_ = 0;
};

// Aggregated eval-mode losses and accuracies over a full example set.
template <typename T>
LossBreakdown evaluate(const Params<T>& params, const ModelConfig& cfg,
                       const std::vector<BatchExample>& examples, size_t chunk = 16) {
    if (examples.empty()) throw EmptyEvalSet("no examples to evaluate");
    LossBreakdown agg;
    for (size_t start = 0; start < examples.size(); start += chunk) {
        Batch b;
        for (size_t i = start; i < std::min(examples.size(), start + chunk); ++i)
            b.examples.push_back(examples[i]);
        LossBreakdown lb = forward_backward(params, cfg, b, Mode::Eval, nullptr,
                                            static_cast<Params<T>*>(nullptr));
        agg.msp_sum += lb.msp_sum;
        agg.pop_sum += lb.pop_sum;
        agg.htp_sum += lb.htp_sum;
        agg.msp_tokens += lb.msp_tokens;
        agg.msp_correct += lb.msp_correct;
        agg.pop_packets += lb.pop_packets;
        agg.pop_correct += lb.pop_correct;
        agg.pop_same_correct += lb.pop_same_correct;
        agg.htp_examples += lb.htp_examples;
        agg.htp_correct += lb.htp_correct;
    }
    agg.msp = agg.msp_tokens > 0 ? agg.msp_sum / static_cast<double>(agg.msp_tokens) : 0.0;
    agg.pop = agg.pop_packets > 0 ? agg.pop_sum / static_cast<double>(agg.pop_packets) : 0.0;
    agg.htp = agg.htp_examples > 0 ? agg.htp_sum / static_cast<double>(agg.htp_examples) : 0.0;
    agg.total = agg.msp; // filled by caller's config weights when needed
    return agg;
}

// Fraction of masked target tokens whose argmax logit is the target.
template <typename T>
double msp_token_accuracy(const Params<T>& params, const ModelConfig& cfg,
                          const std::vector<BatchExample>& examples) {
    LossBreakdown agg = evaluate(params, cfg, examples);
    if (agg.msp_tokens == 0) throw EmptyEvalSet("no target tokens in evaluation set");
    return static_cast<double>(agg.msp_correct) / static_cast<double>(agg.msp_tokens);
}

// Central finite differences against the analytic gradient on a sampled
// coordinate subset covering every tensor.  Call with double parameters.
template <typename T>
double grad_check(Params<T>& params, const ModelConfig& cfg, const Batch& batch,
                  double epsilon = 1e-5, size_t min_coords = 200, uint64_t seed = 7) {
    Params<T> grads = zeros_like(params);
    forward_backward(params, cfg, batch, Mode::Eval, nullptr, &grads);

    auto ps = tensor_list(params);
    auto gs = tensor_list(grads);
    Rng rng(seed);
    size_t per_tensor = (min_coords + ps.size() - 1) / ps.size();
    double max_rel = 0.0;
    for (size_t i = 0; i < ps.size(); ++i) {
        auto& p = *ps[i];
        if (p.size() == 0) continue;
        for (size_t k = 0; k < per_tensor; ++k) {
            Eigen::Index idx = static_cast<Eigen::Index>(
                rng.below(static_cast<uint64_t>(p.size())));
            T saved = p.data()[idx];
            p.data()[idx] = saved + static_cast<T>(epsilon);
            double up = forward_backward(params, cfg, batch, Mode::Eval, nullptr,
                                         static_cast<Params<T>*>(nullptr))
                            .total;
            p.data()[idx] = saved - static_cast<T>(epsilon);
            double down = forward_backward(params, cfg, batch, Mode::Eval, nullptr,
                                           static_cast<Params<T>*>(nullptr))
                              .total;
            p.data()[idx] = saved;
            double numeric = (up - down) / (2.0 * epsilon);
            double analytic = static_cast<double>(gs[i]->data()[idx]);
            double denom = std::max(1e-8, std::abs(numeric) + std::abs(analytic));
            max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
        }
    }
    return max_rel;
}

} // namespace lens::model
