#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lens/eval/metrics.hpp"
#include "lens/eval/task.hpp"
#include "lens/model/trainer.hpp"

namespace lens::eval {

// Decoder target for a label: the pieces of its hex-encoded text, then END.
inline std::vector<int32_t> label_targets(const std::string& label,
                                          const tok::Vocabulary& vocab) {
    std::vector<int32_t> ids = tok::tokenize_hex(vocab, text_to_hex(label));
    ids.push_back(vocab.end_id);
    return ids;
}

inline model::BatchExample to_finetune_example(const tok::TokenSeq& prompt,
                                               const std::string& label,
                                               const tok::Vocabulary& vocab) {
    model::BatchExample ex;
    ex.enc_ids = prompt.ids;
    ex.enc_header_mask = prompt.header_mask;
    ex.enc_packet_ids = prompt.packet_ids;
    ex.dec_targets = label_targets(label, vocab);
    ex.htp_label = -1;
    return ex;
}

inline std::vector<model::BatchExample> build_finetune_examples(
    const TaskSpec& task, const std::vector<LabeledExample>& dataset,
    const tok::Vocabulary& vocab) {
    std::vector<model::BatchExample> out;
    out.reserve(dataset.size());
    for (const auto& ex : dataset)
        out.push_back(to_finetune_example(build_prompt(task, ex.input_unit, vocab), ex.label,
                                          vocab));
    return out;
}

// Epoch-based supervised training of the decoder on label targets; the loss
// is the per-token NLL of the target sequence.  Returns the tuned parameters.
template <typename T>
model::Params<T> finetune(model::Params<T> params, const model::ModelConfig& mc,
                          const model::TrainConfig& tc, const TaskSpec& task,
                          const std::vector<LabeledExample>& train_set,
                          const tok::Vocabulary& vocab, int epochs = 10,
                          model::TrainLog* log = nullptr) {
    if (train_set.empty()) throw EmptyDataset("fine-tuning dataset is empty");
    if (epochs < 1) throw EvalError("epochs must be >= 1");

    std::vector<model::BatchExample> examples = build_finetune_examples(task, train_set, vocab);

    model::Trainer<T> trainer(mc, tc);
    trainer.set_params(std::move(params));

    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    const size_t bs = static_cast<size_t>(tc.batch_size);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle_rng = Rng::substream(mc.seed, static_cast<uint64_t>(epoch) + 1);
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += bs) {
            model::Batch batch;
            for (size_t i = start; i < std::min(order.size(), start + bs); ++i)
                batch.examples.push_back(examples[order[i]]);
            model::LossRecord rec = trainer.micro_step(batch);
            if (log) log->append(rec);
        }
    }
    return std::move(trainer.params());
}

struct PredictResult {
    std::string text;
    bool truncated = false;
};

// Greedy decoding against a prompt: repeatedly extend the target with the
// argmax token until END (or PAD) appears or max_new tokens are emitted.
// Regular pieces are decoded to text; specials are dropped.
template <typename T>
PredictResult predict(const model::Params<T>& params, const model::ModelConfig& mc,
                      const tok::TokenSeq& prompt, const tok::Vocabulary& vocab,
                      int max_new = 32) {
    model::BatchExample ex;
    ex.enc_ids = prompt.ids;
    ex.enc_header_mask = prompt.header_mask;
    ex.enc_packet_ids = prompt.packet_ids;
    ex.htp_label = -1;

    std::vector<int32_t> generated;
    PredictResult res;
    res.truncated = true;
    for (int step = 0; step < max_new; ++step) {
        // Teacher-forced pass over [generated..., END]: the END placeholder
        // never enters the decoder input, and row |generated| of lm_logits
        // is the next-token distribution.
        ex.dec_targets = generated;
        ex.dec_targets.push_back(vocab.end_id);
        model::detail::ExampleCache<T> cache;
        model::detail::forward_example(params, mc, ex, model::Mode::Eval, nullptr, cache);
        Eigen::Index next;
        cache.lm_logits.row(static_cast<Eigen::Index>(generated.size())).maxCoeff(&next);
        int32_t id = static_cast<int32_t>(next);
        if (id == vocab.end_id || id == vocab.pad_id) {
            res.truncated = false;
            break;
        }
        generated.push_back(id);
    }

    // Only regular pieces carry text; specials and sentinels decode to
    // bracketed names that are not hex.
    std::vector<int32_t> pieces;
    for (int32_t id : generated)
        if (!vocab.is_special(id) && !vocab.is_sentinel(id)) pieces.push_back(id);
    res.text = hex_to_text(tok::decode(vocab, pieces));
    return res;
}

// Understanding: accuracy and macro-F1 under normalized exact match.
template <typename T>
EvalReport run_understanding(const model::Params<T>& params, const model::ModelConfig& mc,
                             const TaskSpec& task, const std::vector<LabeledExample>& test_set,
                             const tok::Vocabulary& vocab,
                             std::vector<std::string>* predictions = nullptr) {
    if (test_set.empty()) throw EmptyDataset("evaluation dataset is empty");
    std::vector<std::string> preds, golds;
    EvalReport rep;
    rep.task_name = task.name;
    rep.understanding = true;
    rep.examples = static_cast<int64_t>(test_set.size());
    for (const auto& le : test_set) {
        PredictResult pr =
            predict<T>(params, mc, build_prompt(task, le.input_unit, vocab), vocab);
        if (pr.truncated) ++rep.truncated_predictions;
        preds.push_back(normalize_label(pr.text));
        golds.push_back(normalize_label(le.label));
    }
    std::vector<std::string> space;
    for (const auto& l : task.label_space) space.push_back(normalize_label(l));
    rep.accuracy = accuracy(preds, golds);
    rep.macro_f1 = macro_f1(preds, golds, space);
    if (predictions) *predictions = std::move(preds);
    return rep;
}

// Generation: distribution similarity of predicted field values against the
// test labels, plus diversity and the top-k / CDF tables.
template <typename T>
EvalReport run_generation(const model::Params<T>& params, const model::ModelConfig& mc,
                          const TaskSpec& task, const std::vector<LabeledExample>& test_set,
                          const tok::Vocabulary& vocab, int topk = 5,
                          std::vector<std::string>* predictions = nullptr) {
    if (test_set.empty()) throw EmptyDataset("evaluation dataset is empty");
    std::vector<std::string> preds, golds;
    EvalReport rep;
    rep.task_name = task.name;
    rep.understanding = false;
    rep.examples = static_cast<int64_t>(test_set.size());
    for (const auto& le : test_set) {
        PredictResult pr =
            predict<T>(params, mc, build_prompt(task, le.input_unit, vocab), vocab);
        if (pr.truncated) ++rep.truncated_predictions;
        preds.push_back(pr.text);
        golds.push_back(le.label);
    }
    rep.jsd = jsd(frequencies(golds), frequencies(preds));
    rep.tvd = tvd(frequencies(golds), frequencies(preds));
    rep.dr = dr(preds, field_value_kind(task.field));
    rep.tables = distribution_report(golds, preds, topk);
    if (predictions) *predictions = std::move(preds);
    return rep;
}

} // namespace lens::eval
