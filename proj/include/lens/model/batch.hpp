#pragma once

// Training batches.  Examples stay ragged (one length per example); the
// network processes them row by row, so padding is never required, but PAD
// tokens appearing in inputs or targets are still masked out correctly.

#include "lens/corpus/sampler.hpp"

#include <cstdint>
#include <vector>

namespace lens::model {

struct BatchExample {
    std::vector<int32_t> enc_ids;
    std::vector<uint8_t> enc_header_mask;
    std::vector<int32_t> enc_packet_ids;
    // Decoder targets; the teacher-forced decoder input is PAD + targets[:-1].
    std::vector<int32_t> dec_targets;
    // Original-position classes (1-based) for the first packets, aligned with
    // the example's PKT-token positions in order; empty when absent.
    std::vector<int32_t> pop_labels;
    int8_t htp_label = -1; // -1: not recombination-annotated; else 0/1
    bool z = true;
};

struct Batch {
    std::vector<BatchExample> examples;
    size_t size() const { return examples.size(); }
};

inline BatchExample to_batch_example(const corpus::PretrainExample& ex) {
    BatchExample b;
    b.enc_ids = ex.encoder_input.ids;
    b.enc_header_mask = ex.encoder_input.header_mask;
    b.enc_packet_ids = ex.encoder_input.packet_ids;
    b.dec_targets = ex.msp.decoder_target;
    b.pop_labels = ex.pop.original_position;
    b.htp_label = ex.htp.applied ? static_cast<int8_t>(ex.htp.label) : int8_t{-1};
    b.z = ex.z;
    return b;
}

inline Batch make_batch(const std::vector<corpus::PretrainExample>& examples,
                        const std::vector<size_t>& indices) {
    Batch batch;
    batch.examples.reserve(indices.size());
    for (size_t i : indices) batch.examples.push_back(to_batch_example(examples[i]));
    return batch;
}

} // namespace lens::model
