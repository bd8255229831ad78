#pragma once

// Pre-training example construction over tokenized flows: span masking with
// sentinel replacement, packet-order shuffling with position labels, and
// subflow recombination with homology labels.  The three tasks compose per
// flow with packet shuffling and recombination mutually exclusive.

#include "lens/tok/vocab.hpp"
#include "lens/util/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lens::corpus {

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotEnoughFlows : public CorpusError {
public:
    using CorpusError::CorpusError;
};

struct MaskedSpan {
    int32_t start = 0;        // position in the original (pre-masking) sequence
    int32_t length = 0;       // tokens actually covered (clipped at run ends)
    int32_t sentinel_index = 0;
};

struct MSPAnnotation {
    std::vector<MaskedSpan> spans;
    std::vector<int32_t> decoder_target; // [sent_0, span_0..., sent_1, span_1..., END]
    // Drawn length of every candidate span the scan considered, masked or
    // not, before any clipping.  This is the measurement basis for the
    // span-length statistics: draws are uniform on {1..5} by construction.
    std::vector<int32_t> candidate_lengths;
    bool forced = false; // no candidate was masked, so one span was imposed
};

struct POPAnnotation {
    bool applied = false;
    // permutation[k] = 1-based destination slot of original packet k+1,
    // over the first t = min(3, packets) packets.
    std::vector<int32_t> permutation;
    // original_position[j] = 1-based original index of the packet now in
    // slot j+1; the 3-way class label.
    std::vector<int32_t> original_position;
    std::vector<uint8_t> same_position; // y_j = (original_position[j] == j+1)
};

struct HTPAnnotation {
    bool applied = false;
    uint8_t label = 1;         // 1 homologous, 0 heterologous
    int64_t partner_index = -1; // set iff label == 0
};

struct PretrainExample {
    tok::TokenSeq encoder_input;
    MSPAnnotation msp;
    POPAnnotation pop;
    HTPAnnotation htp;
    bool z = true; // false only for heterologous recombinations
};

struct SamplerConfig {
    double mask_prob = 0.15;
    int32_t max_span = 5;
    double pop_rate = 0.15;
    double htp_rate = 0.30;
    double homologous_prob = 0.5;
    int32_t pop_max_packets = 3;
    uint64_t seed = 0;
};

// Left-to-right scan over runs of non-special tokens: draw a length uniform
// on {1..max_span}, mask that span with probability mask_prob, and continue
// after it either way.  Masked spans become one sentinel each, numbered in
// encoder order.  When no candidate is masked, one span at a random eligible
// position is forced so the decoder target is never empty.
std::pair<tok::TokenSeq, MSPAnnotation> sample_msp(const tok::TokenSeq& seq,
                                                   const tok::Vocabulary& vocab,
                                                   Rng& rng,
                                                   double mask_prob = 0.15,
                                                   int32_t max_span = 5);

// Uniformly random non-identity permutation of the first min(3, packets)
// packets, rebuilt with packets renumbered in their new order.
std::pair<tok::TokenSeq, POPAnnotation> shuffle_packets(const tok::TokenSeq& seq,
                                                        const tok::Vocabulary& vocab,
                                                        Rng& rng,
                                                        int32_t max_packets = 3);

POPAnnotation identity_pop(int32_t n_packets, int32_t max_packets = 3);

// Heterologous recombination: keeps self's first subflow (packets up to
// ceil(t/2)) and appends partner's second subflow, renumbering packets.
std::pair<tok::TokenSeq, HTPAnnotation> recombine(const tok::TokenSeq& self,
                                                  const tok::TokenSeq& partner,
                                                  int64_t partner_index,
                                                  const tok::Vocabulary& vocab);

int32_t count_packets(const tok::TokenSeq& seq);

struct PopResult {
    std::vector<tok::TokenSeq> seqs;
    std::vector<POPAnnotation> annotations;
};

// Per-flow independent Bernoulli(rate) over flows with at least two packets,
// each flow drawing from substream(seed, flow_index).
PopResult sample_pop(const std::vector<tok::TokenSeq>& flows,
                     const tok::Vocabulary& vocab,
                     double rate,
                     uint64_t seed,
                     int32_t max_packets = 3);

struct HtpResult {
    std::vector<tok::TokenSeq> seqs;
    std::vector<HTPAnnotation> annotations;
};

// Bernoulli(rate) over flows outside `excluded` that have at least two
// packets; chosen flows keep their content (label 1) or swap in a distinct
// partner's second subflow (label 0) with equal probability.  Throws
// NotEnoughFlows when fewer than two flows are outside `excluded`, or when a
// heterologous draw has no distinct partner.
HtpResult sample_htp(const std::vector<tok::TokenSeq>& flows,
                     const tok::Vocabulary& vocab,
                     double rate,
                     uint64_t seed,
                     const std::vector<uint8_t>& excluded,
                     double homologous_prob = 0.5);

// Full pipeline: per flow, packet shuffling (rate pop_rate) or, failing
// that, recombination (rate htp_rate over the remainder), then span masking
// on the modified sequence.  Flow i's draws all come from
// substream(seed, i) in a fixed order, so construction is deterministic and
// parallelizable across flows.
std::vector<PretrainExample> build_corpus(const std::vector<tok::TokenSeq>& flows,
                                          const tok::Vocabulary& vocab,
                                          const SamplerConfig& config);

} // namespace lens::corpus
