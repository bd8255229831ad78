#include "lens/corpus/sampler.hpp"

#include <algorithm>

namespace lens::corpus {

using tok::TokenSeq;
using tok::Vocabulary;

int32_t count_packets(const TokenSeq& seq) {
    int32_t n = 0;
    for (int32_t pid : seq.packet_ids) n = std::max(n, pid);
    return n;
}

std::pair<TokenSeq, MSPAnnotation> sample_msp(const TokenSeq& seq,
                                              const Vocabulary& vocab,
                                              Rng& rng,
                                              double mask_prob,
                                              int32_t max_span) {
    const size_t n = seq.size();
    MSPAnnotation ann;

    auto maskable = [&](size_t p) { return !vocab.is_special(seq.ids[p]); };
    // Span extent from p: stops at the first special token.
    auto clip_length = [&](size_t p, int32_t drawn) {
        int32_t len = 0;
        while (len < drawn && p + static_cast<size_t>(len) < n &&
               maskable(p + static_cast<size_t>(len)))
            ++len;
        return len;
    };

    size_t p = 0;
    while (p < n) {
        if (!maskable(p)) {
            ++p;
            continue;
        }
        int32_t drawn = static_cast<int32_t>(rng.uniform_int(1, max_span));
        ann.candidate_lengths.push_back(drawn);
        int32_t len = clip_length(p, drawn);
        bool mask = ann.spans.size() < tok::kNumSentinels && rng.bernoulli(mask_prob);
        if (mask)
            ann.spans.push_back({static_cast<int32_t>(p), len,
                                 static_cast<int32_t>(ann.spans.size())});
        p += static_cast<size_t>(len);
    }

    if (ann.spans.empty()) {
        std::vector<size_t> eligible;
        for (size_t i = 0; i < n; ++i)
            if (maskable(i)) eligible.push_back(i);
        if (!eligible.empty()) {
            size_t pos = eligible[rng.below(eligible.size())];
            int32_t drawn = static_cast<int32_t>(rng.uniform_int(1, max_span));
            ann.candidate_lengths.push_back(drawn);
            ann.spans.push_back({static_cast<int32_t>(pos), clip_length(pos, drawn), 0});
            ann.forced = true;
        }
    }

    TokenSeq out;
    out.ids.reserve(n);
    size_t next_span = 0;
    for (size_t i = 0; i < n;) {
        if (next_span < ann.spans.size() &&
            i == static_cast<size_t>(ann.spans[next_span].start)) {
            const MaskedSpan& s = ann.spans[next_span];
            out.push(vocab.sentinel(s.sentinel_index), seq.header_mask[i] != 0,
                     seq.packet_ids[i]);
            i += static_cast<size_t>(s.length);
            ++next_span;
        } else {
            out.push(seq.ids[i], seq.header_mask[i] != 0, seq.packet_ids[i]);
            ++i;
        }
    }

    for (const MaskedSpan& s : ann.spans) {
        ann.decoder_target.push_back(vocab.sentinel(s.sentinel_index));
        for (int32_t k = 0; k < s.length; ++k)
            ann.decoder_target.push_back(seq.ids[static_cast<size_t>(s.start + k)]);
    }
    ann.decoder_target.push_back(vocab.end_id);
    return {std::move(out), std::move(ann)};
}

POPAnnotation identity_pop(int32_t n_packets, int32_t max_packets) {
    POPAnnotation ann;
    int32_t t = std::min(n_packets, max_packets);
    for (int32_t j = 1; j <= t; ++j) {
        ann.permutation.push_back(j);
        ann.original_position.push_back(j);
        ann.same_position.push_back(1);
    }
    return ann;
}

namespace {

// Token index ranges grouped by packet id; slot 0 collects the trailing
// terminator (and anything else outside a packet).
std::vector<std::vector<size_t>> positions_by_packet(const TokenSeq& seq, int32_t n_packets) {
    std::vector<std::vector<size_t>> by_packet(static_cast<size_t>(n_packets) + 1);
    for (size_t i = 0; i < seq.size(); ++i)
        by_packet[static_cast<size_t>(seq.packet_ids[i])].push_back(i);
    return by_packet;
}

void emit_packet(const TokenSeq& src, const std::vector<size_t>& positions,
                 int32_t new_packet_id, TokenSeq& out) {
    for (size_t i : positions)
        out.push(src.ids[i], src.header_mask[i] != 0, new_packet_id);
}

} // namespace

std::pair<TokenSeq, POPAnnotation> shuffle_packets(const TokenSeq& seq,
                                                   const Vocabulary& vocab,
                                                   Rng& rng,
                                                   int32_t max_packets) {
    int32_t n = count_packets(seq);
    int32_t t = std::min(n, max_packets);
    if (t < 2) throw CorpusError("cannot shuffle a flow with fewer than 2 packets");

    // arrangement[j] = original 1-based index of the packet placed in slot
    // j+1; redrawn until non-identity so the draw is uniform over the rest.
    std::vector<int32_t> arrangement(static_cast<size_t>(t));
    for (;;) {
        for (int32_t j = 0; j < t; ++j) arrangement[static_cast<size_t>(j)] = j + 1;
        rng.shuffle(arrangement);
        bool identity = true;
        for (int32_t j = 0; j < t; ++j)
            if (arrangement[static_cast<size_t>(j)] != j + 1) {
                identity = false;
                break;
            }
        if (!identity) break;
    }

    POPAnnotation ann;
    ann.applied = true;
    ann.permutation.assign(static_cast<size_t>(t), 0);
    for (int32_t j = 0; j < t; ++j) {
        int32_t orig = arrangement[static_cast<size_t>(j)];
        ann.original_position.push_back(orig);
        ann.same_position.push_back(orig == j + 1 ? 1 : 0);
        ann.permutation[static_cast<size_t>(orig - 1)] = j + 1;
    }

    auto by_packet = positions_by_packet(seq, n);
    TokenSeq out;
    out.ids.reserve(seq.size());
    int32_t next_id = 0;
    for (int32_t j = 0; j < t; ++j)
        emit_packet(seq, by_packet[static_cast<size_t>(arrangement[static_cast<size_t>(j)])],
                    ++next_id, out);
    for (int32_t k = t + 1; k <= n; ++k)
        emit_packet(seq, by_packet[static_cast<size_t>(k)], ++next_id, out);
    emit_packet(seq, by_packet[0], 0, out);
    (void)vocab;
    return {std::move(out), std::move(ann)};
}

std::pair<TokenSeq, HTPAnnotation> recombine(const TokenSeq& self,
                                             const TokenSeq& partner,
                                             int64_t partner_index,
                                             const Vocabulary& vocab) {
    int32_t t_self = count_packets(self);
    int32_t t_partner = count_packets(partner);
    if (t_self < 2 || t_partner < 2)
        throw CorpusError("recombination needs at least 2 packets on both sides");
    int32_t keep = (t_self + 1) / 2;        // first subflow of self
    int32_t skip = (t_partner + 1) / 2;     // partner positions after its midpoint

    auto self_packets = positions_by_packet(self, t_self);
    auto partner_packets = positions_by_packet(partner, t_partner);

    TokenSeq out;
    int32_t next_id = 0;
    for (int32_t k = 1; k <= keep; ++k)
        emit_packet(self, self_packets[static_cast<size_t>(k)], ++next_id, out);
    for (int32_t k = skip + 1; k <= t_partner; ++k)
        emit_packet(partner, partner_packets[static_cast<size_t>(k)], ++next_id, out);
    out.push(vocab.end_id, false, 0);

    HTPAnnotation ann;
    ann.applied = true;
    ann.label = 0;
    ann.partner_index = partner_index;
    return {std::move(out), std::move(ann)};
}

PopResult sample_pop(const std::vector<TokenSeq>& flows,
                     const Vocabulary& vocab,
                     double rate,
                     uint64_t seed,
                     int32_t max_packets) {
    PopResult result;
    result.seqs.reserve(flows.size());
    result.annotations.reserve(flows.size());
    for (size_t i = 0; i < flows.size(); ++i) {
        Rng rng = Rng::substream(seed, i);
        int32_t n = count_packets(flows[i]);
        if (n >= 2 && rng.bernoulli(rate)) {
            auto [seq, ann] = shuffle_packets(flows[i], vocab, rng, max_packets);
            result.seqs.push_back(std::move(seq));
            result.annotations.push_back(std::move(ann));
        } else {
            result.seqs.push_back(flows[i]);
            result.annotations.push_back(identity_pop(n, max_packets));
        }
    }
    return result;
}

namespace {

std::vector<size_t> swap_pool(const std::vector<TokenSeq>& flows,
                              const std::vector<uint8_t>& excluded) {
    std::vector<size_t> pool;
    for (size_t i = 0; i < flows.size(); ++i)
        if (!excluded[i] && count_packets(flows[i]) >= 2) pool.push_back(i);
    return pool;
}

size_t draw_partner(const std::vector<size_t>& pool, size_t self, Rng& rng) {
    std::vector<size_t> others;
    others.reserve(pool.size());
    for (size_t j : pool)
        if (j != self) others.push_back(j);
    if (others.empty())
        throw NotEnoughFlows("no distinct partner available for recombination");
    return others[rng.below(others.size())];
}

} // namespace

HtpResult sample_htp(const std::vector<TokenSeq>& flows,
                     const Vocabulary& vocab,
                     double rate,
                     uint64_t seed,
                     const std::vector<uint8_t>& excluded,
                     double homologous_prob) {
    size_t outside = 0;
    for (size_t i = 0; i < flows.size(); ++i)
        if (!excluded[i]) ++outside;
    if (outside < 2)
        throw NotEnoughFlows("only " + std::to_string(outside) +
                             " flows outside the exclusion set, need 2");

    std::vector<size_t> pool = swap_pool(flows, excluded);
    HtpResult result;
    result.seqs.reserve(flows.size());
    result.annotations.reserve(flows.size());
    for (size_t i = 0; i < flows.size(); ++i) {
        Rng rng = Rng::substream(seed, i);
        bool eligible = !excluded[i] && count_packets(flows[i]) >= 2;
        if (eligible && rng.bernoulli(rate)) {
            if (rng.bernoulli(homologous_prob)) {
                result.seqs.push_back(flows[i]);
                HTPAnnotation ann;
                ann.applied = true;
                ann.label = 1;
                result.annotations.push_back(ann);
            } else {
                size_t j = draw_partner(pool, i, rng);
                auto [seq, ann] = recombine(flows[i], flows[j],
                                            static_cast<int64_t>(j), vocab);
                result.seqs.push_back(std::move(seq));
                result.annotations.push_back(std::move(ann));
            }
        } else {
            result.seqs.push_back(flows[i]);
            result.annotations.push_back(HTPAnnotation{});
        }
    }
    return result;
}

std::vector<PretrainExample> build_corpus(const std::vector<TokenSeq>& flows,
                                          const Vocabulary& vocab,
                                          const SamplerConfig& config) {
    if (flows.size() < 2)
        throw NotEnoughFlows("corpus construction needs at least 2 flows");

    // Flow i consumes substream(seed, i) in a fixed order: shuffle
    // selection (and permutation draws), then recombination selection
    // (homology draw, partner draw), then masking draws.  Ineligible stages
    // consume nothing, so the stream layout is a pure function of the
    // flow's own packet count and draw outcomes.
    std::vector<Rng> rngs;
    rngs.reserve(flows.size());
    for (size_t i = 0; i < flows.size(); ++i)
        rngs.push_back(Rng::substream(config.seed, i));

    const size_t n = flows.size();
    std::vector<PretrainExample> examples(n);
    std::vector<uint8_t> pop_selected(n, 0);
    std::vector<TokenSeq> working(n);

    for (size_t i = 0; i < n; ++i) {
        int32_t packets = count_packets(flows[i]);
        if (packets >= 2 && rngs[i].bernoulli(config.pop_rate)) {
            pop_selected[i] = 1;
            auto [seq, ann] =
                shuffle_packets(flows[i], vocab, rngs[i], config.pop_max_packets);
            working[i] = std::move(seq);
            examples[i].pop = std::move(ann);
        } else {
            working[i] = flows[i];
            examples[i].pop = identity_pop(packets, config.pop_max_packets);
        }
    }

    std::vector<size_t> pool = swap_pool(flows, pop_selected);
    for (size_t i = 0; i < n; ++i) {
        if (pop_selected[i] || count_packets(flows[i]) < 2) continue;
        if (!rngs[i].bernoulli(config.htp_rate)) continue;
        if (rngs[i].bernoulli(config.homologous_prob)) {
            examples[i].htp.applied = true;
            examples[i].htp.label = 1;
        } else {
            size_t j = draw_partner(pool, i, rngs[i]);
            auto [seq, ann] =
                recombine(flows[i], flows[j], static_cast<int64_t>(j), vocab);
            working[i] = std::move(seq);
            examples[i].htp = ann;
            examples[i].z = false;
        }
    }

    for (size_t i = 0; i < n; ++i) {
        auto [enc, msp] = sample_msp(working[i], vocab, rngs[i],
                                     config.mask_prob, config.max_span);
        examples[i].encoder_input = std::move(enc);
        examples[i].msp = std::move(msp);
    }
    return examples;
}

} // namespace lens::corpus
