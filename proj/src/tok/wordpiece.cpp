#include "lens/tok/wordpiece.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace lens::tok {

namespace {

struct SymbolTable {
    std::vector<std::string> strings;
    std::unordered_map<std::string, int32_t> ids;

    int32_t intern(const std::string& s) {
        auto it = ids.find(s);
        if (it != ids.end()) return it->second;
        int32_t id = static_cast<int32_t>(strings.size());
        strings.push_back(s);
        ids.emplace(s, id);
        return id;
    }

    size_t content_len(int32_t id) const {
        const std::string& s = strings[static_cast<size_t>(id)];
        return s.rfind("##", 0) == 0 ? s.size() - 2 : s.size();
    }
};

struct Segment {
    std::vector<int32_t> syms;
    int64_t count = 0;
};

struct MergeCandidate {
    int32_t a = -1;
    int32_t b = -1;
    int64_t pair_freq = 0;
    int64_t freq_a = 0;
    int64_t freq_b = 0;
};

// score(ab) = pair_freq / (freq_a * freq_b), compared exactly via
// cross-multiplication to keep selection platform-independent.
bool better(const MergeCandidate& x, const MergeCandidate& y, const SymbolTable& table) {
    __int128 lhs = static_cast<__int128>(x.pair_freq) * y.freq_a * y.freq_b;
    __int128 rhs = static_cast<__int128>(y.pair_freq) * x.freq_a * x.freq_b;
    if (lhs != rhs) return lhs > rhs;
    if (x.pair_freq != y.pair_freq) return x.pair_freq > y.pair_freq;
    const std::string& xa = table.strings[static_cast<size_t>(x.a)];
    const std::string& ya = table.strings[static_cast<size_t>(y.a)];
    if (xa != ya) return xa < ya;
    return table.strings[static_cast<size_t>(x.b)] < table.strings[static_cast<size_t>(y.b)];
}

} // namespace

Vocabulary train_wordpiece(const std::vector<ingest::HexUnit>& corpus,
                           const WordPieceOptions& options,
                           const Vocabulary* predefined) {
    constexpr int32_t kReserved = 6 + kNumSentinels;
    if (options.target_size <= kReserved)
        throw CorpusTooSmall("target size " + std::to_string(options.target_size) +
                             " does not exceed the " + std::to_string(kReserved) +
                             " reserved special and sentinel entries");
    if (corpus.empty()) throw CorpusTooSmall("training corpus is empty");

    SymbolTable table;
    std::vector<int64_t> seed_freq;
    auto seed_symbol = [&](const std::string& s) {
        int32_t id = table.intern(s);
        if (static_cast<size_t>(id) >= seed_freq.size()) seed_freq.resize(id + 1, 0);
        return id;
    };

    // Seed inventory first so seed ids form a prefix of the symbol table.
    static const char digits[] = "0123456789abcdef";
    if (predefined) {
        for (int32_t id = 0; id < predefined->size(); ++id) {
            if (predefined->is_special(id) || predefined->is_sentinel(id)) continue;
            seed_symbol(predefined->token_of(id));
        }
    } else {
        for (char c : std::string(digits)) seed_symbol(std::string(1, c));
        for (char c : std::string(digits)) seed_symbol(std::string("##") + c);
    }
    // Working corpus: deduplicated symbol sequences with counts.  One segment
    // per header/payload region when merging whole words, one per word when
    // merging characters, so merges never cross a boundary the encoder
    // tokenizes separately.
    std::map<std::vector<int32_t>, int64_t> segment_counts;
    auto add_region = [&](const std::string& hex) {
        if (hex.empty()) return;
        std::vector<std::string> words = split_words(hex);
        if (predefined) {
            std::vector<int32_t> seg;
            seg.reserve(words.size());
            for (const std::string& w : words) seg.push_back(seed_symbol(w));
            ++segment_counts[seg];
        } else {
            for (const std::string& w : words) {
                std::vector<int32_t> seg;
                seg.reserve(w.size());
                for (size_t i = 0; i < w.size(); ++i) {
                    std::string s = i == 0 ? std::string(1, w[i])
                                          : std::string("##") + w[i];
                    seg.push_back(seed_symbol(s));
                }
                ++segment_counts[seg];
            }
        }
    };
    for (const ingest::HexUnit& unit : corpus)
        for (const ingest::PacketHex& pkt : unit.packets) {
            add_region(pkt.header_hex);
            add_region(pkt.payload_hex);
        }
    // Corpus words absent from a partial predefined inventory were interned
    // above and count as seeds too, so the seed boundary is fixed only now.
    const int32_t n_seeds = static_cast<int32_t>(table.strings.size());

    std::vector<Segment> segments;
    segments.reserve(segment_counts.size());
    for (auto& [syms, count] : segment_counts) segments.push_back({syms, count});

    seed_freq.resize(table.strings.size(), 0);
    for (const Segment& seg : segments)
        for (int32_t s : seg.syms) seed_freq[static_cast<size_t>(s)] += seg.count;

    // Greedy merge loop on the standard pair score.
    std::vector<int64_t> merge_freq; // creation-time pair frequency per merged piece
    for (size_t iter = 0; iter < options.max_merges; ++iter) {
        std::vector<int64_t> freq(table.strings.size(), 0);
        std::map<std::pair<int32_t, int32_t>, int64_t> pairs;
        for (const Segment& seg : segments) {
            for (size_t i = 0; i < seg.syms.size(); ++i) {
                freq[static_cast<size_t>(seg.syms[i])] += seg.count;
                if (i + 1 < seg.syms.size())
                    pairs[{seg.syms[i], seg.syms[i + 1]}] += seg.count;
            }
        }
        MergeCandidate best;
        for (const auto& [pair, pf] : pairs) {
            if (pf < 2) continue;
            if (table.content_len(pair.first) + table.content_len(pair.second) >
                options.max_piece_hex)
                continue;
            MergeCandidate cand{pair.first, pair.second, pf,
                                freq[static_cast<size_t>(pair.first)],
                                freq[static_cast<size_t>(pair.second)]};
            if (best.a < 0 || better(cand, best, table)) best = cand;
        }
        if (best.a < 0) break;

        const std::string& sa = table.strings[static_cast<size_t>(best.a)];
        const std::string& sb = table.strings[static_cast<size_t>(best.b)];
        std::string merged_str =
            sa + (sb.rfind("##", 0) == 0 ? sb.substr(2) : sb);
        int32_t merged = table.intern(merged_str);
        if (static_cast<size_t>(merged) - static_cast<size_t>(n_seeds) >= merge_freq.size())
            merge_freq.resize(merged - n_seeds + 1, 0);
        merge_freq[static_cast<size_t>(merged - n_seeds)] += best.pair_freq;

        for (Segment& seg : segments) {
            std::vector<int32_t> out;
            out.reserve(seg.syms.size());
            for (size_t i = 0; i < seg.syms.size(); ++i) {
                if (i + 1 < seg.syms.size() && seg.syms[i] == best.a &&
                    seg.syms[i + 1] == best.b) {
                    out.push_back(merged);
                    ++i;
                } else {
                    out.push_back(seg.syms[i]);
                }
            }
            seg.syms = std::move(out);
        }
    }

    // Exact-size selection: rank every candidate piece, keep the top slice.
    struct Ranked {
        int64_t freq;
        const std::string* str;
    };
    std::vector<Ranked> ranked;
    ranked.reserve(table.strings.size());
    for (size_t i = 0; i < table.strings.size(); ++i) {
        int64_t f = i < static_cast<size_t>(n_seeds)
                        ? seed_freq[i]
                        : merge_freq[i - static_cast<size_t>(n_seeds)];
        ranked.push_back({f, &table.strings[i]});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& x, const Ranked& y) {
        if (x.freq != y.freq) return x.freq > y.freq;
        return *x.str < *y.str;
    });

    const size_t needed = static_cast<size_t>(options.target_size - kReserved);
    if (ranked.size() < needed)
        throw CorpusTooSmall("only " + std::to_string(ranked.size()) +
                             " candidate pieces for " + std::to_string(needed) +
                             " vocabulary slots");

    Vocabulary v;
    v.scheme = predefined ? Scheme::WordPiecePd : Scheme::WordPieceWord;
    v.seed = options.seed;
    v.tokens.reserve(static_cast<size_t>(options.target_size));
    v.tokens.push_back(kPadToken);
    v.tokens.push_back(kEndToken);
    v.tokens.push_back(kUnkToken);
    v.tokens.push_back(kTskToken);
    v.tokens.push_back(kHeadToken);
    v.tokens.push_back(kPktToken);
    for (int k = 0; k < kNumSentinels; ++k)
        v.tokens.push_back("<extra_id_" + std::to_string(k) + ">");
    for (size_t i = 0; i < needed; ++i) v.tokens.push_back(*ranked[i].str);
    v.finalize();
    return v;
}

} // namespace lens::tok
