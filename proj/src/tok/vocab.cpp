#include "lens/tok/vocab.hpp"

#include "lens/util/checksum.hpp"
#include "lens/util/hex.hpp"

#include <fstream>
#include <sstream>

namespace lens::tok {

std::string scheme_name(Scheme s) {
    switch (s) {
    case Scheme::Vanilla: return "vanilla";
    case Scheme::WordPieceWord: return "wordpiece_word";
    case Scheme::WordPiecePd: return "wordpiece_pd";
    }
    throw TokError("unreachable scheme");
}

Scheme scheme_from_name(const std::string& name) {
    if (name == "vanilla") return Scheme::Vanilla;
    if (name == "wordpiece_word") return Scheme::WordPieceWord;
    if (name == "wordpiece_pd") return Scheme::WordPiecePd;
    throw TokError("unknown tokenizer scheme: " + name);
}

int32_t Vocabulary::id_of(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? -1 : it->second;
}

const std::string& Vocabulary::token_of(int32_t id) const {
    if (id < 0 || id >= size())
        throw IdOutOfRange("token id " + std::to_string(id) + " outside [0, " +
                           std::to_string(size()) + ")");
    return tokens[static_cast<size_t>(id)];
}

int32_t Vocabulary::sentinel(int k) const {
    if (k < 0 || k >= kNumSentinels)
        throw IdOutOfRange("sentinel index " + std::to_string(k) + " outside [0, 100)");
    return sentinel_ids[static_cast<size_t>(k)];
}

bool Vocabulary::is_sentinel(int32_t id) const {
    return id >= sentinel_ids.front() && id <= sentinel_ids.back() &&
           sentinel_ids[static_cast<size_t>(id - sentinel_ids.front())] == id;
}

bool Vocabulary::is_special(int32_t id) const {
    return id == pad_id || id == end_id || id == unk_id || id == tsk_id ||
           id == head_id || id == pkt_id;
}

void Vocabulary::finalize() {
    index.clear();
    index.reserve(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        auto [it, inserted] = index.emplace(tokens[i], static_cast<int32_t>(i));
        if (!inserted) throw TokError("duplicate token in vocabulary: " + tokens[i]);
    }
    pad_id = id_of(kPadToken);
    end_id = id_of(kEndToken);
    unk_id = id_of(kUnkToken);
    tsk_id = id_of(kTskToken);
    head_id = id_of(kHeadToken);
    pkt_id = id_of(kPktToken);
    if (pad_id != 0) throw TokError("<pad> must have id 0");
    for (int32_t id : {end_id, unk_id, tsk_id, head_id, pkt_id})
        if (id < 0) throw TokError("vocabulary is missing a special token");
    for (int k = 0; k < kNumSentinels; ++k) {
        int32_t id = id_of("<extra_id_" + std::to_string(k) + ">");
        if (id < 0) throw TokError("vocabulary is missing <extra_id_" + std::to_string(k) + ">");
        sentinel_ids[static_cast<size_t>(k)] = id;
    }
}

void TokenSeq::push(int32_t id, bool header, int32_t packet) {
    ids.push_back(id);
    header_mask.push_back(header ? 1 : 0);
    packet_ids.push_back(packet);
}

void TokenSeq::append(const TokenSeq& other) {
    ids.insert(ids.end(), other.ids.begin(), other.ids.end());
    header_mask.insert(header_mask.end(), other.header_mask.begin(), other.header_mask.end());
    packet_ids.insert(packet_ids.end(), other.packet_ids.begin(), other.packet_ids.end());
}

namespace {

void append_specials(std::vector<std::string>& tokens) {
    tokens.push_back(kPadToken);
    tokens.push_back(kEndToken);
    tokens.push_back(kUnkToken);
    tokens.push_back(kTskToken);
    tokens.push_back(kHeadToken);
    tokens.push_back(kPktToken);
    for (int k = 0; k < kNumSentinels; ++k)
        tokens.push_back("<extra_id_" + std::to_string(k) + ">");
}

bool is_lower_hex(char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); }

} // namespace

Vocabulary build_vanilla_vocab() {
    Vocabulary v;
    v.scheme = Scheme::Vanilla;
    v.tokens.reserve(65536 + 106);
    append_specials(v.tokens);
    static const char digits[] = "0123456789abcdef";
    std::string word(4, '0');
    for (int a = 0; a < 16; ++a)
        for (int b = 0; b < 16; ++b)
            for (int c = 0; c < 16; ++c)
                for (int d = 0; d < 16; ++d) {
                    word[0] = digits[a];
                    word[1] = digits[b];
                    word[2] = digits[c];
                    word[3] = digits[d];
                    v.tokens.push_back(word);
                }
    v.finalize();
    return v;
}

std::vector<std::string> split_words(const std::string& hex) {
    for (size_t i = 0; i < hex.size(); ++i)
        if (!is_lower_hex(hex[i]))
            throw InvalidHexChar("non-hex character '" + std::string(1, hex[i]) +
                                 "' at position " + std::to_string(i));
    std::vector<std::string> words;
    words.reserve((hex.size() + 3) / 4);
    for (size_t i = 0; i < hex.size(); i += 4) {
        std::string w = hex.substr(i, 4);
        while (w.size() < 4) w.push_back('0');
        words.push_back(std::move(w));
    }
    return words;
}

namespace {

// Greedy piece matching for one word of the single-character scheme: the
// longest in-vocabulary prefix, then longest continuation pieces.  Any
// unmatchable position collapses the whole word to UNK.
bool match_word_pieces(const Vocabulary& vocab, const std::string& word,
                       std::vector<int32_t>& out) {
    std::vector<int32_t> pieces;
    size_t pos = 0;
    while (pos < word.size()) {
        int32_t best = -1;
        size_t best_len = 0;
        for (size_t len = word.size() - pos; len >= 1; --len) {
            std::string cand = word.substr(pos, len);
            if (pos > 0) cand = "##" + cand;
            int32_t id = vocab.id_of(cand);
            if (id >= 0) {
                best = id;
                best_len = len;
                break;
            }
        }
        if (best < 0) return false;
        pieces.push_back(best);
        pos += best_len;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
    return true;
}

} // namespace

std::vector<int32_t> tokenize_hex(const Vocabulary& vocab, const std::string& hex) {
    std::vector<std::string> words = split_words(hex);
    std::vector<int32_t> out;
    out.reserve(words.size());
    switch (vocab.scheme) {
    case Scheme::Vanilla:
        for (const std::string& w : words) {
            int32_t id = vocab.id_of(w);
            out.push_back(id >= 0 ? id : vocab.unk_id);
        }
        break;
    case Scheme::WordPiecePd:
        // Pieces are whole 4-digit words or joins of two adjacent words
        // (the 8-hex-char cap), so longest-match tries the pair first.
        for (size_t i = 0; i < words.size();) {
            if (i + 1 < words.size()) {
                int32_t id = vocab.id_of(words[i] + words[i + 1]);
                if (id >= 0) {
                    out.push_back(id);
                    i += 2;
                    continue;
                }
            }
            int32_t id = vocab.id_of(words[i]);
            out.push_back(id >= 0 ? id : vocab.unk_id);
            i += 1;
        }
        break;
    case Scheme::WordPieceWord:
        for (const std::string& w : words)
            if (!match_word_pieces(vocab, w, out)) out.push_back(vocab.unk_id);
        break;
    }
    return out;
}

TokenSeq encode(const Vocabulary& vocab, const ingest::HexUnit& unit, bool with_headers) {
    TokenSeq seq;
    int32_t packet_no = 0;
    for (const ingest::PacketHex& pkt : unit.packets) {
        ++packet_no;
        if (with_headers) {
            for (int32_t id : tokenize_hex(vocab, pkt.header_hex))
                seq.push(id, true, packet_no);
            seq.push(vocab.head_id, false, packet_no);
        }
        for (int32_t id : tokenize_hex(vocab, pkt.payload_hex))
            seq.push(id, false, packet_no);
        seq.push(vocab.pkt_id, false, packet_no);
    }
    seq.push(vocab.end_id, false, 0);
    return seq;
}

std::string decode(const Vocabulary& vocab, const std::vector<int32_t>& ids) {
    std::string out;
    for (int32_t id : ids) {
        const std::string& tok = vocab.token_of(id);
        if (tok.size() > 2 && tok[0] == '#' && tok[1] == '#')
            out.append(tok, 2, std::string::npos);
        else
            out.append(tok);
    }
    return out;
}

void save_vocab(const Vocabulary& vocab, const std::string& path,
                const std::vector<std::pair<std::string, uint64_t>>& inputs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw TokError("cannot open vocabulary file for writing: " + path);
    out << "#scheme=" << scheme_name(vocab.scheme) << " #seed=" << vocab.seed << "\n";
    for (const auto& [src, checksum] : inputs)
        out << "#input=" << src << " #checksum=" << checksum << "\n";
    for (const std::string& tok : vocab.tokens) out << tok << "\n";
    if (!out) throw TokError("write failure on vocabulary file: " + path);
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TokError("cannot open vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    if (!std::getline(in, line) || line.rfind("#scheme=", 0) != 0)
        throw TokError("vocabulary file missing #scheme header: " + path);
    std::istringstream header(line);
    std::string field;
    while (header >> field) {
        if (field.rfind("#scheme=", 0) == 0)
            v.scheme = scheme_from_name(field.substr(8));
        else if (field.rfind("#seed=", 0) == 0)
            v.seed = std::stoull(field.substr(6));
    }
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') continue;
        v.tokens.push_back(line);
    }
    // A trailing blank line is file formatting, not an empty token.
    if (!v.tokens.empty() && v.tokens.back().empty()) v.tokens.pop_back();
    v.finalize();
    return v;
}

std::vector<std::pair<std::string, uint64_t>> vocab_inputs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TokError("cannot open vocabulary file: " + path);
    std::vector<std::pair<std::string, uint64_t>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] != '#') break;
        if (line.rfind("#input=", 0) != 0) continue;
        size_t mark = line.find(" #checksum=");
        if (mark == std::string::npos)
            throw TokError("malformed #input line in " + path);
        out.emplace_back(line.substr(7, mark - 7),
                         std::stoull(line.substr(mark + 11)));
    }
    return out;
}

uint64_t vocab_checksum(const Vocabulary& vocab) {
    Fnv1a h;
    h.update(scheme_name(vocab.scheme));
    h.update("\n");
    for (const std::string& tok : vocab.tokens) {
        h.update(tok);
        h.update("\n");
    }
    return h.digest();
}

} // namespace lens::tok
