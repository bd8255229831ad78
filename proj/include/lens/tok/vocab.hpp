#pragma once

// Vocabularies over hex traffic and the token-sequence encoding used by the
// model: the fixed 4-digit-word Vanilla vocabulary plus the shared Vocabulary
// container that WordPiece training also fills.  Encoding a HexUnit produces
// ids together with the header mask and per-packet segment ids the embedding
// layer consumes.

#include "lens/ingest/packet.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace lens::tok {

class TokError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CorpusTooSmall : public TokError {
public:
    using TokError::TokError;
};

class IdOutOfRange : public TokError {
public:
    using TokError::TokError;
};

enum class Scheme { Vanilla, WordPieceWord, WordPiecePd };

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

inline constexpr int kNumSentinels = 100;

// Special token strings.  PAD always gets id 0 so padding masks can be
// computed from ids alone.
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kEndToken = "</s>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kTskToken = "<tsk>";
inline constexpr const char* kHeadToken = "<head>";
inline constexpr const char* kPktToken = "<pkt>";

struct Vocabulary {
    Scheme scheme = Scheme::Vanilla;
    uint64_t seed = 0;
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int32_t> index;

    int32_t pad_id = -1;
    int32_t end_id = -1;
    int32_t unk_id = -1;
    int32_t tsk_id = -1;
    int32_t head_id = -1;
    int32_t pkt_id = -1;
    std::array<int32_t, kNumSentinels> sentinel_ids{};

    int32_t size() const { return static_cast<int32_t>(tokens.size()); }

    // -1 when the token is absent.
    int32_t id_of(const std::string& token) const;
    const std::string& token_of(int32_t id) const;

    int32_t sentinel(int k) const;
    bool is_sentinel(int32_t id) const;
    bool is_special(int32_t id) const;

    // Rebuilds the inverse map and cached special ids; validates that the
    // token list is duplicate-free, that all specials and sentinels are
    // present, and that PAD sits at id 0.
    void finalize();
};

// Token sequence with the two structural annotations the embedding layer
// needs: which positions are header bytes, and which packet each position
// belongs to (1-based; 0 for positions outside any packet, e.g. the final
// terminator and padding).
struct TokenSeq {
    std::vector<int32_t> ids;
    std::vector<uint8_t> header_mask;
    std::vector<int32_t> packet_ids;

    size_t size() const { return ids.size(); }
    void push(int32_t id, bool header, int32_t packet);
    void append(const TokenSeq& other);
};

// Specials + sentinels + all 65,536 four-hex-digit words, 65,642 entries.
Vocabulary build_vanilla_vocab();

// Splits a lowercase hex string into 4-character words; a trailing remainder
// of 1-3 characters is right-padded with '0'.  Throws InvalidHexChar on
// anything outside [0-9a-f].
std::vector<std::string> split_words(const std::string& hex);

// Piece ids for one contiguous hex region (a packet's header or payload).
// Vanilla: one id per 4-digit word.  WordPiece: greedy longest-match, max
// piece 8 hex characters; unmatchable words become UNK.
std::vector<int32_t> tokenize_hex(const Vocabulary& vocab, const std::string& hex);

// Layout per packet: [header pieces] <head> [payload pieces] <pkt>, then a
// final </s>.  with_headers=false drops both the header pieces and the
// <head> marker.  header_mask is true exactly on header-piece positions;
// packet_ids carry the 1-based packet number on every position of a packet
// including its markers.
TokenSeq encode(const Vocabulary& vocab, const ingest::HexUnit& unit, bool with_headers);

// Concatenation of token strings; specials render verbatim, WordPiece
// continuation markers are stripped.  Throws IdOutOfRange.
std::string decode(const Vocabulary& vocab, const std::vector<int32_t>& ids);

// Text format: one comment line `#scheme=<...> #seed=<...>`, then one token
// per line in id order.
// Text format: a "#scheme=<name> #seed=<n>" header, optional "#input="
// provenance comment lines, then one token per line in id order.
void save_vocab(const Vocabulary& vocab, const std::string& path,
                const std::vector<std::pair<std::string, uint64_t>>& inputs = {});
Vocabulary load_vocab(const std::string& path);

// Provenance comments of a vocabulary file: (source path, file checksum).
std::vector<std::pair<std::string, uint64_t>> vocab_inputs(const std::string& path);

// Content fingerprint over the ordered token list, independent of file
// layout; stamped into corpus files and checkpoints for provenance checks.
uint64_t vocab_checksum(const Vocabulary& vocab);

} // namespace lens::tok
