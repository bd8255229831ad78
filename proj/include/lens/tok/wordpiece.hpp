#pragma once

// WordPiece training over hex traffic.  Two variants share the trainer: one
// seeds the symbol inventory with every 4-digit word from a predefined
// vocabulary (merges then join adjacent words, so pieces are 4 or 8 hex
// chars), the other starts from single hex characters with "##" continuation
// marking and merges within words.

#include "lens/ingest/packet.hpp"
#include "lens/tok/vocab.hpp"

#include <cstdint>
#include <vector>

namespace lens::tok {

struct WordPieceOptions {
    int32_t target_size = 0;
    uint64_t seed = 0;
    // Merged pieces never exceed this many hex characters of content.
    size_t max_piece_hex = 8;
    // Safety cap on merge iterations; the merge loop normally stops earlier,
    // when no adjacent pair occurs at least twice.
    size_t max_merges = 100000;
};

// Trains a vocabulary of exactly options.target_size entries (specials and
// sentinels included).  `predefined`, when non-null, contributes its regular
// tokens as the seed symbol inventory; when null, seeds are the 16 hex
// characters plus their "##" continuation forms.
//
// Final selection ranks candidate pieces by frequency (seeds by their count
// in the corpus, merged pieces by how often the merge applied) with
// lexicographic tie-breaks, so corpus-attested pieces survive truncation and
// unused seeds are dropped first.  Throws CorpusTooSmall when the candidate
// pool cannot fill the target.
Vocabulary train_wordpiece(const std::vector<ingest::HexUnit>& corpus,
                           const WordPieceOptions& options,
                           const Vocabulary* predefined = nullptr);

} // namespace lens::tok
