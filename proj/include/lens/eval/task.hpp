#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lens/eval/metrics.hpp"
#include "lens/ingest/packet.hpp"
#include "lens/tok/vocab.hpp"
#include "lens/util/rng.hpp"

namespace lens::eval {

struct GranularityMismatch : EvalError {
    using EvalError::EvalError;
};
struct EmptyDataset : EvalError {
    using EvalError::EvalError;
};

enum class TaskKind { Understanding, Generation };
enum class GenField { SrcIp, DstIp, SrcPort, DstPort, PktLen };

const char* field_name(GenField f);
GenField field_from_name(const std::string& name);

// DR validity class for a generation field.
ValueKind field_value_kind(GenField f);

struct TaskSpec {
    std::string name;
    TaskKind kind = TaskKind::Understanding;
    std::string description_text;
    std::vector<std::string> label_space; // understanding
    GenField field = GenField::SrcIp;     // generation
    ingest::Granularity granularity = ingest::Granularity::FLOW;

    void validate() const; // throws EvalError
};

struct LabeledExample {
    ingest::HexUnit input_unit;
    std::string label;
};

// ASCII text <-> lowercase hex of its bytes. from_hex drops trailing NUL
// bytes introduced by word padding and ignores a trailing odd nibble.
std::string text_to_hex(const std::string& text);
std::string hex_to_text(const std::string& hex);

// Case-folded, trimmed form used for label comparison.
std::string normalize_label(const std::string& s);

// [description tokens] TSK [encoded unit]; the unit keeps its headers for
// understanding tasks and drops them for generation tasks. Description
// tokens carry header_mask=false and packet_id 0.
tok::TokenSeq build_prompt(const TaskSpec& task, const ingest::HexUnit& unit,
                           const tok::Vocabulary& vocab);

// Deterministic shuffle, then split train:test = ratio:1.
std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> split_dataset(
    const std::vector<LabeledExample>& examples, uint64_t seed, int ratio = 4);

// JSON-lines: {"hex": [per-packet hex], "header_len": [hex chars], "label": "..."}
void save_dataset(const std::vector<LabeledExample>& examples, const std::string& path);
std::vector<LabeledExample> load_dataset(const std::string& path, ingest::Granularity granularity);

} // namespace lens::eval
