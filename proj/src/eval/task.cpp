#include "lens/eval/task.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"

namespace lens::eval {

const char* field_name(GenField f) {
    switch (f) {
        case GenField::SrcIp: return "src_ip";
        case GenField::DstIp: return "dst_ip";
        case GenField::SrcPort: return "src_port";
        case GenField::DstPort: return "dst_port";
        case GenField::PktLen: return "pkt_len";
    }
    throw EvalError("unknown generation field");
}

GenField field_from_name(const std::string& name) {
    if (name == "src_ip") return GenField::SrcIp;
    if (name == "dst_ip") return GenField::DstIp;
    if (name == "src_port") return GenField::SrcPort;
    if (name == "dst_port") return GenField::DstPort;
    if (name == "pkt_len") return GenField::PktLen;
    throw EvalError("unknown generation field: " + name);
}

ValueKind field_value_kind(GenField f) {
    switch (f) {
        case GenField::SrcIp:
        case GenField::DstIp: return ValueKind::IP;
        case GenField::SrcPort:
        case GenField::DstPort: return ValueKind::PORT;
        case GenField::PktLen: return ValueKind::LEN;
    }
    throw EvalError("unknown generation field");
}

void TaskSpec::validate() const {
    if (name.empty()) throw EvalError("task name is empty");
    if (description_text.empty()) throw EvalError("task description is empty");
    if (kind == TaskKind::Understanding && label_space.empty())
        throw EvalError("understanding task needs a non-empty label space");
}

std::string text_to_hex(const std::string& text) {
    static const char digits[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(text.size() * 2);
    for (unsigned char c : text) {
        hex.push_back(digits[c >> 4]);
        hex.push_back(digits[c & 0xf]);
    }
    return hex;
}

std::string hex_to_text(const std::string& hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        throw EvalError("invalid hex digit in decoded text");
    };
    std::string out;
    for (size_t i = 0; i + 1 < hex.size(); i += 2)
        out.push_back(static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
    while (!out.empty() && out.back() == '\0') out.pop_back();
    return out;
}

std::string normalize_label(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out = s.substr(b, e - b);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

tok::TokenSeq build_prompt(const TaskSpec& task, const ingest::HexUnit& unit,
                           const tok::Vocabulary& vocab) {
    task.validate();
    if (task.granularity != unit.granularity)
        throw GranularityMismatch("task and input unit granularity differ");

    tok::TokenSeq seq;
    for (int32_t id : tok::tokenize_hex(vocab, text_to_hex(task.description_text)))
        seq.push(id, false, 0);
    seq.push(vocab.tsk_id, false, 0);
    seq.append(tok::encode(vocab, unit, task.kind == TaskKind::Understanding));
    return seq;
}

std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> split_dataset(
    const std::vector<LabeledExample>& examples, uint64_t seed, int ratio) {
    if (examples.empty()) throw EmptyDataset("cannot split an empty dataset");
    if (ratio < 1) throw EvalError("split ratio must be >= 1");
    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    // train:test = ratio:1 — every (ratio+1)-th example goes to test
    std::vector<LabeledExample> train, test;
    for (size_t i = 0; i < order.size(); ++i) {
        if (i % static_cast<size_t>(ratio + 1) == static_cast<size_t>(ratio))
            test.push_back(examples[order[i]]);
        else
            train.push_back(examples[order[i]]);
    }
    return {std::move(train), std::move(test)};
}

void save_dataset(const std::vector<LabeledExample>& examples, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw EvalError("cannot open dataset file for writing: " + path);
    for (const auto& ex : examples) {
        nlohmann::json j;
        nlohmann::json hex = nlohmann::json::array();
        nlohmann::json hlen = nlohmann::json::array();
        for (const auto& pkt : ex.input_unit.packets) {
            hex.push_back(pkt.header_hex + pkt.payload_hex);
            hlen.push_back(pkt.header_hex.size());
        }
        j["hex"] = hex;
        j["header_len"] = hlen;
        j["label"] = ex.label;
        out << j.dump() << '\n';
    }
}

std::vector<LabeledExample> load_dataset(const std::string& path,
                                         ingest::Granularity granularity) {
    std::ifstream in(path);
    if (!in) throw EvalError("cannot open dataset file: " + path);
    std::vector<LabeledExample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw EvalError("bad JSON on dataset line " + std::to_string(lineno) + ": " +
                            e.what());
        }
        if (!j.contains("hex") || !j.contains("header_len") || !j.contains("label"))
            throw EvalError("dataset line " + std::to_string(lineno) +
                            " lacks hex/header_len/label");
        LabeledExample ex;
        ex.input_unit.granularity = granularity;
        auto hex = j["hex"];
        auto hlen = j["header_len"];
        if (hex.size() != hlen.size())
            throw EvalError("dataset line " + std::to_string(lineno) +
                            ": hex and header_len lengths differ");
        for (size_t i = 0; i < hex.size(); ++i) {
            std::string full = hex[i].get<std::string>();
            size_t n = hlen[i].get<size_t>();
            if (n > full.size())
                throw EvalError("dataset line " + std::to_string(lineno) +
                                ": header_len exceeds packet hex length");
            ingest::PacketHex pkt;
            pkt.header_hex = full.substr(0, n);
            pkt.payload_hex = full.substr(n);
            ex.input_unit.packets.push_back(std::move(pkt));
        }
        ex.label = j["label"].get<std::string>();
        out.push_back(std::move(ex));
    }
    if (out.empty()) throw EmptyDataset("dataset file has no examples: " + path);
    return out;
}

} // namespace lens::eval
