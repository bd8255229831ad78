#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lens/eval/finetune.hpp"
#include "lens/eval/metrics.hpp"
#include "lens/eval/task.hpp"
#include "lens/tok/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace lens;
using namespace lens::eval;

namespace {

Distribution dist(std::initializer_list<std::pair<std::string, double>> kv) {
    Distribution d;
    for (auto& [k, v] : kv) d[k] = v;
    return d;
}

// Direct-formula JSD for cross-checking: base-2, mixture M = (P+Q)/2.
double jsd_direct(const Distribution& p, const Distribution& q) {
    std::set<std::string> keys;
    for (auto& [k, v] : p) keys.insert(k);
    for (auto& [k, v] : q) keys.insert(k);
    auto get = [](const Distribution& d, const std::string& k) {
        auto it = d.find(k);
        return it == d.end() ? 0.0 : it->second;
    };
    double div = 0.0;
    for (const auto& k : keys) {
        double pp = get(p, k), qq = get(q, k), m = 0.5 * (pp + qq);
        if (pp > 0) div += 0.5 * pp * std::log2(pp / m);
        if (qq > 0) div += 0.5 * qq * std::log2(qq / m);
    }
    return div;
}

tok::Vocabulary tiny_vocab(const std::vector<std::string>& words) {
    tok::Vocabulary v;
    v.tokens = {tok::kPadToken, tok::kEndToken, tok::kUnkToken,
                tok::kTskToken, tok::kHeadToken, tok::kPktToken};
    for (int k = 0; k < tok::kNumSentinels; ++k)
        v.tokens.push_back("<extra_id_" + std::to_string(k) + ">");
    for (const auto& w : words) v.tokens.push_back(w);
    v.finalize();
    return v;
}

ingest::HexUnit unit_of(const std::string& header, const std::string& payload) {
    ingest::HexUnit u;
    u.packets.push_back({header, payload});
    return u;
}

} // namespace

TEST_CASE("divergences match hand-computed values") {
    auto p = dist({{"a", 0.5}, {"b", 0.5}});
    // Overlapping-but-unequal supports, m = {a: 3/4, b: 1/4}:
    // 0.5*[0.5*lg(2/3) + 0.5*lg(2)] + 0.5*[lg(4/3)] = 0.311278124459133
    auto q = dist({{"a", 1.0}});
    CHECK(std::abs(jsd(p, q) - 0.311278124459133) < 1e-12);
    CHECK(std::abs(tvd(p, q) - 0.5) < 1e-12);

    auto s = dist({{"a", 0.9}, {"b", 0.1}});
    CHECK(std::abs(tvd(p, s) - 0.4) < 1e-12);

    CHECK(jsd(p, p) == 0.0);
    CHECK(tvd(p, p) == 0.0);

    auto r = dist({{"x", 1.0}});
    CHECK(jsd(p, r) == 1.0); // disjoint support saturates
    CHECK(std::abs(tvd(p, r) - 1.0) < 1e-12);

    // Symmetry.
    CHECK(jsd(p, q) == jsd(q, p));
    CHECK(tvd(p, s) == tvd(s, p));
}

TEST_CASE("divergences agree with the direct formula on random inputs") {
    Rng rng(71);
    for (int trial = 0; trial < 300; ++trial) {
        Distribution p, q;
        int support = 2 + static_cast<int>(rng.below(10));
        double psum = 0, qsum = 0;
        for (int k = 0; k < support; ++k) {
            std::string key = "v" + std::to_string(k);
            double pw = rng.unit(), qw = rng.unit();
            if (rng.bernoulli(0.2)) pw = 0; // partial overlap
            if (rng.bernoulli(0.2)) qw = 0;
            p[key] = pw;
            q[key] = qw;
            psum += pw;
            qsum += qw;
        }
        if (psum == 0 || qsum == 0) continue;
        for (auto& [k, v] : p) v /= psum;
        for (auto& [k, v] : q) v /= qsum;
        double direct = jsd_direct(p, q);
        CHECK(std::abs(jsd(p, q) - direct) < 1e-9);
        CHECK(jsd(p, q) >= 0.0);
        CHECK(jsd(p, q) <= 1.0);
    }
}

TEST_CASE("divergences validate their inputs") {
    auto p = dist({{"a", 0.5}, {"b", 0.5}});
    CHECK_THROWS_AS(jsd(p, dist({{"a", 0.7}, {"b", 0.5}})), NotNormalized);
    CHECK_THROWS_AS(tvd(p, dist({{"a", 1.3}, {"b", -0.3}})), NotNormalized);
    // An empty map sums to zero, so it fails normalization.
    CHECK_THROWS_AS(jsd(Distribution{}, p), NotNormalized);
}

TEST_CASE("accuracy and macro f1 match hand counts") {
    std::vector<std::string> golds{"a", "a", "b"};
    std::vector<std::string> preds{"a", "b", "b"};
    CHECK(std::abs(accuracy(preds, golds) - 2.0 / 3.0) < 1e-12);
    // Per class: a has tp=1 fp=0 fn=1, b has tp=1 fp=1 fn=0, c never occurs.
    double f1 = macro_f1(preds, golds, {"a", "b", "c"});
    CHECK(std::abs(f1 - (2.0 / 3.0 + 2.0 / 3.0 + 0.0) / 3.0) < 1e-12);

    CHECK(accuracy({"x"}, {"x"}) == 1.0);
    CHECK_THROWS_AS(accuracy({"x"}, {"x", "y"}), LengthMismatch);
    CHECK_THROWS_AS(accuracy({}, {}), EmptyList);
    CHECK_THROWS_AS(macro_f1(preds, golds, {}), EmptyList);
}

TEST_CASE("distinct-value rate applies strict parsing") {
    std::vector<std::string> ips{"1.2.3.4", "1.2.3.4", "999.1.1.1", "8.8.8.8"};
    CHECK(std::abs(dr(ips, ValueKind::IP) - 0.5) < 1e-12); // 2 distinct valid of 4
    std::vector<std::string> ports{"80", "80", "70000", "008"};
    CHECK(std::abs(dr(ports, ValueKind::PORT) - 0.25) < 1e-12);
    std::vector<std::string> lens_{"0", "65535", "65536", ""};
    CHECK(std::abs(dr(lens_, ValueKind::LEN) - 0.5) < 1e-12);
    CHECK_THROWS_AS(dr({}, ValueKind::IP), EmptyList);
}

TEST_CASE("frequencies normalize counts") {
    auto f = frequencies({"a", "a", "b", "c"});
    CHECK(f.at("a") == 0.5);
    CHECK(f.at("b") == 0.25);
    CHECK(f.at("c") == 0.25);
    double sum = 0;
    for (auto& [k, v] : f) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("distribution tables rank by real frequency with monotone cdf") {
    std::vector<std::string> real{"80", "80", "80", "443", "443", "53", "22", "22"};
    std::vector<std::string> gen{"80", "80", "443", "8080", "8080", "8080", "53", "53"};
    auto tables = distribution_report(real, gen, 3);

    REQUIRE(tables.topk.size() == 3);
    CHECK(tables.topk[0].value == "80");
    CHECK(std::abs(tables.topk[0].real_freq - 3.0 / 8.0) < 1e-12);
    CHECK(std::abs(tables.topk[0].generated_freq - 2.0 / 8.0) < 1e-12);
    CHECK(tables.topk[0].real_freq >= tables.topk[1].real_freq);
    CHECK(tables.topk[1].real_freq >= tables.topk[2].real_freq);

    // CDF covers the union support, never decreases, and ends at 1 on both
    // sides.
    REQUIRE(tables.cdf.size() == 5);
    double prev_r = 0, prev_g = 0;
    for (const auto& row : tables.cdf) {
        CHECK(row.real_cdf >= prev_r);
        CHECK(row.generated_cdf >= prev_g);
        prev_r = row.real_cdf;
        prev_g = row.generated_cdf;
    }
    CHECK(std::abs(prev_r - 1.0) < 1e-12);
    CHECK(std::abs(prev_g - 1.0) < 1e-12);

    // Numeric values sort numerically in the CDF support.
    std::vector<std::string> order;
    for (const auto& row : tables.cdf) order.push_back(row.value);
    CHECK(order == std::vector<std::string>{"22", "53", "80", "443", "8080"});
}

TEST_CASE("csv writers emit one row per table entry") {
    std::vector<std::string> real{"10", "10", "7"};
    std::vector<std::string> gen{"10", "7", "7"};
    auto tables = distribution_report(real, gen, 2);
    write_topk_csv(tables.topk, "eval_topk_tmp.csv");
    write_cdf_csv(tables.cdf, "eval_cdf_tmp.csv");
    auto count_lines = [](const std::string& path) {
        std::ifstream f(path);
        REQUIRE(f.good());
        int n = 0;
        std::string line;
        while (std::getline(f, line)) ++n;
        return n;
    };
    CHECK(count_lines("eval_topk_tmp.csv") == 3); // header + 2
    CHECK(count_lines("eval_cdf_tmp.csv") == 3);
    std::remove("eval_topk_tmp.csv");
    std::remove("eval_cdf_tmp.csv");
}

TEST_CASE("text and hex conversions invert each other") {
    CHECK(text_to_hex("80") == "3830");
    CHECK(hex_to_text("3830") == "80");
    CHECK(hex_to_text("38300000") == "80"); // trailing NULs from word padding
    Rng rng(3);
    for (int i = 0; i < 60; ++i) {
        std::string s;
        size_t n = 1 + rng.below(12);
        for (size_t k = 0; k < n; ++k)
            s.push_back(static_cast<char>(33 + rng.below(94))); // printable
        CHECK(hex_to_text(text_to_hex(s)) == s);
    }
    CHECK(normalize_label("  AbC\t") == "abc");
}

TEST_CASE("dataset split is disjoint and deterministic") {
    std::vector<LabeledExample> data;
    for (int i = 0; i < 100; ++i) {
        LabeledExample ex;
        ex.input_unit = unit_of("aaaa", "bbbb");
        ex.label = "l" + std::to_string(i);
        data.push_back(ex);
    }
    auto [train, test] = split_dataset(data, 9);
    CHECK(train.size() == 80);
    CHECK(test.size() == 20);
    std::set<std::string> seen;
    for (const auto& e : train) seen.insert(e.label);
    for (const auto& e : test) CHECK(seen.count(e.label) == 0);

    auto [train2, test2] = split_dataset(data, 9);
    for (size_t i = 0; i < test.size(); ++i) CHECK(test[i].label == test2[i].label);
    auto [train3, test3] = split_dataset(data, 10);
    bool moved = false;
    for (size_t i = 0; i < test.size(); ++i) moved |= test[i].label != test3[i].label;
    CHECK(moved);
}

TEST_CASE("dataset files round trip") {
    std::vector<LabeledExample> data;
    LabeledExample a;
    a.input_unit = unit_of("00ff", "deadbeef");
    a.label = "first label";
    data.push_back(a);
    LabeledExample b;
    b.input_unit.packets.push_back({"0102", "0304"});
    b.input_unit.packets.push_back({"0506", "0708"});
    b.label = "second";
    data.push_back(b);

    std::string path = "eval_ds_tmp.jsonl";
    save_dataset(data, path);
    auto back = load_dataset(path, ingest::Granularity::FLOW);
    std::remove(path.c_str());
    REQUIRE(back.size() == 2);
    CHECK(back[0].label == "first label");
    CHECK(back[0].input_unit.packets[0].header_hex == "00ff");
    CHECK(back[0].input_unit.packets[0].payload_hex == "deadbeef");
    CHECK(back[1].input_unit.packets.size() == 2);
    CHECK(back[1].input_unit.packets[1].payload_hex == "0708");
}

TEST_CASE("prompts lead with the task text and gate headers by task kind") {
    tok::Vocabulary v = tok::build_vanilla_vocab();
    TaskSpec und;
    und.name = "t";
    und.kind = TaskKind::Understanding;
    und.description_text = "q";
    und.label_space = {"x", "y"};
    und.granularity = ingest::Granularity::FLOW;

    auto unit = unit_of("aabb", "ccdd");
    auto prompt_u = build_prompt(und, unit, v);
    // Description pieces precede the task marker; none are header-flagged.
    auto tsk_pos = std::find(prompt_u.ids.begin(), prompt_u.ids.end(), v.tsk_id);
    REQUIRE(tsk_pos != prompt_u.ids.end());
    size_t cut = static_cast<size_t>(tsk_pos - prompt_u.ids.begin());
    CHECK(cut > 0);
    for (size_t i = 0; i <= cut; ++i) {
        CHECK(prompt_u.header_mask[i] == 0);
        CHECK(prompt_u.packet_ids[i] == 0);
    }
    // Understanding keeps the header region.
    CHECK(std::count(prompt_u.ids.begin(), prompt_u.ids.end(), v.head_id) == 1);
    CHECK(std::find(prompt_u.ids.begin(), prompt_u.ids.end(), v.id_of("aabb")) !=
          prompt_u.ids.end());

    TaskSpec gen = und;
    gen.kind = TaskKind::Generation;
    gen.label_space.clear();
    gen.field = GenField::SrcPort;
    auto prompt_g = build_prompt(gen, unit, v);
    // Generation drops headers so field values cannot be copied from input.
    CHECK(std::count(prompt_g.ids.begin(), prompt_g.ids.end(), v.head_id) == 0);
    CHECK(std::find(prompt_g.ids.begin(), prompt_g.ids.end(), v.id_of("aabb")) ==
          prompt_g.ids.end());
    CHECK(std::find(prompt_g.ids.begin(), prompt_g.ids.end(), v.id_of("ccdd")) !=
          prompt_g.ids.end());

    // Distinct units yield distinct prompts.
    auto other = build_prompt(und, unit_of("aabb", "eeff"), v);
    CHECK(other.ids != prompt_u.ids);

    // Granularity mismatches are rejected.
    TaskSpec pkt_task = und;
    pkt_task.granularity = ingest::Granularity::PACKET;
    CHECK_THROWS_AS(build_prompt(pkt_task, unit, v), GranularityMismatch);
}

TEST_CASE("task specs validate their invariants") {
    TaskSpec t;
    t.name = "bad";
    t.kind = TaskKind::Understanding;
    t.description_text = "d";
    CHECK_THROWS_AS(t.validate(), EvalError); // understanding needs labels
    t.kind = TaskKind::Generation;
    t.field = GenField::DstIp;
    t.validate();
    CHECK(field_from_name("src_ip") == GenField::SrcIp);
    CHECK(field_name(GenField::PktLen) == "pkt_len");
    CHECK(field_value_kind(GenField::DstPort) == ValueKind::PORT);
    CHECK_THROWS_AS(field_from_name("bogus"), EvalError);
}

TEST_CASE("a tiny model memorizes a two-class task") {
    // From-scratch fine-tune on eight distinguishable flows; the model must
    // reproduce the labels on the training set itself.
    tok::Vocabulary v = tiny_vocab({"6161", "6262", "aaaa", "bbbb", "cccc", "dddd",
                                    "7461", "736b", "0102", "0304"});
    TaskSpec task;
    task.name = "mark";
    task.kind = TaskKind::Understanding;
    task.description_text = "task";
    task.label_space = {"aa", "bb"};
    task.granularity = ingest::Granularity::FLOW;

    std::vector<LabeledExample> data;
    const char* fills[] = {"cccc", "dddd", "0102", "0304"};
    for (int i = 0; i < 8; ++i) {
        LabeledExample ex;
        bool first = i % 2 == 0;
        ex.input_unit =
            unit_of("0102", std::string(first ? "aaaa" : "bbbb") + fills[i / 2]);
        ex.label = first ? "aa" : "bb";
        data.push_back(ex);
    }

    model::ModelConfig mc;
    mc.vocab_size = v.size();
    mc.d_model = 32;
    mc.n_layers_enc = 1;
    mc.n_layers_dec = 1;
    mc.n_heads = 2;
    mc.d_ffn = 64;
    mc.dropout = 0.0;
    mc.max_positions = 32;
    mc.seed = 3;
    model::TrainConfig tc;
    tc.lr = 3e-3;
    tc.batch_size = 8;
    tc.warmup_steps = 0;
    tc.total_steps = 1;

    Rng init(mc.seed);
    auto params = model::init_params<float>(mc, init);
    auto tuned = finetune<float>(std::move(params), mc, tc, task, data, v, 60);

    auto report = run_understanding<float>(tuned, mc, task, data, v);
    CHECK(report.accuracy >= 0.9);
    CHECK(report.macro_f1 >= 0.9);
    CHECK(report.examples == 8);

    // Prediction is deterministic given fixed parameters.
    auto p1 = predict<float>(tuned, mc, build_prompt(task, data[0].input_unit, v), v);
    auto p2 = predict<float>(tuned, mc, build_prompt(task, data[0].input_unit, v), v);
    CHECK(p1.text == p2.text);
}
