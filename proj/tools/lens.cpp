// lens — pcap-to-model pipeline driver.
//
// Subcommands: ingest, train-tokenizer, build-corpus, pretrain, finetune,
// evaluate, sweep, verify. Exit codes: 0 success, 1 computation error,
// 2 usage or I/O error. LENS_SEED sets the default seed; --seed wins.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lens/corpus/corpus_io.hpp"
#include "lens/corpus/sampler.hpp"
#include "lens/eval/finetune.hpp"
#include "lens/eval/metrics.hpp"
#include "lens/eval/task.hpp"
#include "lens/ingest/archive.hpp"
#include "lens/ingest/flow.hpp"
#include "lens/ingest/pcap.hpp"
#include "lens/model/checkpoint.hpp"
#include "lens/model/trainer.hpp"
#include "lens/tok/vocab.hpp"
#include "lens/tok/wordpiece.hpp"
#include "lens/util/checksum.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Usage and missing-file problems; everything else that throws is either a
// corrupt input (exit 2) or a computation error (exit 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A checksum mismatch reported by `verify` or a refused stale input.
struct VerifyFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("no such file: " + path);
}

uint64_t default_seed() {
    const char* env = std::getenv("LENS_SEED");
    if (!env || !*env) return 0;
    try {
        return std::stoull(env);
    } catch (const std::exception&) {
        throw UsageError(std::string("LENS_SEED is not an integer: ") + env);
    }
}

std::string ip_to_string(uint32_t ip) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", ip >> 24, (ip >> 16) & 0xff,
                  (ip >> 8) & 0xff, ip & 0xff);
    return buf;
}

lens::ingest::Granularity granularity_from_name(const std::string& name) {
    if (name == "flow") return lens::ingest::Granularity::FLOW;
    if (name == "packet") return lens::ingest::Granularity::PACKET;
    throw UsageError("granularity must be flow or packet, got: " + name);
}

json load_json_file(const std::string& path) {
    require_file(path);
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("bad JSON in " + path + ": " + e.what());
    }
}

lens::eval::TaskSpec load_task(const std::string& path) {
    json j = load_json_file(path);
    lens::eval::TaskSpec task;
    task.name = j.value("name", "");
    std::string kind = j.value("kind", "understanding");
    if (kind == "understanding")
        task.kind = lens::eval::TaskKind::Understanding;
    else if (kind == "generation")
        task.kind = lens::eval::TaskKind::Generation;
    else
        throw UsageError("task kind must be understanding or generation: " + kind);
    task.description_text = j.value("description", "");
    if (j.contains("labels")) task.label_space = j["labels"].get<std::vector<std::string>>();
    if (j.contains("field")) task.field = lens::eval::field_from_name(j["field"]);
    task.granularity = granularity_from_name(j.value("granularity", "flow"));
    task.validate();
    return task;
}

// Declarative run configuration; any present key becomes the default for the
// matching flag, and explicit flags override it.
struct RunConfig {
    std::optional<uint64_t> seed;
    lens::model::ModelConfig model;
    lens::model::TrainConfig train;
};

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    json j = load_json_file(path);
    if (j.contains("seed")) rc.seed = j["seed"].get<uint64_t>();
    if (j.contains("model")) rc.model = lens::model::ModelConfig::from_json(j["model"]);
    if (j.contains("train")) rc.train = lens::model::TrainConfig::from_json(j["train"]);
    return rc;
}

std::vector<std::string> expand_pcap_args(const std::vector<std::string>& args) {
    std::vector<std::string> paths;
    for (const auto& a : args) {
        if (fs::is_directory(a)) {
            std::vector<std::string> found;
            for (const auto& entry : fs::directory_iterator(a))
                if (entry.is_regular_file() && entry.path().extension() == ".pcap")
                    found.push_back(entry.path().string());
            std::sort(found.begin(), found.end());
            if (found.empty()) throw UsageError("no .pcap files in directory: " + a);
            paths.insert(paths.end(), found.begin(), found.end());
        } else {
            require_file(a);
            paths.push_back(a);
        }
    }
    if (paths.empty()) throw UsageError("no pcap inputs given");
    return paths;
}

std::string label_for(const lens::ingest::SessionFlow& flow, const lens::ingest::HexUnit& unit,
                      lens::eval::GenField field) {
    using lens::eval::GenField;
    switch (field) {
        case GenField::SrcIp: return ip_to_string(flow.first_src.ip);
        case GenField::DstIp: return ip_to_string(flow.first_dst.ip);
        case GenField::SrcPort: return std::to_string(flow.first_src.port);
        case GenField::DstPort: return std::to_string(flow.first_dst.port);
        case GenField::PktLen:
            return std::to_string((unit.packets.at(0).header_hex.size() +
                                   unit.packets.at(0).payload_hex.size()) /
                                  2);
    }
    throw UsageError("unknown dataset field");
}

int cmd_ingest(const std::vector<std::string>& inputs, const std::string& out,
               const std::string& report_path, uint64_t seed, const std::string& dataset_path,
               const std::string& dataset_field, bool label_from_stem,
               const std::string& granularity, int max_packets) {
    auto paths = expand_pcap_args(inputs);

    lens::ingest::FlowArchive archive;
    archive.seed = seed;
    lens::ingest::IngestReport report;
    std::vector<std::string> flow_sources; // source pcap per archived flow

    for (const auto& path : paths) {
        auto packets = lens::ingest::parse_pcap(path);
        auto extraction = lens::ingest::extract_flows(packets);
        report.files += 1;
        report.packets += packets.size();
        report.flows += extraction.flows.size();
        report.skipped += extraction.skipped;
        for (const auto& [reason, n] : extraction.skip_reasons) report.reasons[reason] += n;
        for (const auto& flow : extraction.flows) {
            archive.flows.push_back(lens::ingest::anonymize(flow));
            flow_sources.push_back(path);
        }
        archive.inputs.emplace_back(path, lens::file_checksum(path));
    }

    lens::ingest::save_flow_archive(archive, out);

    if (!dataset_path.empty()) {
        auto g = granularity_from_name(granularity);
        std::vector<lens::eval::LabeledExample> examples;
        for (size_t i = 0; i < archive.flows.size(); ++i) {
            const auto& flow = archive.flows[i];
            for (auto& unit : lens::ingest::to_hex_unit(flow, g, max_packets)) {
                lens::eval::LabeledExample ex;
                if (label_from_stem)
                    ex.label = fs::path(flow_sources[i]).stem().string();
                else
                    ex.label = label_for(flow, unit, lens::eval::field_from_name(dataset_field));
                ex.input_unit = std::move(unit);
                examples.push_back(std::move(ex));
            }
        }
        lens::eval::save_dataset(examples, dataset_path);
    }

    std::string text = report.to_json();
    if (report_path.empty()) {
        std::cout << text << "\n";
    } else {
        std::ofstream rf(report_path, std::ios::trunc);
        if (!rf) throw UsageError("cannot write report: " + report_path);
        rf << text << "\n";
    }
    return 0;
}

int cmd_train_tokenizer(const std::string& scheme, const std::string& archive_path,
                        int64_t target_size, const std::string& out, uint64_t seed,
                        const std::string& granularity) {
    lens::tok::Vocabulary vocab;
    std::vector<std::pair<std::string, uint64_t>> inputs;
    if (scheme == "vanilla") {
        vocab = lens::tok::build_vanilla_vocab();
        vocab.seed = seed;
    } else if (scheme == "wordpiece_word" || scheme == "wordpiece_pd") {
        if (archive_path.empty())
            throw UsageError("--archive is required for WordPiece schemes");
        require_file(archive_path);
        if (target_size <= 0) throw UsageError("--target-size is required and must be > 0");
        auto archive = lens::ingest::load_flow_archive(archive_path);
        auto g = granularity_from_name(granularity);
        std::vector<lens::ingest::HexUnit> units;
        for (const auto& flow : archive.flows)
            for (auto& unit : lens::ingest::to_hex_unit(flow, g))
                units.push_back(std::move(unit));
        lens::tok::WordPieceOptions opts;
        opts.target_size = target_size;
        opts.seed = seed;
        if (scheme == "wordpiece_pd") {
            auto predefined = lens::tok::build_vanilla_vocab();
            vocab = lens::tok::train_wordpiece(units, opts, &predefined);
        } else {
            vocab = lens::tok::train_wordpiece(units, opts, nullptr);
        }
        vocab.seed = seed;
        inputs.emplace_back(archive_path, lens::file_checksum(archive_path));
    } else {
        throw UsageError("scheme must be vanilla, wordpiece_word or wordpiece_pd: " + scheme);
    }
    lens::tok::save_vocab(vocab, out, inputs);
    std::cout << "{\"scheme\":\"" << scheme << "\",\"tokens\":" << vocab.size()
              << ",\"checksum\":" << lens::tok::vocab_checksum(vocab) << "}\n";
    return 0;
}

int cmd_build_corpus(const std::string& archive_path, const std::string& vocab_path,
                     const std::string& out, uint64_t seed, const std::string& granularity,
                     bool with_headers, const lens::corpus::SamplerConfig& base) {
    require_file(archive_path);
    require_file(vocab_path);
    auto archive = lens::ingest::load_flow_archive(archive_path);
    auto vocab = lens::tok::load_vocab(vocab_path);
    auto g = granularity_from_name(granularity);

    std::vector<lens::tok::TokenSeq> seqs;
    for (const auto& flow : archive.flows)
        for (const auto& unit : lens::ingest::to_hex_unit(flow, g))
            seqs.push_back(lens::tok::encode(vocab, unit, with_headers));

    lens::corpus::SamplerConfig cfg = base;
    cfg.seed = seed;
    auto examples = lens::corpus::build_corpus(seqs, vocab, cfg);

    lens::corpus::CorpusMeta meta;
    meta.vocab_checksum = lens::tok::vocab_checksum(vocab);
    meta.archive_checksum = lens::file_checksum(archive_path);
    meta.seed = seed;
    lens::corpus::CorpusWriter writer(out, meta);
    for (const auto& ex : examples) writer.write(ex);
    writer.close();

    // Extend the manifest with the sampler settings and realized rates.
    std::string mpath = lens::corpus::manifest_path(out);
    json manifest = load_json_file(mpath);
    manifest["config"] = {{"mask_prob", cfg.mask_prob},     {"max_span", cfg.max_span},
                          {"pop_rate", cfg.pop_rate},       {"htp_rate", cfg.htp_rate},
                          {"homologous_prob", cfg.homologous_prob},
                          {"with_headers", with_headers},   {"granularity", granularity}};
    double n = std::max<double>(1.0, manifest["examples"].get<double>());
    manifest["pop_rate_realized"] = manifest["pop_applied"].get<double>() / n;
    manifest["htp_rate_realized"] =
        manifest["htp_applied"].get<double>() /
        std::max(1.0, n - manifest["pop_applied"].get<double>());
    std::ofstream mf(mpath, std::ios::trunc);
    mf << manifest.dump(2) << "\n";
    std::cout << manifest.dump(2) << "\n";
    return 0;
}

// Shared by pretrain and sweep: train on a corpus for a step count, return
// final params (float) and the last loss record.
template <typename T>
std::pair<lens::model::Params<float>, lens::model::LossRecord> run_pretrain(
    const std::vector<lens::model::BatchExample>& examples, const lens::model::ModelConfig& mc,
    const lens::model::TrainConfig& tc, lens::model::TrainLog* log) {
    using namespace lens::model;
    Trainer<T> trainer(mc, tc);
    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = order.size(); // force a shuffle on first use
    uint64_t pass = 0;
    LossRecord last;
    const size_t bs = static_cast<size_t>(tc.batch_size);
    while (trainer.updates() < tc.total_steps) {
        Batch batch;
        while (batch.examples.size() < bs) {
            if (cursor == order.size()) {
                lens::Rng r = lens::Rng::substream(mc.seed ^ 0x9e3779b97f4a7c15ULL, ++pass);
                r.shuffle(order);
                cursor = 0;
            }
            batch.examples.push_back(examples[order[cursor++]]);
        }
        LossRecord rec = trainer.micro_step(batch);
        if (rec.applied_update) {
            last = rec;
            if (log) log->append(rec);
        }
    }
    if constexpr (std::is_same_v<T, float>)
        return {std::move(trainer.params()), last};
    else
        return {params_cast<float>(trainer.params()), last};
}

std::vector<lens::model::BatchExample> corpus_batch_examples(
    const std::vector<lens::corpus::PretrainExample>& examples) {
    std::vector<lens::model::BatchExample> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(lens::model::to_batch_example(ex));
    return out;
}

// Smallest power-of-two-free position budget covering every sequence.
int32_t needed_positions(const std::vector<lens::model::BatchExample>& examples) {
    size_t longest = 1;
    for (const auto& ex : examples) {
        longest = std::max(longest, ex.enc_ids.size());
        longest = std::max(longest, ex.dec_targets.size());
    }
    return static_cast<int32_t>(longest);
}

int cmd_pretrain(const std::string& corpus_path, const std::string& vocab_path,
                 const std::string& out, const std::string& log_path,
                 lens::model::ModelConfig mc, const lens::model::TrainConfig& tc,
                 int64_t steps, uint64_t seed, const std::string& precision) {
    require_file(corpus_path);
    require_file(vocab_path);
    lens::corpus::CorpusMeta meta;
    auto corpus = lens::corpus::CorpusReader::read_all(corpus_path, &meta);
    auto vocab = lens::tok::load_vocab(vocab_path);
    if (lens::tok::vocab_checksum(vocab) != meta.vocab_checksum)
        throw VerifyFailure("vocabulary checksum does not match the corpus manifest; "
                            "refusing to train with a mismatched tokenizer");

    auto examples = corpus_batch_examples(corpus);
    mc.vocab_size = static_cast<int32_t>(vocab.size());
    mc.seed = seed;
    if (mc.max_positions < needed_positions(examples))
        mc.max_positions = needed_positions(examples);

    json provenance{{"seed", seed},
                    {"corpus", corpus_path},
                    {"corpus_checksum", lens::file_checksum(corpus_path)},
                    {"vocab_checksum", meta.vocab_checksum},
                    {"steps", steps}};

    if (steps == 0) {
        lens::Rng init_rng(mc.seed);
        auto params = lens::model::init_params<float>(mc, init_rng);
        lens::model::save_checkpoint(params, mc, out, provenance.dump());
        std::cout << "{\"steps\":0}\n";
        return 0;
    }

    lens::model::TrainConfig tc_run = tc;
    tc_run.total_steps = steps > 0 ? steps : tc.total_steps;
    if (tc_run.warmup_steps > tc_run.total_steps) tc_run.warmup_steps = tc_run.total_steps;

    lens::model::TrainLog log(log_path.empty() ? out + ".log.jsonl" : log_path);
    std::pair<lens::model::Params<float>, lens::model::LossRecord> result =
        precision == "double"
            ? run_pretrain<double>(examples, mc, tc_run, &log)
            : run_pretrain<float>(examples, mc, tc_run, &log);

    provenance["steps"] = tc_run.total_steps;
    lens::model::save_checkpoint(result.first, mc, out, provenance.dump());
    std::printf("{\"steps\":%lld,\"final_total\":%.10g,\"final_msp\":%.10g}\n",
                static_cast<long long>(tc_run.total_steps), result.second.total,
                result.second.msp);
    return 0;
}

int cmd_sweep(const std::string& corpus_path, const std::string& vocab_path,
              const std::string& out, std::vector<double> alphas, std::vector<double> betas,
              lens::model::ModelConfig mc, const lens::model::TrainConfig& tc, int64_t steps,
              uint64_t seed, const std::string& precision) {
    require_file(corpus_path);
    require_file(vocab_path);
    if (alphas.empty() || betas.empty()) throw UsageError("--alphas and --betas must be non-empty");
    lens::corpus::CorpusMeta meta;
    auto corpus = lens::corpus::CorpusReader::read_all(corpus_path, &meta);
    auto vocab = lens::tok::load_vocab(vocab_path);
    if (lens::tok::vocab_checksum(vocab) != meta.vocab_checksum)
        throw VerifyFailure("vocabulary checksum does not match the corpus manifest");

    auto examples = corpus_batch_examples(corpus);
    mc.vocab_size = static_cast<int32_t>(vocab.size());
    mc.seed = seed;
    if (mc.max_positions < needed_positions(examples))
        mc.max_positions = needed_positions(examples);
    lens::model::TrainConfig tc_run = tc;
    if (steps > 0) tc_run.total_steps = steps;
    if (tc_run.warmup_steps > tc_run.total_steps) tc_run.warmup_steps = tc_run.total_steps;

    // Each cell is an independent run from the same seed: same init, same
    // batch order, different loss weights only.
    std::vector<std::vector<double>> grid(betas.size(), std::vector<double>(alphas.size()));
    for (size_t bi = 0; bi < betas.size(); ++bi) {
        for (size_t ai = 0; ai < alphas.size(); ++ai) {
            lens::model::ModelConfig cell = mc;
            cell.alpha = alphas[ai];
            cell.beta = betas[bi];
            auto [params, last] = precision == "double"
                                      ? run_pretrain<double>(examples, cell, tc_run, nullptr)
                                      : run_pretrain<float>(examples, cell, tc_run, nullptr);
            grid[bi][ai] = lens::model::msp_token_accuracy(params, cell, examples);
        }
    }

    // Row = beta, column = alpha.
    std::printf("%8s", "b \\ a");
    for (double a : alphas) std::printf("  %8.3g", a);
    std::printf("\n");
    for (size_t bi = 0; bi < betas.size(); ++bi) {
        std::printf("%8.3g", betas[bi]);
        for (size_t ai = 0; ai < alphas.size(); ++ai) std::printf("  %8.4f", grid[bi][ai]);
        std::printf("\n");
    }

    if (!out.empty()) {
        json j{{"alphas", alphas},
               {"betas", betas},
               {"msp_accuracy", grid},
               {"steps", tc_run.total_steps},
               {"seed", seed},
               {"corpus_checksum", lens::file_checksum(corpus_path)}};
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw UsageError("cannot write sweep report: " + out);
        f << j.dump(2) << "\n";
    }
    return 0;
}

int cmd_finetune(const std::string& ckpt_path, const std::string& dataset_path,
                 const std::string& task_path, const std::string& out,
                 lens::model::TrainConfig tc, int epochs, uint64_t seed,
                 const std::string& vocab_path, const std::string& precision) {
    require_file(ckpt_path);
    require_file(dataset_path);
    require_file(task_path);
    require_file(vocab_path);
    auto ckpt = lens::model::load_checkpoint(ckpt_path);
    auto task = load_task(task_path);
    auto vocab = lens::tok::load_vocab(vocab_path);
    if (static_cast<int64_t>(vocab.size()) != ckpt.config.vocab_size)
        throw VerifyFailure("vocabulary size does not match the checkpoint");
    auto dataset = lens::eval::load_dataset(dataset_path, task.granularity);
    auto [train, test] = lens::eval::split_dataset(dataset, seed);

    lens::model::ModelConfig mc = ckpt.config;
    mc.seed = seed;
    // Prompts may be longer than anything seen in pre-training.
    auto probe = lens::eval::build_finetune_examples(task, train, vocab);
    if (mc.max_positions < needed_positions(probe)) mc.max_positions = needed_positions(probe);

    lens::model::Params<float> tuned_f;
    if (precision == "double") {
        auto tuned = lens::eval::finetune<double>(lens::model::params_cast<double>(ckpt.params),
                                                  mc, tc, task, train, vocab, epochs);
        tuned_f = lens::model::params_cast<float>(tuned);
    } else {
        tuned_f = lens::eval::finetune<float>(std::move(ckpt.params), mc, tc, task, train,
                                              vocab, epochs);
    }

    json provenance{{"seed", seed},
                    {"task", task.name},
                    {"epochs", epochs},
                    {"base_checkpoint", ckpt_path},
                    {"base_checksum", lens::file_checksum(ckpt_path)},
                    {"dataset_checksum", lens::file_checksum(dataset_path)}};
    // max_positions may have grown to fit prompts; persist the working config.
    lens::model::save_checkpoint(tuned_f, mc, out, provenance.dump());
    std::printf("{\"train\":%zu,\"test\":%zu,\"epochs\":%d}\n", train.size(), test.size(),
                epochs);
    return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& dataset_path,
                 const std::string& task_path, const std::string& out,
                 const std::string& csv_dir, const std::string& split, uint64_t seed,
                 const std::string& vocab_path, int topk) {
    require_file(ckpt_path);
    require_file(dataset_path);
    require_file(task_path);
    require_file(vocab_path);
    auto ckpt = lens::model::load_checkpoint(ckpt_path);
    auto task = load_task(task_path);
    auto vocab = lens::tok::load_vocab(vocab_path);
    if (static_cast<int64_t>(vocab.size()) != ckpt.config.vocab_size)
        throw VerifyFailure("vocabulary size does not match the checkpoint");
    auto dataset = lens::eval::load_dataset(dataset_path, task.granularity);

    std::vector<lens::eval::LabeledExample> subset;
    if (split == "all") {
        subset = dataset;
    } else {
        auto [train, test] = lens::eval::split_dataset(dataset, seed);
        if (split == "train")
            subset = std::move(train);
        else if (split == "test")
            subset = std::move(test);
        else
            throw UsageError("--split must be train, test or all: " + split);
    }

    lens::eval::EvalReport report;
    if (task.kind == lens::eval::TaskKind::Understanding) {
        report = lens::eval::run_understanding<float>(ckpt.params, ckpt.config, task, subset,
                                                      vocab);
    } else {
        report = lens::eval::run_generation<float>(ckpt.params, ckpt.config, task, subset,
                                                   vocab, topk);
        fs::path dir = csv_dir.empty() ? fs::path(out).parent_path() : fs::path(csv_dir);
        if (!dir.empty()) fs::create_directories(dir);
        lens::eval::write_topk_csv(report.tables.topk, (dir / "topk.csv").string());
        lens::eval::write_cdf_csv(report.tables.cdf, (dir / "cdf.csv").string());
    }

    json j = json::parse(report.to_json());
    j["seed"] = seed;
    j["split"] = split;
    j["checkpoint_checksum"] = lens::file_checksum(ckpt_path);
    j["dataset_checksum"] = lens::file_checksum(dataset_path);
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw UsageError("cannot write report: " + out);
    f << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_verify(const std::string& archive_path, const std::string& corpus_path,
               const std::string& vocab_path, const std::string& ckpt_path) {
    if (archive_path.empty() && corpus_path.empty() && ckpt_path.empty() && vocab_path.empty())
        throw UsageError("nothing to verify; pass --archive, --corpus, --vocab or --checkpoint");
    std::vector<std::string> failures;
    auto check = [&](bool ok, const std::string& what) {
        std::printf("[%s] %s\n", ok ? "ok" : "MISMATCH", what.c_str());
        if (!ok) failures.push_back(what);
    };

    if (!archive_path.empty()) {
        require_file(archive_path);
        auto archive = lens::ingest::load_flow_archive(archive_path);
        for (const auto& [src, recorded] : archive.inputs) {
            require_file(src);
            check(lens::file_checksum(src) == recorded, archive_path + " <- " + src);
        }
    }
    if (!vocab_path.empty()) {
        require_file(vocab_path);
        for (const auto& [src, recorded] : lens::tok::vocab_inputs(vocab_path)) {
            require_file(src);
            check(lens::file_checksum(src) == recorded, vocab_path + " <- " + src);
        }
    }
    if (!corpus_path.empty()) {
        require_file(corpus_path);
        lens::corpus::CorpusReader reader(corpus_path);
        if (!vocab_path.empty()) {
            auto vocab = lens::tok::load_vocab(vocab_path);
            check(lens::tok::vocab_checksum(vocab) == reader.meta().vocab_checksum,
                  corpus_path + " <- " + vocab_path);
        }
        if (!archive_path.empty())
            check(lens::file_checksum(archive_path) == reader.meta().archive_checksum,
                  corpus_path + " <- " + archive_path);
    }
    if (!ckpt_path.empty()) {
        require_file(ckpt_path);
        auto ckpt = lens::model::load_checkpoint(ckpt_path);
        if (!ckpt.provenance.empty()) {
            json p = json::parse(ckpt.provenance);
            if (p.contains("corpus_checksum") && !corpus_path.empty())
                check(lens::file_checksum(corpus_path) == p["corpus_checksum"].get<uint64_t>(),
                      ckpt_path + " <- " + corpus_path);
            if (p.contains("vocab_checksum") && !vocab_path.empty())
                check(lens::tok::vocab_checksum(lens::tok::load_vocab(vocab_path)) ==
                          p["vocab_checksum"].get<uint64_t>(),
                      ckpt_path + " <- " + vocab_path);
        }
    }
    if (!failures.empty()) throw VerifyFailure(std::to_string(failures.size()) + " mismatch(es)");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pcap-to-model traffic pipeline"};
    app.require_subcommand(1);

    uint64_t seed = 0;
    bool seed_given = false;
    std::string config_path;
    app.add_flag_callback("--version", [] { std::cout << "lens 1.0\n"; std::exit(0); },
                          "print version and exit");
    auto* seed_opt = app.add_option("--seed", seed, "seed for all randomized stages");
    app.add_option("--config", config_path, "JSON config file (flags override it)");

    // ingest
    auto* ing = app.add_subcommand("ingest", "parse pcaps into an anonymized flow archive");
    std::vector<std::string> ing_inputs;
    std::string ing_out, ing_report, ing_dataset, ing_field = "src_port",
                                                  ing_granularity = "flow";
    bool ing_stem = false;
    int ing_max_packets = -1;
    ing->add_option("pcaps", ing_inputs, "pcap files or directories")->required();
    ing->add_option("--out", ing_out, "archive output path")->required();
    ing->add_option("--report", ing_report, "ingest report path (default stdout)");
    ing->add_option("--emit-dataset", ing_dataset, "also write a labeled JSONL dataset");
    ing->add_option("--field", ing_field,
                    "dataset label field: src_ip dst_ip src_port dst_port pkt_len");
    ing->add_flag("--label-from-stem", ing_stem, "label = source pcap filename stem");
    ing->add_option("--granularity", ing_granularity, "dataset unit granularity: flow|packet");
    ing->add_option("--max-packets", ing_max_packets, "packets per unit (default per granularity)");

    // train-tokenizer
    auto* tt = app.add_subcommand("train-tokenizer", "build or train a vocabulary");
    std::string tt_scheme, tt_archive, tt_out, tt_granularity = "flow";
    int64_t tt_target = 0;
    tt->add_option("--scheme", tt_scheme, "vanilla | wordpiece_word | wordpiece_pd")->required();
    tt->add_option("--archive", tt_archive, "flow archive (WordPiece schemes)");
    tt->add_option("--target-size", tt_target, "exact vocabulary size (WordPiece schemes)");
    tt->add_option("--out", tt_out, "vocabulary output path")->required();
    tt->add_option("--granularity", tt_granularity, "training unit granularity: flow|packet");

    // build-corpus
    auto* bc = app.add_subcommand("build-corpus", "sample a pre-training corpus");
    std::string bc_archive, bc_vocab, bc_out, bc_granularity = "flow";
    bool bc_no_headers = false;
    lens::corpus::SamplerConfig bc_cfg;
    bc->add_option("--archive", bc_archive, "flow archive")->required();
    bc->add_option("--vocab", bc_vocab, "vocabulary file")->required();
    bc->add_option("--out", bc_out, "corpus output path")->required();
    bc->add_option("--granularity", bc_granularity, "unit granularity: flow|packet");
    bc->add_flag("--no-headers", bc_no_headers, "encode payload only");
    bc->add_option("--mask-prob", bc_cfg.mask_prob, "span mask probability");
    bc->add_option("--max-span", bc_cfg.max_span, "maximum span length");
    bc->add_option("--pop-rate", bc_cfg.pop_rate, "packet-shuffle rate");
    bc->add_option("--htp-rate", bc_cfg.htp_rate, "recombination rate");
    bc->add_option("--homologous-prob", bc_cfg.homologous_prob, "same-flow recombination share");

    // pretrain
    auto* pt = app.add_subcommand("pretrain", "train a model on a corpus");
    std::string pt_corpus, pt_vocab, pt_out, pt_log, pt_precision = "float";
    int64_t pt_steps = -1;
    pt->add_option("--corpus", pt_corpus, "corpus file")->required();
    pt->add_option("--vocab", pt_vocab, "vocabulary file")->required();
    pt->add_option("--out", pt_out, "checkpoint output path")->required();
    pt->add_option("--log", pt_log, "training log path (default <out>.log.jsonl)");
    pt->add_option("--steps", pt_steps, "optimizer steps (0 = save initialization)");
    pt->add_option("--precision", pt_precision, "float | double");
    double pt_lr = 0, pt_alpha = -1, pt_beta = -1, pt_dropout = -1;
    int pt_batch = 0, pt_accum = 0, pt_warmup = -1, pt_d_model = 0, pt_layers = 0, pt_heads = 0,
        pt_ffn = 0;
    pt->add_option("--lr", pt_lr, "peak learning rate");
    pt->add_option("--batch-size", pt_batch, "examples per micro-batch");
    pt->add_option("--grad-accum", pt_accum, "micro-batches per optimizer step");
    pt->add_option("--warmup", pt_warmup, "linear warmup steps");
    pt->add_option("--alpha", pt_alpha, "packet-order loss weight");
    pt->add_option("--beta", pt_beta, "homologous loss weight");
    pt->add_option("--dropout", pt_dropout, "dropout rate");
    pt->add_option("--d-model", pt_d_model, "model width");
    pt->add_option("--layers", pt_layers, "encoder and decoder layer count");
    pt->add_option("--heads", pt_heads, "attention heads");
    pt->add_option("--d-ffn", pt_ffn, "feed-forward width");

    // finetune
    auto* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on a labeled task");
    std::string ft_ckpt, ft_dataset, ft_task, ft_out, ft_vocab, ft_precision = "float";
    int ft_epochs = 10;
    double ft_lr = 3e-5;
    int ft_batch = 32;
    ft->add_option("--checkpoint", ft_ckpt, "base checkpoint")->required();
    ft->add_option("--dataset", ft_dataset, "labeled JSONL dataset")->required();
    ft->add_option("--task", ft_task, "task spec JSON")->required();
    ft->add_option("--vocab", ft_vocab, "vocabulary file")->required();
    ft->add_option("--out", ft_out, "tuned checkpoint output path")->required();
    ft->add_option("--epochs", ft_epochs, "training epochs");
    ft->add_option("--lr", ft_lr, "learning rate");
    ft->add_option("--batch-size", ft_batch, "batch size");
    ft->add_option("--precision", ft_precision, "float | double");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a labeled task");
    std::string ev_ckpt, ev_dataset, ev_task, ev_out, ev_vocab, ev_csv, ev_split = "test";
    int ev_topk = 5;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint")->required();
    ev->add_option("--dataset", ev_dataset, "labeled JSONL dataset")->required();
    ev->add_option("--task", ev_task, "task spec JSON")->required();
    ev->add_option("--vocab", ev_vocab, "vocabulary file")->required();
    ev->add_option("--out", ev_out, "report JSON output path")->required();
    ev->add_option("--csv-dir", ev_csv, "directory for topk.csv/cdf.csv (generation)");
    ev->add_option("--split", ev_split, "train | test | all (default test)");
    ev->add_option("--topk", ev_topk, "rows in the top-k table");

    // sweep
    auto* sw = app.add_subcommand("sweep", "grid of pre-training runs over loss weights");
    std::string sw_corpus, sw_vocab, sw_out, sw_precision = "float";
    std::vector<double> sw_alphas{0.1, 0.2}, sw_betas{0.1, 0.2};
    int64_t sw_steps = 0;
    sw->add_option("--corpus", sw_corpus, "corpus file")->required();
    sw->add_option("--vocab", sw_vocab, "vocabulary file")->required();
    sw->add_option("--out", sw_out, "grid report JSON path");
    sw->add_option("--alphas", sw_alphas, "alpha values")->delimiter(',');
    sw->add_option("--betas", sw_betas, "beta values")->delimiter(',');
    sw->add_option("--steps", sw_steps, "optimizer steps per cell")->required();
    sw->add_option("--precision", sw_precision, "float | double");

    // verify
    auto* vf = app.add_subcommand("verify", "re-validate artifact checksums");
    std::string vf_archive, vf_corpus, vf_vocab, vf_ckpt;
    vf->add_option("--archive", vf_archive, "flow archive to verify");
    vf->add_option("--corpus", vf_corpus, "corpus to verify");
    vf->add_option("--vocab", vf_vocab, "vocabulary to verify");
    vf->add_option("--checkpoint", vf_ckpt, "checkpoint to verify");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig rc = load_run_config(config_path);
        seed_given = seed_opt->count() > 0;
        if (!seed_given) seed = rc.seed ? *rc.seed : default_seed();

        lens::model::ModelConfig mc = rc.model;
        lens::model::TrainConfig tc = rc.train;

        if (app.got_subcommand(ing))
            return cmd_ingest(ing_inputs, ing_out, ing_report, seed, ing_dataset, ing_field,
                              ing_stem, ing_granularity, ing_max_packets);
        if (app.got_subcommand(tt))
            return cmd_train_tokenizer(tt_scheme, tt_archive, tt_target, tt_out, seed,
                                       tt_granularity);
        if (app.got_subcommand(bc))
            return cmd_build_corpus(bc_archive, bc_vocab, bc_out, seed, bc_granularity,
                                    !bc_no_headers, bc_cfg);
        if (app.got_subcommand(pt)) {
            if (pt_lr > 0) tc.lr = pt_lr;
            if (pt_batch > 0) tc.batch_size = pt_batch;
            if (pt_accum > 0) tc.grad_accum = pt_accum;
            if (pt_warmup >= 0) tc.warmup_steps = pt_warmup;
            if (pt_alpha >= 0) mc.alpha = pt_alpha;
            if (pt_beta >= 0) mc.beta = pt_beta;
            if (pt_dropout >= 0) mc.dropout = pt_dropout;
            if (pt_d_model > 0) mc.d_model = pt_d_model;
            if (pt_layers > 0) mc.n_layers_enc = mc.n_layers_dec = pt_layers;
            if (pt_heads > 0) mc.n_heads = pt_heads;
            if (pt_ffn > 0) mc.d_ffn = pt_ffn;
            return cmd_pretrain(pt_corpus, pt_vocab, pt_out, pt_log, mc, tc, pt_steps, seed,
                                pt_precision);
        }
        if (app.got_subcommand(ft)) {
            tc.lr = ft_lr;
            tc.batch_size = ft_batch;
            tc.warmup_steps = 0;
            tc.grad_accum = 1;
            tc.total_steps = 1; // finetune derives its own step count from epochs
            return cmd_finetune(ft_ckpt, ft_dataset, ft_task, ft_out, tc, ft_epochs, seed,
                                ft_vocab, ft_precision);
        }
        if (app.got_subcommand(ev))
            return cmd_evaluate(ev_ckpt, ev_dataset, ev_task, ev_out, ev_csv, ev_split, seed,
                                ev_vocab, ev_topk);
        if (app.got_subcommand(sw))
            return cmd_sweep(sw_corpus, sw_vocab, sw_out, sw_alphas, sw_betas, mc, tc, sw_steps,
                             seed, sw_precision);
        if (app.got_subcommand(vf)) return cmd_verify(vf_archive, vf_corpus, vf_vocab, vf_ckpt);
        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const lens::ingest::IngestError& e) {
        // Corrupt or unreadable capture input.
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
