#include "ptft/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ptft/baselines.hpp"
#include "ptft/checkpoint.hpp"
#include "ptft/data.hpp"
#include "ptft/error.hpp"
#include "ptft/finetune.hpp"
#include "ptft/io.hpp"
#include "ptft/metrics.hpp"
#include "ptft/pretrain.hpp"
#include "ptft/synth.hpp"
#include "ptft/tokenizer.hpp"

namespace ptft::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kCommands{"make-data", "train-tokenizer", "pretrain", "finetune",
                                         "evaluate",  "predict",         "baseline", "report"};

std::string pretty(const json& doc) {
    return doc.dump(2) + "\n";
}

void write_json(const fs::path& path, const json& doc) {
    write_text_atomic(path, pretty(doc));
}

// Keys of `doc` that belong to a typed config whose defaults are `schema`.
json pick(const json& doc, const json& schema) {
    json out = json::object();
    for (const auto& [key, value] : schema.items()) {
        if (doc.contains(key)) {
            out[key] = doc.at(key);
        }
    }
    return out;
}

fs::path required_path(const json& doc, const std::string& key) {
    const json& v = doc.at(key);
    if (v.is_null()) {
        throw Error("config: '" + key + "' is required");
    }
    if (!v.is_string()) {
        throw Error("config: '" + key + "' must be a path string");
    }
    return fs::path{v.get<std::string>()};
}

fs::path output_dir(const json& doc) {
    fs::path dir = required_path(doc, "output_dir");
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> text_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") != std::string_view::npos) {
            lines.emplace_back(line);
        }
        start = end + 1;
    }
    return lines;
}

// One text column of a CSV file, in row order.
std::vector<std::string> csv_column(const fs::path& path, const std::string& column) {
    const auto rows = parse_csv(read_text_file(path));
    if (rows.empty()) {
        throw Error("csv: no header row in " + path.string());
    }
    auto it = std::find(rows.front().begin(), rows.front().end(), column);
    if (it == rows.front().end()) {
        throw Error("csv: missing column '" + column + "' in " + path.string());
    }
    const auto c = static_cast<std::size_t>(it - rows.front().begin());
    std::vector<std::string> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size()) {
            throw Error("csv: row " + std::to_string(r) + " of " + path.string() + " has " +
                        std::to_string(rows[r].size()) + " fields, header has " + std::to_string(rows.front().size()));
        }
        out.push_back(rows[r][c]);
    }
    return out;
}

// Plain text (one document per line) or, with a text column, a CSV file.
std::vector<std::string> corpus_documents(const fs::path& path, const json& text_column) {
    if (text_column.is_null()) {
        return text_lines(read_text_file(path));
    }
    return csv_column(path, text_column.get<std::string>());
}

json run_record(std::string_view command, const json& config, json extra) {
    json rec{{"command", command}, {"version", kVersion}, {"name", config.value("name", json{})}};
    if (config.contains("seed")) {
        rec["seed"] = config.at("seed");
    }
    for (auto& [key, value] : extra.items()) {
        rec[key] = value;
    }
    return rec;
}

// --- data --------------------------------------------------------------------

json data_defaults() {
    return {{"path", nullptr},         {"train", nullptr},       {"dev", nullptr},
            {"test", nullptr},         {"text_column", "text"},  {"label_column", "label"},
            {"label_kind", "class"},   {"test_size", 0.2},       {"dev_size", 0.1},
            {"stratify", nullptr}};
}

// Re-expresses ds's class ids in terms of `names`; unknown labels are errors.
void align_labels(LabeledDataset& ds, const std::vector<std::string>& names, const fs::path& source) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < names.size(); ++i) {
        index.emplace(names[i], i);
    }
    for (auto& r : ds.records) {
        const std::string& label = ds.label_names.at(static_cast<std::size_t>(r.label));
        auto it = index.find(label);
        if (it == index.end()) {
            throw Error("label '" + label + "' in " + source.string() + " does not occur in the training data");
        }
        r.label = static_cast<double>(it->second);
    }
    ds.label_names = names;
}

struct Splits {
    LabeledDataset train, dev, test;
    json manifest;
};

Splits load_splits(const json& data, std::uint64_t seed) {
    const LabelKind kind = parse_label_kind(data.at("label_kind").get<std::string>());
    const std::string text_col = data.at("text_column").get<std::string>();
    const std::string label_col = data.at("label_column").get<std::string>();
    const bool stratify = data.at("stratify").is_null() ? kind == LabelKind::class_id : data.at("stratify").get<bool>();
    const SplitSize test_size{data.at("test_size").get<double>()};
    const SplitSize dev_size{data.at("dev_size").get<double>()};
    auto load = [&](const char* key) {
        return load_csv(required_path(data, key), text_col, label_col, kind);
    };

    Splits s;
    if (!data.at("path").is_null()) {
        if (!data.at("train").is_null() || !data.at("test").is_null() || !data.at("dev").is_null()) {
            throw Error("config: data.path cannot be combined with data.train/dev/test");
        }
        LabeledDataset all = load("path");
        const SplitIndices idx = split(all, test_size, dev_size, seed, stratify);
        s.train = subset(all, idx.train);
        s.dev = subset(all, idx.dev);
        s.test = subset(all, idx.test);
        s.manifest = split_manifest(idx);
        s.manifest["source"] = data.at("path");
        s.manifest["rejected_empty"] = all.rejected_empty;
        return s;
    }
    LabeledDataset train_file = load("train");
    s.test = load("test");
    if (kind == LabelKind::class_id) {
        align_labels(s.test, train_file.label_names, required_path(data, "test"));
    }
    std::vector<std::size_t> all(train_file.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> dev_idx;
    if (data.at("dev").is_null()) {
        auto [kept, held] = split_pool(train_file, all, dev_size.resolve(all.size()), Rng::derive(seed, 2).next_u64(),
                                       stratify);
        train_idx = std::move(kept);
        dev_idx = std::move(held);
        s.dev = subset(train_file, dev_idx);
    } else {
        train_idx = all;
        s.dev = load("dev");
        if (kind == LabelKind::class_id) {
            align_labels(s.dev, train_file.label_names, required_path(data, "dev"));
        }
        dev_idx.resize(s.dev.size());
        std::iota(dev_idx.begin(), dev_idx.end(), std::size_t{0});
    }
    s.train = subset(train_file, train_idx);
    std::vector<std::size_t> test_idx(s.test.size());
    std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});
    s.manifest = split_manifest(SplitIndices{train_idx, dev_idx, test_idx});
    s.manifest["source"] = {{"train", data.at("train")}, {"dev", data.at("dev").is_null() ? data.at("train") : data.at("dev")},
                            {"test", data.at("test")}};
    return s;
}

std::vector<std::string> texts_of(const LabeledDataset& ds) {
    std::vector<std::string> out;
    out.reserve(ds.size());
    for (const auto& r : ds.records) {
        out.push_back(r.text);
    }
    return out;
}

std::string predictions_csv(const LabeledDataset& ds, std::span<const double> predictions, const Model* model) {
    std::string out = "text,label,prediction\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& r = ds.records[i];
        out += csv_escape(r.text);
        out += ',';
        if (ds.kind == LabelKind::class_id) {
            out += csv_escape(ds.label_names.at(static_cast<std::size_t>(r.label)));
            out += ',';
            const auto id = static_cast<std::size_t>(predictions[i]);
            const bool named = model != nullptr && id < model->label_names.size();
            out += csv_escape(named ? model->label_names[id] : std::to_string(id));
        } else {
            // Shortest text that reads back to the same double.
            out += json(r.label).dump() + "," + json(predictions[i]).dump();
        }
        out += '\n';
    }
    return out;
}

// --- commands ------------------------------------------------------------------

json make_data_defaults() {
    return {{"output_dir", nullptr},   {"seed", 7},          {"topics_rows", 1500},  {"anxiety_rows", 2500},
            {"order_train_rows", 500}, {"order_dev_rows", 100}, {"order_test_rows", 200},
            {"order_corpus_sentences", 3000}, {"prose_bytes", 100000}, {"domain_corpus_rows", 2000}};
}

int cmd_make_data(const json& cfg, std::ostream& out) {
    const fs::path dir = output_dir(cfg);
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    auto rows = [&](const char* key) { return cfg.at(key).get<std::size_t>(); };
    write_text_atomic(dir / "topics.csv", synth::to_csv(synth::topics(rows("topics_rows"), seed)));
    write_text_atomic(dir / "anxiety.csv", synth::to_csv(synth::anxiety(rows("anxiety_rows"), seed)));
    write_text_atomic(dir / "order_train.csv", synth::to_csv(synth::order_task(rows("order_train_rows"), seed)));
    write_text_atomic(dir / "order_dev.csv", synth::to_csv(synth::order_task(rows("order_dev_rows"), seed + 1)));
    write_text_atomic(dir / "order_test.csv", synth::to_csv(synth::order_task(rows("order_test_rows"), seed + 2)));
    write_text_atomic(dir / "order_corpus.txt", synth::order_corpus(rows("order_corpus_sentences"), seed));
    write_text_atomic(dir / "prose_corpus.txt", synth::prose_corpus(rows("prose_bytes"), seed));
    // Unlabeled in-domain text for pretraining, drawn apart from the labeled sets.
    std::string domain;
    const auto extra_topics = synth::topics(rows("domain_corpus_rows"), seed + 10);
    const auto extra_anxiety = synth::anxiety(rows("domain_corpus_rows"), seed + 11);
    for (std::size_t i = 0; i < rows("domain_corpus_rows"); ++i) {
        domain += extra_topics.records[i].text + "\n" + extra_anxiety.records[i].text + "\n";
    }
    write_text_atomic(dir / "domain_corpus.txt", domain);
    write_json(dir / "resolved_config.json", cfg);
    out << "wrote bundled datasets to " << dir.string() << "\n";
    return 0;
}

json tokenizer_defaults() {
    return {{"output_dir", nullptr}, {"name", "tokenizer"}, {"corpus", nullptr}, {"text_column", nullptr},
            {"vocab_size", 1000},    {"lowercase", true}};
}

int cmd_train_tokenizer(const json& cfg, std::ostream& out) {
    const fs::path corpus = required_path(cfg, "corpus");
    const fs::path dir = output_dir(cfg);
    const std::vector<std::string> lines = corpus_documents(corpus, cfg.at("text_column"));
    const Tokenizer tok =
        Tokenizer::train(lines, cfg.at("vocab_size").get<std::size_t>(), cfg.at("lowercase").get<bool>());
    tok.save(dir / "tokenizer.json");
    write_json(dir / "resolved_config.json", cfg);
    write_json(dir / "run.json", run_record("train-tokenizer", cfg,
                                            {{"vocab_size", tok.vocab_size()}, {"merges", tok.merges().size()},
                                             {"documents", lines.size()}}));
    out << "tokenizer: " << tok.vocab_size() << " tokens, " << tok.merges().size() << " merges\n";
    return 0;
}

json pretrain_defaults() {
    json d = PretrainConfig{}.to_json();
    d["output_dir"] = nullptr;
    d["name"] = "pretrain";
    d["corpus"] = nullptr;
    d["text_column"] = nullptr;
    d["tokenizer"] = nullptr;
    d["model"] = ModelConfig{}.to_json();
    return d;
}

int cmd_pretrain(json cfg, std::ostream& out) {
    const PretrainConfig pc = PretrainConfig::from_json(pick(cfg, PretrainConfig{}.to_json()));
    pc.validate();
    const Tokenizer tok = Tokenizer::load(required_path(cfg, "tokenizer"));
    std::string corpus;
    for (const auto& doc : corpus_documents(required_path(cfg, "corpus"), cfg.at("text_column"))) {
        corpus += doc + "\n";
    }
    ModelConfig mc = ModelConfig::from_json(cfg.at("model"));
    if (mc.vocab_size == 0) {
        mc.vocab_size = tok.vocab_size();
    }
    cfg["model"] = mc.to_json();
    const fs::path dir = output_dir(cfg);
    write_json(dir / "resolved_config.json", cfg);

    PretrainResult res = run_pretraining(pc, corpus, tok, mc);
    json epochs = json::array();
    std::string jsonl;
    for (const auto& e : res.epochs) {
        json rec{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}};
        jsonl += rec.dump() + "\n";
        epochs.push_back(rec);
        out << "epoch " << e.epoch << ": train mlm loss " << e.train_loss << ", dev mlm loss " << e.dev_loss << "\n";
    }
    res.checkpoint.metadata["tokenizer"] = "tokenizer.json";
    save_checkpoint(dir / "pretrained.ckpt", res.checkpoint);
    tok.save(dir / "tokenizer.json");
    write_text_atomic(dir / "metrics.jsonl", jsonl);
    write_text_atomic(dir / "loss_log.tsv", loss_log_tsv(res.steps));
    json metrics{{"initial_dev_loss", res.initial_dev_loss},
                 {"best_epoch", res.best_epoch},
                 {"stopped_early", res.stopped_early},
                 {"train_chunks", res.train_chunks},
                 {"dev_chunks", res.dev_chunks},
                 {"epochs", epochs}};
    if (!res.epochs.empty()) {
        metrics["best_dev_loss"] = res.epochs.at(res.best_epoch - 1).dev_loss;
        metrics["final_to_first_epoch_ratio"] = res.epochs.back().dev_loss / res.epochs.front().train_loss;
    }
    write_json(dir / "metrics.json", metrics);
    write_json(dir / "run.json", run_record("pretrain", cfg,
                                            {{"model", "transformer-mlm"}, {"checkpoint", "pretrained.ckpt"},
                                             {"best_epoch", res.best_epoch}}));
    out << "best epoch " << res.best_epoch << (res.stopped_early ? " (stopped early)" : "") << "\n";
    return 0;
}

json finetune_defaults() {
    json d = TrainingConfig{}.to_json();
    d["greater_is_better"] = nullptr;
    d["output_dir"] = nullptr;
    d["name"] = "finetune";
    d["tokenizer"] = nullptr;
    d["checkpoint"] = nullptr;
    d["data"] = data_defaults();
    d["grid"] = nullptr;
    return d;
}

void check_max_length(std::size_t max_length, const ModelConfig& mc) {
    if (max_length > mc.max_positions) {
        throw InvariantError("max_length " + std::to_string(max_length) + " exceeds the checkpoint's " +
                             "max_position_embeddings " + std::to_string(mc.max_positions));
    }
}

int cmd_finetune(json cfg, std::ostream& out, std::ostream& err) {
    TrainingConfig tc = TrainingConfig::from_json(pick(cfg, TrainingConfig{}.to_json()));
    tc.validate();
    if (tc.fp16) {
        err << "warning: fp16 has no effect; training runs in 64-bit floating point\n";
    }
    const Tokenizer tok = Tokenizer::load(required_path(cfg, "tokenizer"));
    const Checkpoint pretrained = load_checkpoint(required_path(cfg, "checkpoint"));
    check_max_length(tc.max_length, pretrained.config);
    if (pretrained.config.vocab_size != tok.vocab_size()) {
        throw InvariantError("tokenizer vocab_size " + std::to_string(tok.vocab_size()) +
                             " differs from the checkpoint's " + std::to_string(pretrained.config.vocab_size));
    }
    const Splits splits = load_splits(cfg.at("data"), tc.seed);
    const bool regression = splits.train.kind == LabelKind::real;
    const std::size_t k = regression ? 1 : splits.train.num_classes();
    const EncodedDataset train_set = encode_dataset(tok, splits.train, tc.max_length);
    const EncodedDataset dev_set = encode_dataset(tok, splits.dev, tc.max_length);
    const EncodedDataset test_set = encode_dataset(tok, splits.test, tc.max_length);

    json resolved = cfg;
    const json typed = tc.to_json();
    for (const auto& [key, value] : typed.items()) {
        resolved[key] = value;
    }
    const fs::path dir = output_dir(cfg);
    write_json(dir / "resolved_config.json", resolved);
    write_json(dir / "split.json", splits.manifest);
    tok.save(dir / "tokenizer.json");

    auto factory = [&](const TrainingConfig& c) {
        Rng head_rng = Rng::derive(c.seed, 0x68656164ULL);
        return attach_head(pretrained, HeadConfig{k}, head_rng, splits.train.label_names);
    };
    const bool grid = !cfg.at("grid").is_null();
    std::size_t point = 0;
    std::string jsonl;
    auto on_epoch = [&](const EpochRecord& rec, const Model& model) {
        if (grid && rec.epoch == 1) {
            ++point;
        }
        json line = rec.to_json();
        fs::path ckpt_dir = dir / "checkpoints";
        if (grid) {
            line["grid_point"] = point - 1;
            ckpt_dir /= "point-" + std::to_string(point - 1);
        }
        jsonl += line.dump() + "\n";
        write_text_atomic(dir / "metrics.jsonl", jsonl);
        save_checkpoint(ckpt_dir / ("epoch-" + std::to_string(rec.epoch) + ".ckpt"),
                        model.to_checkpoint({{"epoch", rec.epoch}, {"max_length", tc.max_length}}));
        out << (grid ? "point " + std::to_string(point - 1) + " " : std::string{}) << "epoch " << rec.epoch
            << ": train loss " << rec.train_loss;
        for (const auto& [name, value] : rec.dev_metrics) {
            out << ", dev " << name << " " << value;
        }
        out << "\n";
    };

    TrainResult result;
    json selection;
    if (grid) {
        const json& overrides = cfg.at("grid");
        if (!overrides.is_array() || overrides.empty()) {
            throw Error("config: 'grid' must be a non-empty array of override objects");
        }
        std::vector<json> points(overrides.begin(), overrides.end());
        GridResult g = grid_search(tc, points, factory, train_set, dev_set, on_epoch);
        json table = json::array();
        for (const auto& p : g.table) {
            table.push_back({{"overrides", p.overrides}, {"best_epoch", p.best_epoch}, {"dev_metric", p.dev_metric}});
        }
        selection = {{"metric", tc.metric_for_best_model}, {"greater_is_better", tc.greater()},
                     {"grid", table}, {"best_point", g.best_index}};
        tc = g.table.at(g.best_index).config;
        result = std::move(g.best);
    } else {
        result = train(tc, factory(tc), train_set, dev_set, on_epoch);
        selection = {{"metric", tc.metric_for_best_model}, {"greater_is_better", tc.greater()}};
    }
    if (result.best_epoch == 0) {
        throw Error("no training epoch ran (num_train_epochs is 0); nothing to select");
    }
    json values = json::array();
    for (const auto& e : result.epochs) {
        values.push_back(e.dev_metrics.at(tc.metric_for_best_model));
    }
    selection["best_epoch"] = result.best_epoch;
    selection["dev_values"] = values;
    write_json(dir / "selection.json", selection);
    write_text_atomic(dir / "loss_log.tsv", loss_log_tsv(result.steps));
    save_checkpoint(dir / "best.ckpt", result.best.to_checkpoint({{"epoch", result.best_epoch},
                                                                    {"max_length", tc.max_length},
                                                                    {"tokenizer", "tokenizer.json"}}));

    const Evaluation ev = evaluate(result.best, test_set, tc.per_device_eval_batch_size);
    write_json(dir / "metrics.json", ev.report);
    write_text_atomic(dir / "test_predictions.csv", predictions_csv(splits.test, ev.predictions, &result.best));
    write_json(dir / "run.json", run_record("finetune", resolved,
                                            {{"model", "transformer"},
                                             {"task", task_kind_name(result.best.task())},
                                             {"num_labels", k},
                                             {"label_names", splits.train.label_names},
                                             {"best_epoch", result.best_epoch},
                                             {"checkpoint", "best.ckpt"},
                                             {"sizes", {{"train", splits.train.size()},
                                                        {"dev", splits.dev.size()},
                                                        {"test", splits.test.size()}}}}));
    out << "best epoch " << result.best_epoch << "; test";
    for (const auto& [name, value] : ev.metrics) {
        out << " " << name << " " << value;
    }
    out << "\n";
    return 0;
}

json evaluate_defaults() {
    return {{"output_dir", nullptr}, {"name", "evaluate"}, {"checkpoint", nullptr}, {"tokenizer", nullptr},
            {"data", {{"path", nullptr}, {"text_column", "text"}, {"label_column", "label"}}},
            {"max_length", nullptr}, {"batch_size", 64}};
}

std::size_t resolve_max_length(const json& cfg, const Checkpoint& ck) {
    std::size_t max_length = cfg.at("max_length").is_null()
                                 ? ck.metadata.value("max_length", ck.config.max_positions)
                                 : cfg.at("max_length").get<std::size_t>();
    check_max_length(max_length, ck.config);
    return max_length;
}

int cmd_evaluate(json cfg, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(required_path(cfg, "checkpoint"));
    const Model model = Model::from_checkpoint(ck);
    const Tokenizer tok = Tokenizer::load(required_path(cfg, "tokenizer"));
    const json& data = cfg.at("data");
    const fs::path path = required_path(data, "path");
    const LabelKind kind = model.task() == TaskKind::regression ? LabelKind::real : LabelKind::class_id;
    LabeledDataset ds = load_csv(path, data.at("text_column").get<std::string>(),
                                 data.at("label_column").get<std::string>(), kind);
    if (kind == LabelKind::class_id) {
        if (ds.num_classes() != model.num_labels) {
            throw InvariantError("label count mismatch: checkpoint head has K=" + std::to_string(model.num_labels) +
                                 " but " + path.string() + " has " + std::to_string(ds.num_classes()) + " classes");
        }
        if (!model.label_names.empty()) {
            align_labels(ds, model.label_names, path);
        }
    }
    const std::size_t max_length = resolve_max_length(cfg, ck);
    cfg["max_length"] = max_length;
    const fs::path dir = output_dir(cfg);
    write_json(dir / "resolved_config.json", cfg);
    const Evaluation ev = evaluate(model, encode_dataset(tok, ds, max_length), cfg.at("batch_size").get<std::size_t>());
    write_json(dir / "metrics.json", ev.report);
    write_text_atomic(dir / "predictions.csv", predictions_csv(ds, ev.predictions, &model));
    write_json(dir / "run.json", run_record("evaluate", cfg,
                                            {{"model", "transformer"},
                                             {"task", task_kind_name(model.task())},
                                             {"num_labels", model.num_labels},
                                             {"examples", ds.size()}}));
    for (const auto& [name, value] : ev.metrics) {
        out << name << " " << value << "\n";
    }
    return 0;
}

json predict_defaults() {
    return {{"output_dir", nullptr}, {"name", "predict"},     {"checkpoint", nullptr}, {"tokenizer", nullptr},
            {"input", nullptr},      {"text_column", "text"}, {"max_length", nullptr}, {"batch_size", 64}};
}

int cmd_predict(json cfg, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(required_path(cfg, "checkpoint"));
    const Model model = Model::from_checkpoint(ck);
    const Tokenizer tok = Tokenizer::load(required_path(cfg, "tokenizer"));
    const fs::path input = required_path(cfg, "input");
    const std::vector<std::string> texts = csv_column(input, cfg.at("text_column").get<std::string>());
    const std::size_t max_length = resolve_max_length(cfg, ck);
    cfg["max_length"] = max_length;
    std::vector<Encoding> inputs;
    for (const auto& t : texts) {
        inputs.push_back(tok.encode(t, max_length));
    }
    const fs::path dir = output_dir(cfg);
    write_json(dir / "resolved_config.json", cfg);
    const std::vector<double> preds = predict(model, inputs, cfg.at("batch_size").get<std::size_t>());
    std::string csv = "text,prediction\n";
    for (std::size_t i = 0; i < texts.size(); ++i) {
        csv += csv_escape(texts[i]) + ",";
        if (model.task() == TaskKind::classification) {
            const auto id = static_cast<std::size_t>(preds[i]);
            csv += csv_escape(id < model.label_names.size() ? model.label_names[id] : std::to_string(id));
        } else {
            csv += json(preds[i]).dump();
        }
        csv += "\n";
    }
    write_text_atomic(dir / "predictions.csv", csv);
    write_json(dir / "run.json", run_record("predict", cfg, {{"model", "transformer"}, {"examples", texts.size()}}));
    out << "wrote " << texts.size() << " predictions to " << (dir / "predictions.csv").string() << "\n";
    return 0;
}

json baseline_defaults() {
    return {{"output_dir", nullptr},
            {"name", nullptr},
            {"method", nullptr},
            {"seed", 42},
            {"data", data_defaults()},
            {"min_df", 2},
            {"naive_bayes", {{"alpha", 1.0}}},
            {"maxent", {{"l2", 0.0}, {"epochs", 500}, {"learning_rate", 0.5}}},
            {"ridge", {{"lambda", 1.0}, {"fit_intercept", true}, {"checkpoint", nullptr}, {"tokenizer", nullptr},
                       {"max_length", nullptr}}}};
}

int cmd_baseline(json cfg, std::ostream& out) {
    if (cfg.at("method").is_null()) {
        throw Error("config: 'method' is required (naive_bayes, maxent or ridge)");
    }
    const std::string method = cfg.at("method").get<std::string>();
    if (method != "naive_bayes" && method != "maxent" && method != "ridge") {
        throw Error("config: unknown baseline method '" + method + "' (naive_bayes, maxent or ridge)");
    }
    if (cfg.at("name").is_null()) {
        cfg["name"] = method;
    }
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    const Splits splits = load_splits(cfg.at("data"), seed);
    const bool regression = splits.train.kind == LabelKind::real;
    if (regression != (method == "ridge")) {
        throw Error("baseline '" + method + "' needs " + (method == "ridge" ? "real" : "class") +
                    " labels, data.label_kind is '" + std::string{label_kind_name(splits.train.kind)} + "'");
    }
    const fs::path dir = output_dir(cfg);
    json model_doc;
    json metrics;
    std::vector<double> predictions;
    if (!regression) {
        const BowVocabulary vocab = BowVocabulary::build(texts_of(splits.train), cfg.at("min_df").get<std::size_t>());
        std::vector<SparseVector> x;
        for (const auto& r : splits.train.records) {
            x.push_back(vocab.featurize(r.text));
        }
        const std::vector<int> y = splits.train.class_ids();
        const std::size_t k = splits.train.num_classes();
        std::vector<int> y_pred;
        if (method == "naive_bayes") {
            const NaiveBayes nb =
                train_naive_bayes(x, y, k, vocab.size(), cfg.at("naive_bayes").at("alpha").get<double>());
            for (const auto& r : splits.test.records) {
                y_pred.push_back(nb.predict(vocab.featurize(r.text)));
            }
            model_doc = nb.to_json();
        } else {
            const json& m = cfg.at("maxent");
            const MaxEntConfig mc{.l2 = m.at("l2").get<double>(),
                                  .epochs = m.at("epochs").get<std::size_t>(),
                                  .learning_rate = m.at("learning_rate").get<double>(),
                                  .seed = seed};
            const MaxEnt me = train_maxent(x, y, k, vocab.size(), mc);
            for (const auto& r : splits.test.records) {
                y_pred.push_back(me.predict(vocab.featurize(r.text)));
            }
            model_doc = me.to_json();
        }
        metrics = report_to_json(classification_report(splits.test.class_ids(), y_pred), splits.train.label_names);
        predictions.assign(y_pred.begin(), y_pred.end());
        write_json(dir / "model.json", {{"vocabulary", vocab.to_json()}, {"model", model_doc}});
    } else {
        const json& r = cfg.at("ridge");
        const Checkpoint ck = load_checkpoint(required_path(r, "checkpoint"));
        const Tokenizer tok = Tokenizer::load(required_path(r, "tokenizer"));
        const std::size_t max_length =
            r.at("max_length").is_null() ? ck.config.max_positions : r.at("max_length").get<std::size_t>();
        check_max_length(max_length, ck.config);
        auto features = [&](const LabeledDataset& ds) {
            return pooled_features(ck.config, ck.params, encode_dataset(tok, ds, max_length).inputs);
        };
        const RidgeModel ridge = fit_ridge(features(splits.train), splits.train.targets(), r.at("lambda").get<double>(),
                                           r.at("fit_intercept").get<bool>());
        for (const auto& row : features(splits.test)) {
            predictions.push_back(ridge.predict(row));
        }
        metrics = report_to_json(regression_report(predictions, splits.test.targets()));
        write_json(dir / "model.json", {{"model", ridge.to_json()}});
    }
    write_json(dir / "resolved_config.json", cfg);
    write_json(dir / "split.json", splits.manifest);
    write_json(dir / "metrics.json", metrics);
    write_text_atomic(dir / "test_predictions.csv", predictions_csv(splits.test, predictions, nullptr));
    write_json(dir / "run.json", run_record("baseline", cfg,
                                            {{"model", method},
                                             {"task", regression ? "regression" : "classification"},
                                             {"sizes", {{"train", splits.train.size()},
                                                        {"dev", splits.dev.size()},
                                                        {"test", splits.test.size()}}}}));
    out << method << ": test";
    if (regression) {
        out << " rmse " << metrics.at("rmse").get<double>() << " pearson_r " << metrics.at("pearson_r").get<double>();
    } else {
        out << " weighted f1 " << metrics.at("weighted avg").at("f1-score").get<double>() << " accuracy "
            << metrics.at("accuracy").get<double>();
    }
    out << "\n";
    return 0;
}

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

// --- config plumbing -----------------------------------------------------------

json default_config(std::string_view command) {
    if (command == "make-data") return make_data_defaults();
    if (command == "train-tokenizer") return tokenizer_defaults();
    if (command == "pretrain") return pretrain_defaults();
    if (command == "finetune") return finetune_defaults();
    if (command == "evaluate") return evaluate_defaults();
    if (command == "predict") return predict_defaults();
    if (command == "baseline") return baseline_defaults();
    throw Error("unknown command '" + std::string{command} + "'");
}

namespace {

void merge_into(json& base, const json& user, const std::string& prefix) {
    if (!user.is_object()) {
        throw Error("config: '" + (prefix.empty() ? std::string{"<root>"} : prefix) + "' must be a JSON object");
    }
    for (const auto& [key, value] : user.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) {
            throw Error("config: unknown key '" + path + "'");
        }
        json& slot = base[key];
        if (slot.is_object()) {
            merge_into(slot, value, path);
        } else {
            slot = value;
        }
    }
}

}  // namespace

json merge_config(const json& defaults, const json& user) {
    json out = defaults;
    merge_into(out, user, "");
    return out;
}

void apply_override(json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw Error("--set expects key=value, got '" + std::string{assignment} + "'");
    }
    const std::string key{assignment.substr(0, eq)};
    const std::string raw{assignment.substr(eq + 1)};
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            throw Error("--set: empty path component in '" + key + "'");
        }
        if (!node->is_object()) {
            throw Error("--set: '" + key.substr(0, start == 0 ? 0 : start - 1) + "' is not an object");
        }
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        json& child = (*node)[part];
        if (child.is_null()) {
            child = json::object();
        }
        node = &child;
        start = dot + 1;
    }
}

// --- report -----------------------------------------------------------------------

ReportTable build_report(std::span<const fs::path> runs) {
    if (runs.empty()) {
        throw Error("report: at least one run directory is required");
    }
    struct Row {
        std::string name;
        std::string run;
        std::map<std::string, double> values;
    };
    std::vector<Row> rows;
    std::vector<std::string> metrics;
    bool regression = false;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const json m = read_json_file(runs[i] / "metrics.json");
        Row row;
        row.run = runs[i].string();
        std::vector<std::string> names;
        if (m.contains("weighted avg")) {
            for (const char* key : {"precision", "recall", "f1-score"}) {
                row.values[key] = m.at("weighted avg").at(key).get<double>();
                names.emplace_back(key);
            }
            row.values["accuracy"] = m.at("accuracy").get<double>();
            names.emplace_back("accuracy");
        } else if (m.contains("rmse") && m.contains("pearson_r")) {
            row.values["rmse"] = m.at("rmse").get<double>();
            row.values["pearson_r"] = m.at("pearson_r").get<double>();
            names = {"rmse", "pearson_r"};
        } else {
            throw Error("report: " + row.run + "/metrics.json holds neither classification nor regression metrics");
        }
        if (i == 0) {
            metrics = names;
            regression = m.contains("rmse");
        } else if (names != metrics) {
            auto join = [](const std::vector<std::string>& v) {
                std::string s;
                for (const auto& x : v) {
                    s += (s.empty() ? "" : ", ") + x;
                }
                return "[" + s + "]";
            };
            throw Error("report: inconsistent metric sets: " + rows.front().run + " has " + join(metrics) + ", " +
                        row.run + " has " + join(names));
        }
        const fs::path run_json = runs[i] / "run.json";
        json info = fs::exists(run_json) ? read_json_file(run_json) : json::object();
        const json name = info.value("name", json{});
        row.name = name.is_string() ? name.get<std::string>() : runs[i].filename().string();
        rows.push_back(std::move(row));
    }

    ReportTable table;
    table.metrics = metrics;
    if (regression) {
        table.lower_is_better = {"rmse"};
    }
    std::vector<std::vector<std::string>> best_of(rows.size());
    json best = json::object();
    for (const auto& metric : metrics) {
        const bool lower = std::find(table.lower_is_better.begin(), table.lower_is_better.end(), metric) !=
                           table.lower_is_better.end();
        std::vector<double> values;
        for (const auto& r : rows) {
            values.push_back(r.values.at(metric));
        }
        const std::size_t b = select_best_epoch(values, !lower);
        best_of[b].push_back(metric);
        best[metric] = rows[b].name;
    }

    json jrows = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        json jr{{"name", rows[i].name}, {"run", rows[i].run}, {"best", best_of[i]}};
        for (const auto& metric : metrics) {
            jr[metric] = rows[i].values.at(metric);
        }
        jrows.push_back(jr);
    }
    table.json = {{"metrics", metrics}, {"lower_is_better", table.lower_is_better}, {"rows", jrows}, {"best", best}};

    std::vector<std::string> header{"model"};
    header.insert(header.end(), metrics.begin(), metrics.end());
    header.emplace_back("best");
    std::vector<std::vector<std::string>> cells{header};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<std::string> line{rows[i].name};
        for (const auto& metric : metrics) {
            line.push_back(format_metric(rows[i].values.at(metric)));
        }
        std::string marks;
        for (const auto& metric : best_of[i]) {
            marks += (marks.empty() ? "" : ",") + metric;
        }
        line.push_back(marks.empty() ? "-" : marks);
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : cells) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            width[c] = std::max(width[c], line[c].size());
        }
    }
    std::ostringstream text;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            const std::string& cell = cells[r][c];
            const bool numeric = c > 0 && c + 1 < cells[r].size();
            const std::string pad(width[c] - cell.size(), ' ');
            line += (c == 0 ? "" : "  ") + (numeric ? pad + cell : cell + pad);
        }
        while (!line.empty() && line.back() == ' ') {
            line.pop_back();
        }
        text << line << "\n";
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < width.size(); ++c) {
                total += width[c] + (c == 0 ? 0 : 2);
            }
            text << std::string(total, '-') << "\n";
        }
    }
    table.text = text.str();
    return table;
}

// --- entry point ----------------------------------------------------------------

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pretrain, finetune and compare small transformer text models", "ptft"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string{kVersion});

    struct Options {
        std::string config;
        std::vector<std::string> sets;
        std::string output_dir;
        std::uint64_t seed = 0;
        CLI::Option* seed_opt = nullptr;
        std::vector<std::string> runs;
    };
    std::map<std::string, Options> opts;
    std::map<std::string, CLI::App*> subs;
    const std::map<std::string, std::string> help{
        {"make-data", "write the bundled synthetic datasets"},
        {"train-tokenizer", "train a byte-pair-encoding tokenizer"},
        {"pretrain", "masked-language-model pretraining"},
        {"finetune", "finetune a pretrained checkpoint on a labeled CSV"},
        {"evaluate", "score a finetuned checkpoint on a labeled CSV"},
        {"predict", "label unlabeled texts with a finetuned checkpoint"},
        {"baseline", "Naive Bayes, MaxEnt or ridge baseline"},
        {"report", "compare the metrics of several run directories"}};
    for (const auto& name : kCommands) {
        CLI::App* sub = app.add_subcommand(name, help.at(name));
        Options& o = opts[name];
        sub->add_option("--output-dir", o.output_dir, "directory for every artifact of the run");
        if (name == "report") {
            sub->add_option("runs", o.runs, "run directories holding metrics.json")->required();
        } else {
            sub->add_option("--config", o.config, "JSON config file");
            sub->add_option("--set", o.sets, "override, key=value (dotted keys reach nested sections)");
            const json defaults = default_config(name);
            if (defaults.contains("seed")) {
                o.seed_opt = sub->add_option("--seed", o.seed, "random seed");
            }
        }
        subs[name] = sub;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        std::string command;
        for (const auto& [name, sub] : subs) {
            if (sub->parsed()) {
                command = name;
            }
        }
        const Options& o = opts.at(command);
        if (command == "report") {
            std::vector<fs::path> runs(o.runs.begin(), o.runs.end());
            const ReportTable table = build_report(runs);
            out << table.text;
            if (!o.output_dir.empty()) {
                fs::create_directories(o.output_dir);
                write_text_atomic(fs::path{o.output_dir} / "report.txt", table.text);
                write_json(fs::path{o.output_dir} / "report.json", table.json);
            }
            return 0;
        }
        json user = o.config.empty() ? json::object() : read_json_file(o.config);
        for (const auto& s : o.sets) {
            apply_override(user, s);
        }
        if (!o.output_dir.empty()) {
            user["output_dir"] = o.output_dir;
        }
        if (o.seed_opt != nullptr && o.seed_opt->count() > 0) {
            user["seed"] = o.seed;
        }
        json cfg = merge_config(default_config(command), user);
        if (command == "make-data") return cmd_make_data(cfg, out);
        if (command == "train-tokenizer") return cmd_train_tokenizer(cfg, out);
        if (command == "pretrain") return cmd_pretrain(std::move(cfg), out);
        if (command == "finetune") return cmd_finetune(std::move(cfg), out, err);
        if (command == "evaluate") return cmd_evaluate(std::move(cfg), out);
        if (command == "predict") return cmd_predict(std::move(cfg), out);
        return cmd_baseline(std::move(cfg), out);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "error: " << msg << "\n";
        return 1;
    }
}

}  // namespace ptft::cli
