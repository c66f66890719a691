// Acceptance suite: one PASS/FAIL line per criterion, thresholds fixed below.
// Exit status is nonzero when any criterion fails.
//
//   acceptance            run all ten
//   acceptance 4 7        run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptft/checkpoint.hpp"
#include "ptft/cli.hpp"
#include "ptft/data.hpp"
#include "ptft/error.hpp"
#include "ptft/finetune.hpp"
#include "ptft/io.hpp"
#include "ptft/metrics.hpp"
#include "ptft/model.hpp"
#include "ptft/ops.hpp"
#include "ptft/rng.hpp"
#include "ptft/synth.hpp"
#include "ptft/tokenizer.hpp"
#include "support/grad_suite.hpp"

using namespace ptft;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

namespace limits {
// 1
constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kPrimitiveInstances = 100;
constexpr std::size_t kModelConfigs = 10;
constexpr std::uint64_t kModelSeed = 1;
constexpr double kGradSeconds = 120.0;
// 2
constexpr double kAnchorTolerance = 1e-4;
// 3
constexpr double kRowSumTolerance = 1e-12;
constexpr std::size_t kSoftmaxRows = 10000;
constexpr std::size_t kAttentionRows = 10000;
// 4
constexpr double kStrataSlack = 1.0;
// 5
constexpr std::size_t kOverfitEpochs = 200;
constexpr double kOverfitSeconds = 60.0;
// 6
constexpr double kPretrainRatio = 0.7;
constexpr double kInitialLossSlack = 0.10;
// 7
constexpr double kBowCeiling = 0.60;
constexpr double kTransformerFloor = 0.90;
constexpr std::size_t kSeedsRequired = 4;
constexpr std::uint64_t kOrderSeeds[] = {1, 2, 3, 4, 5};
constexpr double kOrderSeconds = 600.0;
// 8
constexpr std::size_t kOracleInstances = 1000;
constexpr double kOracleTolerance = 1e-12;
// 10
constexpr std::size_t kSelectionSequences = 10000;
}  // namespace limits

const fs::path kSource{PTFT_SOURCE_DIR};
const fs::path kData = kSource / "data";
const fs::path kConfigs = kSource / "configs";

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, value);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "ptft_acceptance" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Runs a CLI command; throws with its diagnostic on failure.
void ptft_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    if (cli::run(args, out, err) != 0) {
        throw Error("command '" + args.front() + "' failed: " + err.str());
    }
}

// --- 1 ----------------------------------------------------------------------------

Verdict gradient_correctness() {
    const auto start = std::chrono::steady_clock::now();
    auto results = testing::run_primitive_grad_checks(limits::kPrimitiveInstances, 2024);
    std::size_t min_instances = SIZE_MAX;
    for (const auto& r : results) {
        min_instances = std::min(min_instances, r.instances);
    }
    for (auto& r : testing::run_model_grad_checks(limits::kModelConfigs, limits::kModelSeed)) {
        results.push_back(r);
    }
    double worst = 0.0;
    std::size_t failures = 0;
    std::string worst_name;
    for (const auto& r : results) {
        failures += r.failures;
        if (r.worst_error >= worst) {
            worst = r.worst_error;
            worst_name = r.primitive;
        }
    }
    const double elapsed = seconds_since(start);
    const bool pass = failures == 0 && worst < limits::kGradTolerance && min_instances >= limits::kPrimitiveInstances &&
                      elapsed < limits::kGradSeconds;
    return {pass, std::to_string(results.size()) + " suites, >= " + std::to_string(min_instances) +
                      " instances per primitive, " + std::to_string(failures) + " failures, max rel err " +
                      fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.1f", elapsed) + " s"};
}

// --- 2 ----------------------------------------------------------------------------

Verdict loss_anchor() {
    const std::vector<double> logits{std::log(0.2), std::log(0.8)};
    const double anchor = ops::cross_entropy(logits, 0);
    bool pass = std::abs(anchor - 1.6094) <= limits::kAnchorTolerance;
    std::string detail = "-log(0.2) -> " + fmt("%.6f", anchor);
    for (std::size_t k : {2, 15}) {
        const std::vector<double> uniform(k, 0.25);
        bool exact = true;
        for (std::size_t t = 0; t < k; ++t) {
            exact = exact && ops::cross_entropy(uniform, t) == std::log(static_cast<double>(k));
        }
        pass = pass && exact;
        detail += ", uniform K=" + std::to_string(k) + (exact ? " == ln K" : " != ln K");
    }
    return {pass, detail};
}

// --- 3 ----------------------------------------------------------------------------

Verdict normalization() {
    Rng rng(33);
    double worst = 0.0;
    std::size_t rows = 0;
    for (std::size_t i = 0; i < limits::kSoftmaxRows; ++i) {
        std::vector<double> x(1 + rng.below(64));
        for (auto& v : x) {
            v = rng.bernoulli(0.1) ? (rng.bernoulli(0.5) ? 700.0 : -700.0) : rng.normal(0.0, 30.0);
        }
        const auto y = ops::softmax(x);
        worst = std::max(worst, std::abs(std::accumulate(y.begin(), y.end(), 0.0) - 1.0));
        ++rows;
    }
    std::size_t attention_rows = 0;
    while (attention_rows < limits::kAttentionRows) {
        ModelConfig c;
        c.num_layers = 1;
        c.num_heads = 1 + rng.below(4);
        c.hidden_size = c.num_heads * (1 + rng.below(8));
        c.intermediate_size = 8;
        c.vocab_size = 10;
        c.max_positions = 40;
        c.init_std = 0.5 + 2.0 * rng.uniform();
        const Parameters p = init_encoder_parameters(c, rng);
        const std::size_t t = 1 + rng.below(40);
        Tensor h(Shape{t, c.hidden_size});
        for (auto& v : h.values()) {
            v = rng.normal(0.0, 4.0);
        }
        std::vector<std::uint8_t> mask(t, 1);
        for (std::size_t k = 1; k < t; ++k) {
            mask[k] = rng.bernoulli(0.8) ? 1 : 0;
        }
        AttentionTrace trace;
        self_attention(attention_weights(p, 0), c.num_heads, h, mask, &trace);
        for (const Tensor& probs : trace.probs) {
            for (std::size_t r = 0; r < t; ++r) {
                const auto row = probs.row(r);
                worst = std::max(worst, std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0));
                ++attention_rows;
            }
        }
    }
    return {worst <= limits::kRowSumTolerance, std::to_string(rows) + " softmax + " + std::to_string(attention_rows) +
                                                    " attention rows, max |sum - 1| " + fmt("%.2e", worst)};
}

// --- 4 ----------------------------------------------------------------------------

double strata_deviation(const LabeledDataset& ds, const SplitIndices& s) {
    const auto ids = ds.class_ids();
    std::vector<double> global(ds.num_classes(), 0.0);
    for (int c : ids) {
        global[static_cast<std::size_t>(c)] += 1.0;
    }
    double worst = 0.0;
    for (const auto* part : {&s.train, &s.dev, &s.test}) {
        std::vector<double> count(ds.num_classes(), 0.0);
        for (std::size_t i : *part) {
            count[static_cast<std::size_t>(ids[i])] += 1.0;
        }
        for (std::size_t c = 0; c < count.size(); ++c) {
            const double ideal = global[c] * static_cast<double>(part->size()) / static_cast<double>(ds.size());
            worst = std::max(worst, std::abs(count[c] - ideal));
        }
    }
    return worst;
}

bool is_partition(const SplitIndices& s, std::size_t n) {
    std::vector<std::size_t> all;
    for (const auto* part : {&s.train, &s.dev, &s.test}) {
        all.insert(all.end(), part->begin(), part->end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i] != i) {
            return false;
        }
    }
    return all.size() == n;
}

Verdict split_anchor() {
    const LabeledDataset topics = synth::topics(9795, 7);
    const SplitIndices a = split(topics, {0.25}, {1225}, 42, true);
    const double dev = strata_deviation(topics, a);
    const LabeledDataset anxiety = synth::anxiety(2500, 7);
    const SplitIndices b = split(anxiety, {500}, {0.1}, 42, false);
    const bool pass = a.train.size() == 6121 && a.dev.size() == 1225 && a.test.size() == 2449 &&
                      dev <= limits::kStrataSlack && is_partition(a, topics.size()) && b.train.size() == 1800 &&
                      b.dev.size() == 200 && b.test.size() == 500 && is_partition(b, anxiety.size());
    return {pass, "9795 -> " + std::to_string(a.train.size()) + "/" + std::to_string(a.dev.size()) + "/" +
                      std::to_string(a.test.size()) + " (15 classes, max class deviation " + fmt("%.3f", dev) +
                      "), 2500 -> " + std::to_string(b.train.size()) + "/" + std::to_string(b.dev.size()) + "/" +
                      std::to_string(b.test.size())};
}

// --- 5 ----------------------------------------------------------------------------

Verdict overfit() {
    const auto start = std::chrono::steady_clock::now();
    // Two samples of every topic plus two more: 32 samples over all 15 classes.
    const LabeledDataset pool = synth::topics(3000, 5);
    std::vector<std::size_t> picked;
    std::vector<std::size_t> per_class(15, 0);
    for (std::size_t i = 0; i < pool.size() && picked.size() < 30; ++i) {
        auto& n = per_class[static_cast<std::size_t>(pool.records[i].label)];
        if (n < 2) {
            ++n;
            picked.push_back(i);
        }
    }
    for (std::size_t i = 0; picked.size() < 32; ++i) {
        if (std::find(picked.begin(), picked.end(), i) == picked.end()) {
            picked.push_back(i);
        }
    }
    const LabeledDataset ds = subset(pool, picked);
    std::vector<std::string> texts;
    for (const auto& r : ds.records) {
        texts.push_back(r.text);
    }
    const Tokenizer tok = Tokenizer::train(texts, 300);
    const std::size_t max_length = 24;
    const EncodedDataset data = encode_dataset(tok, ds, max_length);

    ModelConfig c;
    c.num_layers = 2;
    c.hidden_size = 64;
    c.num_heads = 2;
    c.intermediate_size = 256;
    c.vocab_size = tok.vocab_size();
    c.max_positions = max_length;
    Rng init(5);
    const Checkpoint base{c, init_encoder_parameters(c, init), {}};
    Rng head(6);
    const Model model = attach_head(base, {15}, head);

    TrainingConfig t;
    t.num_train_epochs = limits::kOverfitEpochs;
    t.per_device_train_batch_size = 8;
    t.learning_rate = 1e-3;
    t.metric_for_best_model = "accuracy";
    t.max_length = max_length;
    t.seed = 5;
    std::size_t first_perfect = 0;
    double last_accuracy = 0.0;
    // Training and dev are the same 32 samples: dev accuracy is train accuracy.
    train(t, model, data, data, [&](const EpochRecord& e, const Model&) {
        last_accuracy = e.dev_metrics.at("accuracy");
        if (first_perfect == 0 && last_accuracy == 1.0) {
            first_perfect = e.epoch;
        }
    });
    const double elapsed = seconds_since(start);
    const bool pass = first_perfect > 0 && elapsed < limits::kOverfitSeconds;
    return {pass, "32 samples x 15 classes, 100% train accuracy " +
                      (first_perfect > 0 ? "first at epoch " + std::to_string(first_perfect)
                                         : "never reached (last " + fmt("%.3f", last_accuracy) + ")") +
                      " of " + std::to_string(limits::kOverfitEpochs) + ", " + fmt("%.1f", elapsed) + " s"};
}

// --- 6 ----------------------------------------------------------------------------

Verdict pretraining_efficacy() {
    const fs::path dir = scratch("pretrain_prose");
    const std::string corpus = (kData / "prose_corpus.txt").string();
    ptft_cli({"train-tokenizer", "--config", (kConfigs / "tokenizer_prose.json").string(), "--output-dir",
              (dir / "tok").string(), "--set", "corpus=" + corpus});
    ptft_cli({"pretrain", "--config", (kConfigs / "pretrain_prose.json").string(), "--output-dir",
              (dir / "pre").string(), "--set", "corpus=" + corpus, "--set",
              "tokenizer=" + (dir / "tok" / "tokenizer.json").string()});
    const json m = read_json_file(dir / "pre" / "metrics.json");
    const json resolved = read_json_file(dir / "pre" / "resolved_config.json");
    const auto& epochs = m.at("epochs");
    const double v = static_cast<double>(resolved.at("model").at("vocab_size").get<std::size_t>());
    const double initial = m.at("initial_dev_loss").get<double>();
    const double first_train = epochs.front().at("train_loss").get<double>();
    const double final_dev = epochs.back().at("dev_loss").get<double>();
    const double ratio = final_dev / first_train;
    const double init_gap = std::abs(initial - std::log(v)) / std::log(v);
    const bool pass = epochs.size() == 5 && ratio <= limits::kPretrainRatio && init_gap <= limits::kInitialLossSlack;
    return {pass, std::to_string(epochs.size()) + " epochs, dev loss " + fmt("%.3f", final_dev) +
                      " / epoch-1 mean " + fmt("%.3f", first_train) + " = " + fmt("%.3f", ratio) +
                      "; initial " + fmt("%.3f", initial) + " vs ln V " + fmt("%.3f", std::log(v)) + " (" +
                      fmt("%.1f", 100 * init_gap) + "% off)"};
}

// --- 7 ----------------------------------------------------------------------------

double test_accuracy(const fs::path& run) { return read_json_file(run / "metrics.json").at("accuracy").get<double>(); }

Verdict paradigm_demonstration() {
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir = scratch("order");
    const std::string corpus = (kData / "order_corpus.txt").string();
    const std::vector<std::string> data_sets{"--set", "data.train=" + (kData / "order_train.csv").string(),
                                             "--set", "data.dev=" + (kData / "order_dev.csv").string(),
                                             "--set", "data.test=" + (kData / "order_test.csv").string()};
    auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    ptft_cli({"train-tokenizer", "--config", (kConfigs / "tokenizer_order.json").string(), "--output-dir",
              (dir / "tok").string(), "--set", "corpus=" + corpus});
    const std::string tokenizer = (dir / "tok" / "tokenizer.json").string();

    std::size_t train_rows = load_csv(kData / "order_train.csv", "text", "label", LabelKind::class_id).size();
    std::size_t test_rows = load_csv(kData / "order_test.csv", "text", "label", LabelKind::class_id).size();
    std::size_t good_seeds = 0;
    double worst_bow = 0.0;
    std::string per_seed;
    for (std::uint64_t seed : limits::kOrderSeeds) {
        const std::string s = std::to_string(seed);
        const fs::path pre = dir / ("pre_" + s);
        ptft_cli({"pretrain", "--config", (kConfigs / "pretrain_order.json").string(), "--output-dir", pre.string(),
                  "--set", "corpus=" + corpus, "--set", "tokenizer=" + tokenizer, "--seed", s});
        const fs::path ft = dir / ("ft_" + s);
        ptft_cli(with({"finetune", "--config", (kConfigs / "finetune_order.json").string(), "--output-dir",
                       ft.string(), "--set", "tokenizer=" + tokenizer, "--set",
                       "checkpoint=" + (pre / "pretrained.ckpt").string(), "--seed", s},
                      data_sets));
        double bow = 0.0;
        for (const char* method : {"naive_bayes", "maxent"}) {
            const fs::path b = dir / (std::string{method} + "_" + s);
            ptft_cli(with({"baseline", "--config",
                           (kConfigs / ("baseline_order_" + std::string{method} + ".json")).string(), "--output-dir",
                           b.string(), "--seed", s},
                          data_sets));
            bow = std::max(bow, test_accuracy(b));
        }
        const double transformer = test_accuracy(ft);
        worst_bow = std::max(worst_bow, bow);
        good_seeds += transformer >= limits::kTransformerFloor ? 1 : 0;
        per_seed += (per_seed.empty() ? "" : " ") + s + ":" + fmt("%.3f", transformer) + "/" + fmt("%.3f", bow);
    }
    const double elapsed = seconds_since(start);
    const bool pass = train_rows == 500 && test_rows == 200 && worst_bow <= limits::kBowCeiling &&
                      good_seeds >= limits::kSeedsRequired && elapsed < limits::kOrderSeconds;
    return {pass, std::to_string(train_rows) + " train / " + std::to_string(test_rows) +
                      " test; seed:finetuned/best-BoW accuracy " + per_seed + "; " + std::to_string(good_seeds) +
                      "/5 seeds >= 0.90, BoW max " + fmt("%.3f", worst_bow) + "; " + fmt("%.0f", elapsed) + " s"};
}

// --- 8 ----------------------------------------------------------------------------

Verdict metric_oracle() {
    Rng rng(8);
    double worst = 0.0;
    for (std::size_t trial = 0; trial < limits::kOracleInstances; ++trial) {
        const std::size_t classes = 1 + rng.below(20);
        const std::size_t n = 1 + rng.below(500);
        std::vector<int> t(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = static_cast<int>(rng.below(classes));
            p[i] = rng.bernoulli(0.4) ? t[i] : static_cast<int>(rng.below(classes));
        }
        const auto r = classification_report(t, p);
        std::map<std::pair<int, int>, double> cm;
        std::set<int> labels;
        for (std::size_t i = 0; i < n; ++i) {
            cm[{t[i], p[i]}] += 1.0;
            labels.insert(t[i]);
            labels.insert(p[i]);
        }
        if (r.classes.size() != labels.size()) {
            return {false, "label set mismatch at instance " + std::to_string(trial)};
        }
        double wp = 0.0, wr = 0.0, wf = 0.0, correct = 0.0;
        std::size_t k = 0;
        for (int c : labels) {
            double tp = cm[{c, c}], row = 0.0, col = 0.0;
            for (int o : labels) {
                row += cm[{c, o}];
                col += cm[{o, c}];
            }
            const double prec = col > 0 ? tp / col : 0.0;
            const double rec = row > 0 ? tp / row : 0.0;
            const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
            worst = std::max({worst, std::abs(r.classes[k].precision - prec), std::abs(r.classes[k].recall - rec),
                              std::abs(r.classes[k].f1 - f1)});
            wp += prec * row;
            wr += rec * row;
            wf += f1 * row;
            correct += tp;
            ++k;
        }
        const double total = static_cast<double>(n);
        worst = std::max({worst, std::abs(r.weighted_precision - wp / total), std::abs(r.weighted_recall - wr / total),
                          std::abs(r.weighted_f1 - wf / total), std::abs(r.accuracy - correct / total)});
    }
    const std::vector<double> x{1, 2, 3}, y{2, 4, 7}, a{1, 3}, b{2, 2};
    const double r = pearson_r(x, y);
    const double e = rmse(a, b);
    const double single = rmse(std::vector<double>{0.0}, std::vector<double>{3.0});
    const std::vector<int> tt{0, 0, 1, 1}, pp{0, 1, 1, 1};
    const double f1 = classification_report(tt, pp).weighted_f1;
    const bool pass = worst <= limits::kOracleTolerance && std::abs(r - 0.9934) <= 1e-3 && e == 1.0 &&
                      single == 3.0 && std::abs(f1 - 0.7333) <= 1e-4;
    return {pass, std::to_string(limits::kOracleInstances) + " random reports, max deviation " + fmt("%.2e", worst) +
                      "; pearson " + fmt("%.4f", r) + ", rmse " + fmt("%.1f", e) + " and " + fmt("%.1f", single) +
                      ", weighted F1 " + fmt("%.4f", f1)};
}

// --- 9 ----------------------------------------------------------------------------

Verdict determinism() {
    const fs::path dir = scratch("determinism");
    const std::string corpus = (kData / "order_corpus.txt").string();
    ptft_cli({"train-tokenizer", "--config", (kConfigs / "tokenizer_order.json").string(), "--output-dir",
              (dir / "tok").string(), "--set", "corpus=" + corpus});
    const std::string tokenizer = (dir / "tok" / "tokenizer.json").string();
    for (const char* run : {"a", "b"}) {
        const fs::path pre = dir / (std::string{"pre_"} + run);
        ptft_cli({"pretrain", "--config", (kConfigs / "pretrain_order.json").string(), "--output-dir", pre.string(),
                  "--set", "corpus=" + corpus, "--set", "tokenizer=" + tokenizer, "--set", "num_train_epochs=2",
                  "--set", "logging_steps=5"});
        ptft_cli({"finetune", "--config", (kConfigs / "finetune_order.json").string(), "--output-dir",
                  (dir / (std::string{"ft_"} + run)).string(), "--set", "tokenizer=" + tokenizer, "--set",
                  "checkpoint=" + (pre / "pretrained.ckpt").string(), "--set", "num_train_epochs=3", "--set",
                  "logging_steps=5", "--set", "data.train=" + (kData / "order_train.csv").string(), "--set",
                  "data.dev=" + (kData / "order_dev.csv").string(), "--set",
                  "data.test=" + (kData / "order_test.csv").string()});
    }
    std::size_t compared = 0;
    std::vector<std::string> differing;
    for (const char* stage : {"pre", "ft"}) {
        const fs::path a = dir / (std::string{stage} + "_a");
        const fs::path b = dir / (std::string{stage} + "_b");
        for (const auto& entry : fs::recursive_directory_iterator(a)) {
            if (!entry.is_regular_file()) {
                continue;
            }
            const fs::path rel = fs::relative(entry.path(), a);
            const std::string name = rel.string();
            // These two record their own output_dir, which differs by design.
            if (name == "resolved_config.json" || name == "run.json") {
                continue;
            }
            ++compared;
            if (!fs::exists(b / rel) || read_text_file(entry.path()) != read_text_file(b / rel)) {
                differing.push_back(std::string{stage} + "/" + name);
            }
        }
    }
    const bool logs_present = fs::exists(dir / "pre_a" / "loss_log.tsv") && fs::exists(dir / "ft_a" / "loss_log.tsv") &&
                              fs::exists(dir / "ft_a" / "metrics.json") && fs::exists(dir / "ft_a" / "best.ckpt");

    // Save, load and predict through the file format.
    const Checkpoint saved = load_checkpoint(dir / "ft_a" / "best.ckpt");
    const Model model = Model::from_checkpoint(saved);
    const fs::path copy = dir / "roundtrip.ckpt";
    save_checkpoint(copy, model.to_checkpoint(saved.metadata));
    const Model back = Model::from_checkpoint(load_checkpoint(copy));
    const Tokenizer tok = Tokenizer::load(tokenizer);
    const auto test = load_csv(kData / "order_test.csv", "text", "label", LabelKind::class_id);
    const EncodedDataset enc = encode_dataset(tok, test, 16);
    bool bit_exact = read_text_file(copy) == read_text_file(dir / "ft_a" / "best.ckpt");
    for (const auto& e : enc.inputs) {
        bit_exact = bit_exact && head_output(model, e) == head_output(back, e);
    }
    const bool pass = logs_present && differing.empty() && compared > 0 && bit_exact;
    std::string detail = std::to_string(compared) + " artifacts compared across two runs (loss logs, metrics, "
                         "checkpoints), " + std::to_string(differing.size()) + " differ";
    if (!differing.empty()) {
        detail += " [" + differing.front() + (differing.size() > 1 ? ", ..." : "") + "]";
    }
    detail += "; save/load/predict " + std::string{bit_exact ? "bit-exact" : "NOT bit-exact"} + " on " +
              std::to_string(enc.size()) + " inputs";
    return {pass, detail};
}

// --- 10 ---------------------------------------------------------------------------

Verdict best_epoch_selection() {
    Rng rng(10);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < limits::kSelectionSequences; ++i) {
        std::vector<double> v(1 + rng.below(12));
        for (auto& x : v) {
            x = static_cast<double>(rng.below(5)) / 4.0;  // coarse values force ties
        }
        for (bool greater : {true, false}) {
            std::size_t expect = 0;
            for (std::size_t k = 1; k < v.size(); ++k) {
                if (greater ? v[k] > v[expect] : v[k] < v[expect]) {
                    expect = k;
                }
            }
            mismatches += select_best_epoch(v, greater) == expect ? 0 : 1;
        }
    }
    const bool examples = select_best_epoch(std::vector<double>{0.5, 0.7, 0.6}, true) == 1 &&
                          select_best_epoch(std::vector<double>{2.0, 1.5, 1.7}, false) == 1;
    TrainingConfig precision_run;
    precision_run.metric_for_best_model = "precision";
    TrainingConfig mse_run;
    mse_run.metric_for_best_model = "mse";
    mse_run.greater_is_better = false;
    TrainingConfig implied;
    implied.metric_for_best_model = "mse";
    const bool directions = precision_run.greater() && !mse_run.greater() && !implied.greater();

    // A real regression run selects the epoch of minimal dev mse.
    ModelConfig c;
    c.num_layers = 1;
    c.hidden_size = 16;
    c.num_heads = 2;
    c.intermediate_size = 32;
    c.vocab_size = 30;
    c.max_positions = 8;
    Rng init(11);
    const Checkpoint base{c, init_encoder_parameters(c, init), {}};
    Rng head(12);
    const Model model = attach_head(base, {1}, head);
    EncodedDataset train_set, dev_set;
    for (auto* d : {&train_set, &dev_set}) {
        d->kind = LabelKind::real;
        for (int k = 0; k < 24; ++k) {
            const auto a = static_cast<TokenId>(special::kCount + rng.below(25));
            Encoding e;
            e.ids = {special::kCls, a, special::kSep, special::kPad};
            e.attention_mask = {1, 1, 1, 0};
            d->inputs.push_back(e);
            d->labels.push_back(1.0 + 8.0 * static_cast<double>(a - special::kCount) / 24.0);
        }
    }
    TrainingConfig t = mse_run;
    t.num_train_epochs = 8;
    t.per_device_train_batch_size = 4;
    t.learning_rate = 5e-3;
    t.max_length = 4;
    std::vector<Parameters> snapshots;
    const TrainResult r = train(t, model, train_set, dev_set,
                                [&](const EpochRecord&, const Model& m) { snapshots.push_back(m.params); });
    std::vector<double> mse;
    for (const auto& e : r.epochs) {
        mse.push_back(e.dev_metrics.at("mse"));
    }
    const std::size_t argmin = static_cast<std::size_t>(std::min_element(mse.begin(), mse.end()) - mse.begin());
    const bool run_ok = r.best_epoch == argmin + 1 && r.best.params == snapshots[argmin];

    const bool pass = mismatches == 0 && examples && directions && run_ok;
    return {pass, std::to_string(2 * limits::kSelectionSequences) + " tied sequences, " + std::to_string(mismatches) +
                      " mismatches; mse run picked epoch " + std::to_string(r.best_epoch) + " (argmin " +
                      std::to_string(argmin + 1) + ")" + (directions ? "" : "; direction defaults wrong")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"loss anchor", loss_anchor},
        {"softmax/attention normalization", normalization},
        {"split anchor", split_anchor},
        {"overfit smoke test", overfit},
        {"pretraining efficacy", pretraining_efficacy},
        {"paradigm demonstration (order task)", paradigm_demonstration},
        {"metric oracle equivalence", metric_oracle},
        {"determinism", determinism},
        {"best-epoch selection", best_epoch_selection},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(static_cast<std::size_t>(std::stoul(argv[i])));
    }
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.contains(i + 1)) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string{"exception: "} + e.what()};
        }
        failed += v.pass ? 0 : 1;
        std::cout << "criterion " << (i + 1) << " " << (v.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
                  << ": " << v.detail << "  [" << fmt("%.1f", seconds_since(start)) << " s]" << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
