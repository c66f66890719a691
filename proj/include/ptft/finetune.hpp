#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptft/checkpoint.hpp"
#include "ptft/data.hpp"
#include "ptft/metrics.hpp"
#include "ptft/model.hpp"

namespace ptft {

enum class TaskKind { classification, regression };

std::string_view task_kind_name(TaskKind kind) noexcept;

struct HeadConfig {
    std::size_t num_labels = 2;  // K; 1 means regression
    TaskKind kind() const noexcept { return num_labels == 1 ? TaskKind::regression : TaskKind::classification; }
};

/// Encoder plus an N x K head. Parameters hold both; head.weight and
/// head.bias come last.
struct Model {
    ModelConfig config;
    Parameters params;
    std::size_t num_labels = 0;
    std::vector<std::string> label_names;

    TaskKind task() const noexcept { return HeadConfig{num_labels}.kind(); }

    /// Metadata records num_labels, task and label_names; `extra` keys are merged in.
    Checkpoint to_checkpoint(const nlohmann::json& extra = nlohmann::json::object()) const;
    /// Requires a checkpoint written by to_checkpoint (head present, shapes consistent).
    static Model from_checkpoint(const Checkpoint& checkpoint);
};

/// Copies every encoder parameter and appends a fresh head:
/// weight ~ normal(0, init_std), bias 0. Throws if K < 1.
Model attach_head(const Checkpoint& pretrained, HeadConfig head, Rng& rng,
                  std::vector<std::string> label_names = {});

/// Head output for one encoded text: K logits, or one value for regression.
std::vector<double> head_output(const Model& model, const Encoding& input);

/// Mean loss over the selected samples: cross-entropy for classification,
/// squared error for regression. When grads is non-null, d(loss)/d(params)
/// is accumulated into it. dropout_rng null disables dropout.
double batch_loss(const Model& model, const EncodedDataset& data, std::span<const std::size_t> indices,
                  Rng* dropout_rng = nullptr, Parameters* grads = nullptr);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Class id (as a real) or regression value per input.
std::vector<double> predict(const Model& model, std::span<const Encoding> inputs, std::size_t batch_size = 64);

struct Evaluation {
    std::vector<double> predictions;
    MetricSet metrics;
    nlohmann::json report;  // metrics.json payload
};

Evaluation evaluate(const Model& model, const EncodedDataset& data, std::size_t batch_size = 64);

struct TrainingConfig {
    std::size_t num_train_epochs = 5;
    std::size_t per_device_train_batch_size = 16;
    std::size_t per_device_eval_batch_size = 64;
    double learning_rate = 5e-5;
    std::size_t warmup_steps = 0;
    double weight_decay = 0.01;
    std::size_t logging_steps = 10;
    std::uint64_t seed = 42;
    std::string metric_for_best_model = "precision";
    std::optional<bool> greater_is_better;  // unset: false for mse/rmse, true otherwise
    std::size_t max_length = 64;
    double max_grad_norm = 1.0;
    bool fp16 = false;  // accepted, has no effect

    bool greater() const;
    /// Throws Error on any invalid field, including unsupported metric names.
    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep defaults; unknown keys are rejected.
    static TrainingConfig from_json(const nlohmann::json& doc);
};

struct StepLog {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss = 0.0;  // mean batch loss since the previous log line
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    MetricSet dev_metrics;
    nlohmann::json to_json() const;
};

struct TrainResult {
    Model best;
    std::size_t best_epoch = 0;  // 0 when no epoch ran
    std::vector<EpochRecord> epochs;
    std::vector<StepLog> steps;
};

/// Called after each epoch's evaluation with the model as of that epoch.
using EpochCallback = std::function<void(const EpochRecord&, const Model&)>;

/// Supervised training with AdamW, linear warmup then constant rate,
/// gradient clipping, and per-epoch dev evaluation. Returns the model of the
/// best dev epoch (earliest on ties).
TrainResult train(const TrainingConfig& config, Model model, const EncodedDataset& train_set,
                  const EncodedDataset& dev_set, const EpochCallback& on_epoch = {});

/// 0-based index of the best value; earliest wins ties. Throws on empty input.
std::size_t select_best_epoch(std::span<const double> values, bool greater_is_better);

/// Tab-separated "step\tepoch\tloss" lines with a header.
std::string loss_log_tsv(std::span<const StepLog> steps);

struct GridPoint {
    nlohmann::json overrides;
    TrainingConfig config;
    std::size_t best_epoch = 0;
    double dev_metric = 0.0;
};

struct GridResult {
    std::size_t best_index = 0;
    std::vector<GridPoint> table;
    TrainResult best;
};

/// `overrides` are TrainingConfig key deltas applied to base. Each point
/// trains a fresh model from `factory`. Earliest point wins ties.
GridResult grid_search(const TrainingConfig& base, std::span<const nlohmann::json> overrides,
                       const std::function<Model(const TrainingConfig&)>& factory, const EncodedDataset& train_set,
                       const EncodedDataset& dev_set, const EpochCallback& on_epoch = {});

}  // namespace ptft
