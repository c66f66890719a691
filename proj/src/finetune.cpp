#include "ptft/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ptft/error.hpp"
#include "ptft/optimizer.hpp"

namespace ptft {
namespace {

std::span<const TokenId> active_ids(const Encoding& e) {
    return std::span<const TokenId>{e.ids}.first(e.active_length());
}

std::span<const std::uint8_t> active_mask(const Encoding& e) {
    return std::span<const std::uint8_t>{e.attention_mask}.first(e.active_length());
}

void check_dataset(const Model& model, const EncodedDataset& data, const char* what) {
    if (data.size() == 0) {
        throw Error(std::string{what} + " set is empty");
    }
    if (data.labels.size() != data.inputs.size()) {
        throw InvariantError(std::string{what} + " set: label count differs from input count");
    }
    if (model.task() == TaskKind::regression) {
        if (data.kind != LabelKind::real) {
            throw Error(std::string{what} + " set has class labels but the head has K=1 (regression)");
        }
        return;
    }
    if (data.kind != LabelKind::class_id) {
        throw Error(std::string{what} + " set has real labels but the head has K=" + std::to_string(model.num_labels));
    }
    for (double y : data.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= model.num_labels) {
            throw Error(std::string{what} + " set has class id " + std::to_string(static_cast<long long>(y)) +
                        " but the head has K=" + std::to_string(model.num_labels));
        }
    }
}

}  // namespace

std::string_view task_kind_name(TaskKind kind) noexcept {
    return kind == TaskKind::classification ? "classification" : "regression";
}

// --- model ------------------------------------------------------------------

Checkpoint Model::to_checkpoint(const nlohmann::json& extra) const {
    Checkpoint ck{config, params, nlohmann::json::object()};
    ck.metadata["num_labels"] = num_labels;
    ck.metadata["task"] = task_kind_name(task());
    ck.metadata["label_names"] = label_names;
    for (const auto& [key, value] : extra.items()) {
        ck.metadata[key] = value;
    }
    return ck;
}

Model Model::from_checkpoint(const Checkpoint& checkpoint) {
    if (!checkpoint.metadata.contains("num_labels") || !checkpoint.params.contains(param_names::kHeadWeight) ||
        !checkpoint.params.contains(param_names::kHeadBias)) {
        throw InvariantError("checkpoint has no task head (was it produced by pretraining?)");
    }
    Model m;
    m.config = checkpoint.config;
    m.params = checkpoint.params;
    m.num_labels = checkpoint.metadata.at("num_labels").get<std::size_t>();
    m.label_names = checkpoint.metadata.value("label_names", std::vector<std::string>{});
    const Shape w_shape{m.config.hidden_size, m.num_labels};
    if (m.num_labels == 0 || m.params.at(param_names::kHeadWeight).shape() != w_shape ||
        m.params.at(param_names::kHeadBias).shape() != Shape{m.num_labels}) {
        throw InvariantError("checkpoint head shape does not match num_labels=" + std::to_string(m.num_labels));
    }
    return m;
}

Model attach_head(const Checkpoint& pretrained, HeadConfig head, Rng& rng, std::vector<std::string> label_names) {
    if (head.num_labels < 1) {
        throw Error("num_labels must be at least 1");
    }
    pretrained.config.validate();
    validate_parameters(pretrained.config, pretrained.params);
    Model m;
    m.config = pretrained.config;
    m.num_labels = head.num_labels;
    m.label_names = std::move(label_names);
    for (const auto& [name, tensor] : pretrained.params.entries()) {
        if (name != param_names::kHeadWeight && name != param_names::kHeadBias) {
            m.params.add(name, tensor);
        }
    }
    Tensor w{Shape{m.config.hidden_size, head.num_labels}};
    for (double& v : w.values()) {
        v = rng.normal(0.0, m.config.init_std);
    }
    m.params.add(param_names::kHeadWeight, std::move(w));
    m.params.add(param_names::kHeadBias, Tensor{Shape{head.num_labels}});
    return m;
}

// --- forward / loss -----------------------------------------------------------

namespace {

std::vector<double> apply_head(const Model& model, std::span<const double> pooled) {
    const Tensor& w = model.params.at(param_names::kHeadWeight);
    const Tensor& b = model.params.at(param_names::kHeadBias);
    std::vector<double> out(b.values().begin(), b.values().end());
    const std::size_t k_count = model.num_labels;
    for (std::size_t j = 0; j < pooled.size(); ++j) {
        const double hj = pooled[j];
        const double* wrow = w.data() + j * k_count;
        for (std::size_t k = 0; k < k_count; ++k) {
            out[k] += hj * wrow[k];
        }
    }
    return out;
}

}  // namespace

std::vector<double> head_output(const Model& model, const Encoding& input) {
    const Tensor h = encode_sequence(model.config, model.params, active_ids(input), active_mask(input));
    return apply_head(model, h.row(0));
}

double batch_loss(const Model& model, const EncodedDataset& data, std::span<const std::size_t> indices,
                  Rng* dropout_rng, Parameters* grads) {
    if (indices.empty()) {
        throw Error("batch_loss: empty batch");
    }
    const double scale = 1.0 / static_cast<double>(indices.size());
    const std::size_t width = model.config.hidden_size;
    const std::size_t k_count = model.num_labels;
    double total = 0.0;
    for (std::size_t idx : indices) {
        const Encoding& input = data.inputs.at(idx);
        const double label = data.labels.at(idx);
        EncoderTrace trace;
        const Tensor h = encode_sequence(model.config, model.params, active_ids(input), active_mask(input),
                                         dropout_rng, grads ? &trace : nullptr);
        const auto pooled = h.row(0);
        const std::vector<double> out = apply_head(model, pooled);
        std::vector<double> d_out(k_count, 0.0);
        if (model.task() == TaskKind::classification) {
            total += ops::cross_entropy_with_grad(out, static_cast<std::size_t>(label), d_out, scale);
        } else {
            const double target[1] = {label};
            total += ops::mse_with_grad(out, target, d_out, scale);
        }
        if (grads == nullptr) {
            continue;
        }
        Tensor& dw = grads->at(param_names::kHeadWeight);
        Tensor& db = grads->at(param_names::kHeadBias);
        const Tensor& w = model.params.at(param_names::kHeadWeight);
        Tensor d_h{h.shape()};
        for (std::size_t j = 0; j < width; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < k_count; ++k) {
                dw(j, k) += pooled[j] * d_out[k];
                acc += w(j, k) * d_out[k];
            }
            d_h(0, j) = acc;
        }
        for (std::size_t k = 0; k < k_count; ++k) {
            db[k] += d_out[k];
        }
        encode_sequence_backward(model.config, model.params, trace, d_h, *grads);
    }
    return total * scale;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) {
        throw Error("argmax of an empty vector");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

std::vector<double> predict(const Model& model, std::span<const Encoding> inputs, std::size_t batch_size) {
    if (batch_size == 0) {
        throw Error("batch size must be at least 1");
    }
    std::vector<double> out;
    out.reserve(inputs.size());
    // Samples are independent, so batching only bounds working-set size.
    for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
        const std::size_t end = std::min(inputs.size(), start + batch_size);
        for (std::size_t i = start; i < end; ++i) {
            const auto y = head_output(model, inputs[i]);
            out.push_back(model.task() == TaskKind::classification ? static_cast<double>(argmax(y)) : y[0]);
        }
    }
    return out;
}

Evaluation evaluate(const Model& model, const EncodedDataset& data, std::size_t batch_size) {
    check_dataset(model, data, "evaluation");
    Evaluation ev;
    ev.predictions = predict(model, data.inputs, batch_size);
    if (model.task() == TaskKind::classification) {
        std::vector<int> y_true, y_pred;
        for (std::size_t i = 0; i < data.size(); ++i) {
            y_true.push_back(static_cast<int>(data.labels[i]));
            y_pred.push_back(static_cast<int>(ev.predictions[i]));
        }
        const auto report = classification_report(y_true, y_pred);
        ev.metrics = metric_set(report);
        ev.report = report_to_json(report, model.label_names);
    } else {
        const auto report = regression_report(ev.predictions, data.labels);
        ev.metrics = metric_set(report);
        ev.report = report_to_json(report);
    }
    return ev;
}

// --- configuration ----------------------------------------------------------

bool TrainingConfig::greater() const {
    return greater_is_better.value_or(default_greater_is_better(metric_for_best_model));
}

void TrainingConfig::validate() const {
    if (per_device_train_batch_size < 1 || per_device_eval_batch_size < 1) {
        throw Error("batch sizes must be at least 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw Error("learning_rate must be positive");
    }
    if (!(weight_decay >= 0.0)) {
        throw Error("weight_decay must be non-negative");
    }
    if (logging_steps < 1) {
        throw Error("logging_steps must be at least 1");
    }
    if (!is_supported_metric(metric_for_best_model)) {
        throw Error("unsupported metric_for_best_model '" + metric_for_best_model +
                    "' (expected precision, recall, f1, accuracy, mse, rmse or pearson_r)");
    }
    if (max_length < 2) {
        throw Error("max_length must be at least 2");
    }
}

nlohmann::json TrainingConfig::to_json() const {
    return {{"num_train_epochs", num_train_epochs},
            {"per_device_train_batch_size", per_device_train_batch_size},
            {"per_device_eval_batch_size", per_device_eval_batch_size},
            {"learning_rate", learning_rate},
            {"warmup_steps", warmup_steps},
            {"weight_decay", weight_decay},
            {"logging_steps", logging_steps},
            {"seed", seed},
            {"metric_for_best_model", metric_for_best_model},
            {"greater_is_better", greater()},
            {"max_length", max_length},
            {"max_grad_norm", max_grad_norm},
            {"fp16", fp16}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) {
        throw Error("training config must be a JSON object");
    }
    TrainingConfig c;
    for (const auto& [key, value] : doc.items()) {
        try {
            if (key == "num_train_epochs") {
                c.num_train_epochs = value.get<std::size_t>();
            } else if (key == "per_device_train_batch_size") {
                c.per_device_train_batch_size = value.get<std::size_t>();
            } else if (key == "per_device_eval_batch_size") {
                c.per_device_eval_batch_size = value.get<std::size_t>();
            } else if (key == "learning_rate") {
                c.learning_rate = value.get<double>();
            } else if (key == "warmup_steps") {
                c.warmup_steps = value.get<std::size_t>();
            } else if (key == "weight_decay") {
                c.weight_decay = value.get<double>();
            } else if (key == "logging_steps") {
                c.logging_steps = value.get<std::size_t>();
            } else if (key == "seed") {
                c.seed = value.get<std::uint64_t>();
            } else if (key == "metric_for_best_model") {
                c.metric_for_best_model = value.get<std::string>();
            } else if (key == "greater_is_better") {
                if (!value.is_null()) {
                    c.greater_is_better = value.get<bool>();
                }
            } else if (key == "max_length") {
                c.max_length = value.get<std::size_t>();
            } else if (key == "max_grad_norm") {
                c.max_grad_norm = value.get<double>();
            } else if (key == "fp16") {
                c.fp16 = value.get<bool>();
            } else {
                throw Error("unknown training key '" + key + "'");
            }
        } catch (const nlohmann::json::exception&) {
            throw Error("training key '" + key + "' has the wrong type: " + value.dump());
        }
    }
    c.validate();
    return c;
}

nlohmann::json EpochRecord::to_json() const {
    nlohmann::json dev = nlohmann::json::object();
    for (const auto& [name, value] : dev_metrics) {
        dev[name] = value;
    }
    return {{"epoch", epoch}, {"train_loss", train_loss}, {"dev", dev}};
}

// --- training ---------------------------------------------------------------

std::size_t select_best_epoch(std::span<const double> values, bool greater_is_better) {
    if (values.empty()) {
        throw Error("select_best_epoch: no epochs");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        const bool better = greater_is_better ? values[i] > values[best] : values[i] < values[best];
        if (better) {
            best = i;
        }
    }
    return best;
}

std::string loss_log_tsv(std::span<const StepLog> steps) {
    std::ostringstream out;
    out.precision(17);
    out << "step\tepoch\tloss\n";
    for (const auto& s : steps) {
        out << s.step << '\t' << s.epoch << '\t' << s.loss << '\n';
    }
    return out.str();
}

TrainResult train(const TrainingConfig& config, Model model, const EncodedDataset& train_set,
                  const EncodedDataset& dev_set, const EpochCallback& on_epoch) {
    config.validate();
    const bool classification_metric = is_classification_metric(config.metric_for_best_model);
    if (classification_metric != (model.task() == TaskKind::classification)) {
        throw Error("metric_for_best_model '" + config.metric_for_best_model + "' does not fit a " +
                    std::string{task_kind_name(model.task())} + " head");
    }
    check_dataset(model, train_set, "training");
    check_dataset(model, dev_set, "dev");

    TrainResult result;
    result.best = model;
    AdamW optimizer{model.params, AdamWConfig{.weight_decay = config.weight_decay}};
    Parameters grads = model.params.zeros_like();
    std::vector<double> history;
    std::size_t step = 0;
    double window_loss = 0.0;
    std::size_t window_steps = 0;

    for (std::size_t epoch = 1; epoch <= config.num_train_epochs; ++epoch) {
        const auto batches =
            make_batches(train_set.size(), config.per_device_train_batch_size, true, config.seed, epoch);
        Rng dropout_rng = Rng::derive(config.seed ^ 0x5eedd0d0ULL, epoch);
        Rng* dropout = model.config.dropout > 0.0 ? &dropout_rng : nullptr;
        double epoch_loss = 0.0;
        for (const auto& batch : batches) {
            grads.zero();
            const double loss = batch_loss(model, train_set, batch, dropout, &grads);
            clip_grad_norm(grads, config.max_grad_norm);
            ++step;
            optimizer.step(model.params, grads, scheduled_learning_rate(config.learning_rate, config.warmup_steps, step));
            epoch_loss += loss * static_cast<double>(batch.size());
            window_loss += loss;
            ++window_steps;
            if (step % config.logging_steps == 0) {
                result.steps.push_back({step, epoch, window_loss / static_cast<double>(window_steps)});
                window_loss = 0.0;
                window_steps = 0;
            }
        }
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = epoch_loss / static_cast<double>(train_set.size());
        record.dev_metrics = evaluate(model, dev_set, config.per_device_eval_batch_size).metrics;
        const double value = record.dev_metrics.at(config.metric_for_best_model);
        history.push_back(value);
        if (select_best_epoch(history, config.greater()) == history.size() - 1) {
            result.best = model;
            result.best_epoch = epoch;
        }
        result.epochs.push_back(record);
        if (on_epoch) {
            on_epoch(record, model);
        }
    }
    return result;
}

GridResult grid_search(const TrainingConfig& base, std::span<const nlohmann::json> overrides,
                       const std::function<Model(const TrainingConfig&)>& factory, const EncodedDataset& train_set,
                       const EncodedDataset& dev_set, const EpochCallback& on_epoch) {
    if (overrides.empty()) {
        throw Error("grid_search: empty grid");
    }
    GridResult out;
    std::vector<double> scores;
    for (const auto& delta : overrides) {
        nlohmann::json merged = base.to_json();
        if (!base.greater_is_better) {
            merged.erase("greater_is_better");
        }
        merged.update(delta);
        GridPoint point;
        point.overrides = delta;
        point.config = TrainingConfig::from_json(merged);
        TrainResult run = train(point.config, factory(point.config), train_set, dev_set, on_epoch);
        if (run.best_epoch == 0) {
            throw Error("grid_search: a grid point ran zero epochs, nothing to compare");
        }
        point.best_epoch = run.best_epoch;
        point.dev_metric = run.epochs[run.best_epoch - 1].dev_metrics.at(point.config.metric_for_best_model);
        scores.push_back(point.dev_metric);
        const bool greater = point.config.greater();
        if (scores.size() == 1 || select_best_epoch(scores, greater) == scores.size() - 1) {
            out.best_index = scores.size() - 1;
            out.best = std::move(run);
        }
        out.table.push_back(std::move(point));
    }
    return out;
}

}  // namespace ptft
