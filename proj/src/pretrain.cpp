#include "ptft/pretrain.hpp"

#include <algorithm>
#include <cmath>

#include "ptft/error.hpp"
#include "ptft/optimizer.hpp"

namespace ptft {

void MaskingConfig::validate() const {
    if (!(mask_prob >= 0.0 && mask_prob < 1.0)) {
        throw Error("mask_prob must lie in [0, 1)");
    }
    if (!(mask_token_ratio >= 0.0 && random_token_ratio >= 0.0 && mask_token_ratio + random_token_ratio <= 1.0)) {
        throw Error("mask_token_ratio and random_token_ratio must be non-negative and sum to at most 1");
    }
}

std::size_t MaskedSequence::labeled_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](TokenId l) { return l != kIgnoreLabel; }));
}

MaskedSequence mask_tokens(const Encoding& input, const MaskingConfig& config, std::size_t vocab_size, Rng& rng) {
    config.validate();
    MaskedSequence out{input.ids, std::vector<TokenId>(input.ids.size(), kIgnoreLabel), input.attention_mask};
    const std::size_t ordinary = vocab_size > special::kCount ? vocab_size - special::kCount : 0;
    for (std::size_t i = 0; i < input.ids.size(); ++i) {
        const TokenId id = input.ids[i];
        if (special::is_special(id) || !rng.bernoulli(config.mask_prob)) {
            continue;
        }
        out.labels[i] = id;
        const double r = rng.uniform();
        if (r < config.mask_token_ratio) {
            out.input_ids[i] = special::kMask;
        } else if (r < config.mask_token_ratio + config.random_token_ratio && ordinary > 0) {
            out.input_ids[i] = static_cast<TokenId>(special::kCount + rng.below(ordinary));
        }
    }
    return out;
}

double mlm_loss(const ModelConfig& config, const Parameters& params, std::span<const MaskedSequence> batch,
                Rng* dropout_rng, Parameters* grads) {
    std::size_t labeled = 0;
    for (const auto& seq : batch) {
        labeled += seq.labeled_count();
    }
    if (labeled == 0) {
        return 0.0;
    }
    const double scale = 1.0 / static_cast<double>(labeled);
    const Tensor& emb = params.at(param_names::kTokenEmbedding);
    const Tensor& bias = params.at(param_names::kMlmBias);
    const std::size_t vocab = emb.rows();
    const std::size_t width = emb.cols();
    std::vector<double> logits(vocab);
    std::vector<double> d_logits(vocab);
    double total = 0.0;
    for (const auto& seq : batch) {
        if (seq.labeled_count() == 0) {
            continue;
        }
        const std::size_t active = static_cast<std::size_t>(
            std::count(seq.attention_mask.begin(), seq.attention_mask.end(), std::uint8_t{1}));
        const auto ids = std::span<const TokenId>{seq.input_ids}.first(active);
        const auto mask = std::span<const std::uint8_t>{seq.attention_mask}.first(active);
        EncoderTrace trace;
        const Tensor h = encode_sequence(config, params, ids, mask, dropout_rng, grads ? &trace : nullptr);
        Tensor d_h{h.shape()};
        for (std::size_t t = 0; t < active; ++t) {
            const TokenId target = seq.labels[t];
            if (target == kIgnoreLabel) {
                continue;
            }
            const auto ht = h.row(t);
            for (std::size_t v = 0; v < vocab; ++v) {
                const double* ev = emb.data() + v * width;
                double acc = bias[v];
                for (std::size_t j = 0; j < width; ++j) {
                    acc += ht[j] * ev[j];
                }
                logits[v] = acc;
            }
            if (grads == nullptr) {
                total += ops::cross_entropy(logits, static_cast<std::size_t>(target));
                continue;
            }
            std::fill(d_logits.begin(), d_logits.end(), 0.0);
            total += ops::cross_entropy_with_grad(logits, static_cast<std::size_t>(target), d_logits, scale);
            Tensor& d_emb = grads->at(param_names::kTokenEmbedding);
            Tensor& d_bias = grads->at(param_names::kMlmBias);
            double* dht = d_h.data() + t * width;
            for (std::size_t v = 0; v < vocab; ++v) {
                const double g = d_logits[v];
                d_bias[v] += g;
                const double* ev = emb.data() + v * width;
                double* dev = d_emb.data() + v * width;
                for (std::size_t j = 0; j < width; ++j) {
                    dev[j] += g * ht[j];
                    dht[j] += g * ev[j];
                }
            }
        }
        if (grads != nullptr) {
            encode_sequence_backward(config, params, trace, d_h, *grads);
        }
    }
    return total * scale;
}

std::vector<Encoding> chunk_corpus(const Tokenizer& tokenizer, std::string_view text, std::size_t max_length) {
    if (max_length < 3) {
        throw Error("pretraining max_length must be at least 3");
    }
    const std::vector<TokenId> stream = tokenizer.tokenize(text);
    const std::size_t body = max_length - 2;
    if (stream.size() < body) {
        throw Error("corpus has " + std::to_string(stream.size()) + " tokens, fewer than one chunk of " +
                    std::to_string(body));
    }
    std::vector<Encoding> chunks;
    for (std::size_t start = 0; start + body <= stream.size(); start += body) {
        Encoding e;
        e.ids.reserve(max_length);
        e.ids.push_back(special::kCls);
        e.ids.insert(e.ids.end(), stream.begin() + static_cast<std::ptrdiff_t>(start),
                     stream.begin() + static_cast<std::ptrdiff_t>(start + body));
        e.ids.push_back(special::kSep);
        e.attention_mask.assign(max_length, 1);
        chunks.push_back(std::move(e));
    }
    return chunks;
}

void PretrainConfig::validate() const {
    if (per_device_train_batch_size < 1) {
        throw Error("batch size must be at least 1");
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
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) {
        throw Error("dev_fraction must lie in (0, 1)");
    }
    if (max_length < 3) {
        throw Error("pretraining max_length must be at least 3");
    }
    if (early_stopping_patience < 1) {
        throw Error("early_stopping_patience must be at least 1");
    }
    masking.validate();
}

nlohmann::json PretrainConfig::to_json() const {
    return {{"num_train_epochs", num_train_epochs},
            {"per_device_train_batch_size", per_device_train_batch_size},
            {"learning_rate", learning_rate},
            {"warmup_steps", warmup_steps},
            {"weight_decay", weight_decay},
            {"logging_steps", logging_steps},
            {"seed", seed},
            {"max_length", max_length},
            {"dev_fraction", dev_fraction},
            {"max_grad_norm", max_grad_norm},
            {"mlm_probability", masking.mask_prob},
            {"mask_token_ratio", masking.mask_token_ratio},
            {"random_token_ratio", masking.random_token_ratio},
            {"early_stopping_patience", early_stopping_patience},
            {"early_stopping_min_delta", early_stopping_min_delta}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) {
        throw Error("pretraining config must be a JSON object");
    }
    PretrainConfig c;
    for (const auto& [key, value] : doc.items()) {
        try {
            if (key == "num_train_epochs") {
                c.num_train_epochs = value.get<std::size_t>();
            } else if (key == "per_device_train_batch_size") {
                c.per_device_train_batch_size = value.get<std::size_t>();
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
            } else if (key == "max_length") {
                c.max_length = value.get<std::size_t>();
            } else if (key == "dev_fraction") {
                c.dev_fraction = value.get<double>();
            } else if (key == "max_grad_norm") {
                c.max_grad_norm = value.get<double>();
            } else if (key == "mlm_probability") {
                c.masking.mask_prob = value.get<double>();
            } else if (key == "mask_token_ratio") {
                c.masking.mask_token_ratio = value.get<double>();
            } else if (key == "random_token_ratio") {
                c.masking.random_token_ratio = value.get<double>();
            } else if (key == "early_stopping_patience") {
                c.early_stopping_patience = value.get<std::size_t>();
            } else if (key == "early_stopping_min_delta") {
                c.early_stopping_min_delta = value.get<double>();
            } else {
                throw Error("unknown pretraining key '" + key + "'");
            }
        } catch (const nlohmann::json::exception&) {
            throw Error("pretraining key '" + key + "' has the wrong type: " + value.dump());
        }
    }
    c.validate();
    return c;
}

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kDevStream = 0x646576ULL;
constexpr std::uint64_t kMaskStream = 0x6d61736bULL;
constexpr std::uint64_t kDropoutStream = 0x64726f70ULL;

std::vector<MaskedSequence> gather(const std::vector<MaskedSequence>& all, std::span<const std::size_t> idx) {
    std::vector<MaskedSequence> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        out.push_back(all[i]);
    }
    return out;
}

}  // namespace

PretrainResult run_pretraining(const PretrainConfig& config, std::string_view corpus, const Tokenizer& tokenizer,
                               ModelConfig model_config) {
    config.validate();
    if (model_config.vocab_size == 0) {
        model_config.vocab_size = tokenizer.vocab_size();
    }
    if (model_config.vocab_size != tokenizer.vocab_size()) {
        throw InvariantError("model vocab_size " + std::to_string(model_config.vocab_size) +
                             " differs from tokenizer vocabulary " + std::to_string(tokenizer.vocab_size()));
    }
    if (model_config.max_positions < config.max_length) {
        throw InvariantError("max_position_embeddings " + std::to_string(model_config.max_positions) +
                             " is below max_length " + std::to_string(config.max_length));
    }
    model_config.validate();

    const std::vector<Encoding> chunks = chunk_corpus(tokenizer, corpus, config.max_length);
    if (chunks.size() < 2) {
        throw Error("corpus yields a single chunk; need at least one for training and one for dev");
    }
    std::vector<std::size_t> order(chunks.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng split_rng = Rng::derive(config.seed, kDevStream);
    split_rng.shuffle(std::span<std::size_t>{order});
    const std::size_t n_dev = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(config.dev_fraction * static_cast<double>(chunks.size()) - 1e-9)), 1,
        chunks.size() - 1);

    std::vector<MaskedSequence> dev_set, train_set;
    for (std::size_t k = 0; k < order.size(); ++k) {
        Rng mask_rng = Rng::derive(config.seed ^ kMaskStream, order[k]);
        auto masked = mask_tokens(chunks[order[k]], config.masking, model_config.vocab_size, mask_rng);
        (k < n_dev ? dev_set : train_set).push_back(std::move(masked));
    }

    Rng init_rng = Rng::derive(config.seed, kInitStream);
    Parameters params = init_encoder_parameters(model_config, init_rng);

    PretrainResult result;
    result.train_chunks = train_set.size();
    result.dev_chunks = dev_set.size();
    result.initial_dev_loss = mlm_loss(model_config, params, dev_set);
    Parameters best_params = params;
    double best_dev = result.initial_dev_loss;
    double reference_dev = result.initial_dev_loss;  // for the patience counter
    std::size_t stale_epochs = 0;

    AdamW optimizer{params, AdamWConfig{.weight_decay = config.weight_decay}};
    Parameters grads = params.zeros_like();
    std::size_t step = 0;
    double window_loss = 0.0;
    std::size_t window_steps = 0;

    for (std::size_t epoch = 1; epoch <= config.num_train_epochs; ++epoch) {
        const auto batches =
            make_batches(train_set.size(), config.per_device_train_batch_size, true, config.seed, epoch);
        Rng dropout_rng = Rng::derive(config.seed ^ kDropoutStream, epoch);
        Rng* dropout = model_config.dropout > 0.0 ? &dropout_rng : nullptr;
        double loss_sum = 0.0;
        std::size_t labeled_sum = 0;
        for (const auto& batch_idx : batches) {
            const auto batch = gather(train_set, batch_idx);
            std::size_t labeled = 0;
            for (const auto& s : batch) {
                labeled += s.labeled_count();
            }
            if (labeled == 0) {
                continue;
            }
            grads.zero();
            const double loss = mlm_loss(model_config, params, batch, dropout, &grads);
            clip_grad_norm(grads, config.max_grad_norm);
            ++step;
            optimizer.step(params, grads, scheduled_learning_rate(config.learning_rate, config.warmup_steps, step));
            loss_sum += loss * static_cast<double>(labeled);
            labeled_sum += labeled;
            window_loss += loss;
            ++window_steps;
            if (step % config.logging_steps == 0) {
                result.steps.push_back({step, epoch, window_loss / static_cast<double>(window_steps)});
                window_loss = 0.0;
                window_steps = 0;
            }
        }
        PretrainEpoch record;
        record.epoch = epoch;
        record.train_loss = labeled_sum > 0 ? loss_sum / static_cast<double>(labeled_sum) : 0.0;
        record.dev_loss = mlm_loss(model_config, params, dev_set);
        result.epochs.push_back(record);
        if (record.dev_loss < best_dev) {
            best_dev = record.dev_loss;
            best_params = params;
            result.best_epoch = epoch;
        }
        if (record.dev_loss < reference_dev - config.early_stopping_min_delta) {
            reference_dev = record.dev_loss;
            stale_epochs = 0;
        } else if (++stale_epochs >= config.early_stopping_patience) {
            result.stopped_early = epoch < config.num_train_epochs;
            break;
        }
    }
    result.checkpoint.config = model_config;
    result.checkpoint.params = std::move(best_params);
    result.checkpoint.metadata = {{"kind", "pretrained"},
                                  {"best_epoch", result.best_epoch},
                                  {"dev_loss", best_dev},
                                  {"initial_dev_loss", result.initial_dev_loss}};
    return result;
}

}  // namespace ptft
