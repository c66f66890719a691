#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptft/checkpoint.hpp"
#include "ptft/finetune.hpp"
#include "ptft/model.hpp"
#include "ptft/tokenizer.hpp"

namespace ptft {

inline constexpr TokenId kIgnoreLabel = -1;

struct MaskingConfig {
    double mask_prob = 0.15;
    double mask_token_ratio = 0.8;    // selected -> [MASK]
    double random_token_ratio = 0.1;  // selected -> random non-special id; the rest stay unchanged

    void validate() const;
};

struct MaskedSequence {
    std::vector<TokenId> input_ids;
    std::vector<TokenId> labels;  // original id where selected, kIgnoreLabel elsewhere
    std::vector<std::uint8_t> attention_mask;

    std::size_t labeled_count() const noexcept;
};

/// Selects each non-special position with probability mask_prob and corrupts
/// it by the configured ratios. Length and attention mask are preserved.
MaskedSequence mask_tokens(const Encoding& input, const MaskingConfig& config, std::size_t vocab_size, Rng& rng);

/// Mean cross-entropy over every labeled position in the batch. Vocabulary
/// logits are h . E^T + mlm.bias with E the token embedding. Returns 0 when
/// nothing is labeled. Gradients accumulate into grads when non-null.
double mlm_loss(const ModelConfig& config, const Parameters& params, std::span<const MaskedSequence> batch,
                Rng* dropout_rng = nullptr, Parameters* grads = nullptr);

/// Tokenizes the corpus as one stream and cuts it into windows of
/// max_length - 2 body tokens wrapped in CLS/SEP. A short tail is dropped.
/// Throws if the corpus does not fill one window.
std::vector<Encoding> chunk_corpus(const Tokenizer& tokenizer, std::string_view text, std::size_t max_length);

struct PretrainConfig {
    std::size_t num_train_epochs = 5;
    std::size_t per_device_train_batch_size = 16;
    double learning_rate = 1e-3;
    std::size_t warmup_steps = 0;
    double weight_decay = 0.01;
    std::size_t logging_steps = 10;
    std::uint64_t seed = 42;
    std::size_t max_length = 64;
    double dev_fraction = 0.1;
    double max_grad_norm = 1.0;
    MaskingConfig masking;
    std::size_t early_stopping_patience = 2;
    double early_stopping_min_delta = 1e-3;

    void validate() const;
    nlohmann::json to_json() const;
    static PretrainConfig from_json(const nlohmann::json& doc);
};

struct PretrainEpoch {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_loss = 0.0;
};

struct PretrainResult {
    Checkpoint checkpoint;  // best dev epoch, or the initialization when no epoch ran
    std::size_t best_epoch = 0;
    double initial_dev_loss = 0.0;
    std::vector<PretrainEpoch> epochs;
    std::vector<StepLog> steps;
    bool stopped_early = false;
    std::size_t train_chunks = 0;
    std::size_t dev_chunks = 0;
};

/// MLM pretraining with static masks and a held-out dev slice of the chunks.
/// Stops after `num_train_epochs` or once the dev loss has failed to improve
/// by more than min_delta for `patience` consecutive epochs.
/// model_config.vocab_size 0 means "take it from the tokenizer".
PretrainResult run_pretraining(const PretrainConfig& config, std::string_view corpus, const Tokenizer& tokenizer,
                               ModelConfig model_config);

}  // namespace ptft
